fn main() {
    std::process::exit(smd_meta::cli::main_with_args(std::env::args_os()));
}
