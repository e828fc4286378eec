//! Command-line front end: `analyze`, `simulate` and `plot`.
//!
//! Exit codes: 0 success, 2 input or flag error, 3 data invariant violation,
//! 4 numerical non-convergence.

mod analyze;
mod plot;
mod simulate;

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::fmt;
use std::io::Write;

pub use analyze::{read_studies, AnalyzeArgs, OutputFormat};
pub use plot::{PlotArgs, SizeFamily};
pub use simulate::{parse_levels, Levels, SimulateArgs, RESULTS_HEADER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "smdmeta",
    version,
    about = "Random-effects meta-analysis of standardized mean differences"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate heterogeneity and the overall effect from a study CSV.
    Analyze(AnalyzeArgs),
    /// Run simulation cells and write a long-format results CSV.
    Simulate(SimulateArgs),
    /// Draw panel figures (SVG) from a results CSV.
    Plot(PlotArgs),
}

/// A failure carrying its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVARIANT,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }

    pub fn io(context: &str, e: impl fmt::Display) -> Self {
        Self::input(format!("{context}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Parse `args` (including the program name), run the command and return the
/// exit code. Normal output goes to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                write!(out, "{text}")
            } else {
                write!(err, "{text}")
            };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze::cmd_analyze(a, out, err),
        Command::Simulate(a) => simulate::cmd_simulate(a, err),
        Command::Plot(a) => plot::cmd_plot(a, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

/// Entry point used by the `smdmeta` binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run(args, &mut stdout.lock(), &mut stderr.lock());
    let _ = std::io::stdout().flush();
    code
}

/// Round to nine significant digits and print the shortest decimal that
/// reads back as the rounded value.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let plain = format!("{rounded}");
    let sci = format!("{rounded:e}");
    if plain.len() <= sci.len() {
        plain
    } else {
        sci
    }
}
