use super::{CliError, EXIT_INVARIANT, EXIT_NUMERICAL, EXIT_OK};
use crate::analysis::{analyze, Analysis};
use crate::effect::{EffectCiMethod, Weighting};
use crate::error::Error;
use crate::qstat::MetaInput;
use crate::smd::{hedges_g, ArmSummary, Study};
use crate::tau2::{Tau2CiMethod, Tau2Method, Tau2Status};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// CSV with columns study_id, n_t, n_c and either mean_t, sd_t, mean_c, sd_c or g, var_g.
    pub input: PathBuf,
    /// Between-study variance estimators to report (DL, REML, MP, J, KDB); also
    /// selects the matching inverse-variance effect estimates.
    #[arg(long, value_delimiter = ',', value_parser = parse_tau2_method)]
    pub tau2: Vec<Tau2Method>,
    /// Between-study variance intervals to report (QP, BJ, J, PL, KDB).
    #[arg(long = "tau2-ci", value_delimiter = ',', value_parser = parse_tau2_ci)]
    pub tau2_ci: Vec<Tau2CiMethod>,
    /// Overall-effect intervals to report (Z-DL, ..., HKSJ, HKSJ-KDB, SSW-KDB).
    #[arg(long = "effect-ci", value_delimiter = ',', value_parser = parse_effect_ci)]
    pub effect_ci: Vec<EffectCiMethod>,
    /// Confidence level, strictly between 0.5 and 1.
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_tau2_method(s: &str) -> Result<Tau2Method, String> {
    Tau2Method::parse(s).ok_or_else(|| format!("unknown tau2 method '{s}'"))
}

fn parse_tau2_ci(s: &str) -> Result<Tau2CiMethod, String> {
    Tau2CiMethod::parse(s).ok_or_else(|| format!("unknown tau2 interval '{s}'"))
}

fn parse_effect_ci(s: &str) -> Result<EffectCiMethod, String> {
    EffectCiMethod::parse(s).ok_or_else(|| format!("unknown effect interval '{s}'"))
}

pub(crate) fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.5 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level {v} must lie strictly between 0.5 and 1"))
    }
}

const RAW: [&str; 4] = ["mean_t", "sd_t", "mean_c", "sd_c"];
const PRE: [&str; 2] = ["g", "var_g"];
const ID: [&str; 3] = ["study_id", "n_t", "n_c"];

/// Read a study CSV. Malformed content gives exit 2, values that break a
/// model invariant (arm size below 2, negative sd, K < 2) give exit 3.
pub fn read_studies(path: &Path) -> Result<(Vec<String>, MetaInput), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(&format!("{}", path.display()), e))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("{}: header: {e}", path.display())))?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    for h in headers.iter() {
        if !ID.contains(&h) && !RAW.contains(&h) && !PRE.contains(&h) {
            return Err(CliError::input(format!("header: unknown column '{h}'")));
        }
    }
    let ids: Vec<usize> = ID
        .iter()
        .map(|c| column(c).ok_or_else(|| CliError::input(format!("header: missing column '{c}'"))))
        .collect::<Result<_, _>>()?;
    let raw: Option<Vec<usize>> = RAW.iter().map(|c| column(c)).collect();
    let pre: Option<Vec<usize>> = PRE.iter().map(|c| column(c)).collect();
    if raw.is_none() && pre.is_none() {
        return Err(CliError::input(
            "header: need either mean_t, sd_t, mean_c, sd_c or g, var_g",
        ));
    }

    let mut names = Vec::new();
    let mut studies = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| record.get(i).unwrap_or("");
        let number = |i: usize| -> Result<f64, CliError> {
            field(i).parse::<f64>().map_err(|_| {
                CliError::input(format!(
                    "line {line}, column {}: '{}' is not a number",
                    &headers[i],
                    field(i)
                ))
            })
        };
        let size = |i: usize| -> Result<u32, CliError> {
            field(i).parse::<u32>().map_err(|_| {
                CliError::input(format!(
                    "line {line}, column {}: '{}' is not a nonnegative integer",
                    &headers[i],
                    field(i)
                ))
            })
        };
        let filled = |cols: &Option<Vec<usize>>| -> usize {
            cols.as_ref()
                .map_or(0, |c| c.iter().filter(|&&i| !field(i).is_empty()).count())
        };
        let (n_raw, n_pre) = (filled(&raw), filled(&pre));
        let invariant =
            |e: Error| CliError::invariant(format!("line {line}, study '{}': {e}", field(ids[0])));
        let (n_t, n_c) = (size(ids[1])?, size(ids[2])?);
        let study = match (n_raw, n_pre) {
            (4, 0) => {
                let c = raw.as_ref().expect("raw columns present");
                let t = ArmSummary::new(n_t, number(c[0])?, number(c[1])?).map_err(invariant)?;
                let k = ArmSummary::new(n_c, number(c[2])?, number(c[3])?).map_err(invariant)?;
                hedges_g(&t, &k).map_err(invariant)?
            }
            (0, 2) => {
                let c = pre.as_ref().expect("g columns present");
                Study::new(n_t, n_c, number(c[0])?, number(c[1])?).map_err(invariant)?
            }
            (0, 0) => {
                return Err(CliError::input(format!("line {line}: no effect data")));
            }
            _ => {
                return Err(CliError::input(format!(
                    "line {line}: mixed or incomplete row; fill exactly one of \
                     (mean_t, sd_t, mean_c, sd_c) or (g, var_g)"
                )));
            }
        };
        names.push(field(ids[0]).to_string());
        studies.push(study);
    }
    let input = MetaInput::new(studies).map_err(|e| CliError::invariant(e.to_string()))?;
    Ok((names, input))
}

fn or_all<T: Copy + PartialEq>(chosen: &[T], all: &[T]) -> Vec<T> {
    if chosen.is_empty() {
        all.to_vec()
    } else {
        all.iter().copied().filter(|m| chosen.contains(m)).collect()
    }
}

struct Selection {
    tau2: Vec<Tau2Method>,
    tau2_ci: Vec<Tau2CiMethod>,
    effects: Vec<Weighting>,
    effect_ci: Vec<EffectCiMethod>,
}

impl Selection {
    fn from_args(a: &AnalyzeArgs) -> Self {
        let tau2 = or_all(&a.tau2, &Tau2Method::ALL);
        let effects = Weighting::ALL
            .into_iter()
            .filter(|w| match w {
                Weighting::InverseVariance(m) => tau2.contains(m),
                Weighting::EffectiveSize => true,
            })
            .collect();
        Self {
            tau2,
            tau2_ci: or_all(&a.tau2_ci, &Tau2CiMethod::ALL),
            effects,
            effect_ci: or_all(&a.effect_ci, &EffectCiMethod::ALL),
        }
    }
}

fn status_name(s: Tau2Status) -> &'static str {
    match s {
        Tau2Status::Interior => "interior",
        Tau2Status::TruncatedAtZero => "truncated at 0",
        Tau2Status::MaxIter => "iteration limit",
    }
}

fn num(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        format!("{x:.6}")
    }
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn text_report(a: &Analysis, sel: &Selection, names: &[String]) -> String {
    let mut s = String::new();
    let mut line = |t: String| {
        s.push_str(t.trim_end());
        s.push('\n');
    };
    line(format!("Studies: {} ({})", names.len(), names.join(", ")));
    line(format!("Confidence level: {}", a.level));
    match &a.expected_q {
        Ok(e) => line(format!("Corrected expected Q (KDB): {}", num(*e))),
        Err(e) => line(format!("Corrected expected Q (KDB): failed: {e}")),
    }
    line(String::new());
    line("Between-study variance".into());
    line(format!("  {:<10}{:>14}  {}", "method", "tau2", "status"));
    for m in &sel.tau2 {
        match a.tau2_of(*m) {
            Ok(t) => line(format!(
                "  {:<10}{:>14}  {}",
                m.name(),
                num(t.value),
                status_name(t.status)
            )),
            Err(e) => line(format!("  {:<10}{:>14}  {e}", m.name(), "failed")),
        }
    }
    line(String::new());
    line(format!(
        "Between-study variance intervals ({}%)",
        a.level * 100.0
    ));
    line(format!(
        "  {:<10}{:>14}{:>14}  {}",
        "method", "lower", "upper", "flags"
    ));
    for m in &sel.tau2_ci {
        match a.tau2_ci_of(*m) {
            Ok(ci) => {
                let mut flags = Vec::new();
                if ci.lo_truncated {
                    flags.push("lower truncated at 0");
                }
                if ci.hi_truncated {
                    flags.push("upper truncated at 0");
                }
                if ci.hi_infinite() {
                    flags.push("upper unbounded");
                }
                if ci.flat {
                    flags.push("flat likelihood");
                }
                line(format!(
                    "  {:<10}{:>14}{:>14}  {}",
                    m.name(),
                    num(ci.lo),
                    num(ci.hi),
                    flags.join(", ")
                ))
            }
            Err(e) => line(format!("  {:<10}{:>14}{:>14}  {e}", m.name(), "failed", "")),
        }
    }
    line(String::new());
    line("Overall effect".into());
    line(format!(
        "  {:<10}{:>14}{:>14}",
        "weights", "estimate", "std.error"
    ));
    for w in &sel.effects {
        match a.effect_of(*w) {
            Ok(r) => line(format!(
                "  {:<10}{:>14}{:>14}",
                w.name(),
                num(r.value),
                num(r.variance.sqrt())
            )),
            Err(e) => line(format!("  {:<10}{:>14}  {e}", w.name(), "failed")),
        }
    }
    line(String::new());
    line(format!("Overall effect intervals ({}%)", a.level * 100.0));
    line(format!(
        "  {:<10}{:>14}{:>14}  {}",
        "method", "lower", "upper", "flags"
    ));
    for c in &sel.effect_ci {
        match a.effect_ci_of(*c) {
            Ok(ci) => line(format!(
                "  {:<10}{:>14}{:>14}  {}",
                c.name(),
                num(ci.lo()),
                num(ci.hi()),
                if ci.degenerate {
                    "degenerate (zero width)"
                } else {
                    ""
                }
            )),
            Err(e) => line(format!("  {:<10}{:>14}{:>14}  {e}", c.name(), "failed", "")),
        }
    }
    s
}

fn json_report(a: &Analysis, sel: &Selection, names: &[String]) -> Value {
    let err = |e: &Error| json!({ "error": e.to_string() });
    let tau2: Vec<Value> = sel
        .tau2
        .iter()
        .map(|m| {
            let mut v = match a.tau2_of(*m) {
                Ok(t) => json!({
                    "value": t.value,
                    "truncated": t.is_truncated(),
                    "status": status_name(t.status),
                    "iterations": t.iterations,
                }),
                Err(e) => err(e),
            };
            v["method"] = json!(m.name());
            v
        })
        .collect();
    let tau2_ci: Vec<Value> = sel
        .tau2_ci
        .iter()
        .map(|m| {
            let mut v = match a.tau2_ci_of(*m) {
                Ok(ci) => json!({
                    "lower": ci.lo,
                    "upper": finite_or_null(ci.hi),
                    "upper_unbounded": ci.hi_infinite(),
                    "lower_truncated": ci.lo_truncated,
                    "upper_truncated": ci.hi_truncated,
                    "flat": ci.flat,
                }),
                Err(e) => err(e),
            };
            v["method"] = json!(m.name());
            v
        })
        .collect();
    let effects: Vec<Value> = sel
        .effects
        .iter()
        .map(|w| {
            let mut v = match a.effect_of(*w) {
                Ok(r) => json!({
                    "value": r.value,
                    "variance": r.variance,
                    "weights": r.weights,
                }),
                Err(e) => err(e),
            };
            v["method"] = json!(w.name());
            v
        })
        .collect();
    let effect_ci: Vec<Value> = sel
        .effect_ci
        .iter()
        .map(|c| {
            let mut v = match a.effect_ci_of(*c) {
                Ok(ci) => json!({
                    "lower": ci.lo(),
                    "upper": ci.hi(),
                    "center": ci.center,
                    "half_width": ci.half_width,
                    "degenerate": ci.degenerate,
                }),
                Err(e) => err(e),
            };
            v["method"] = json!(c.name());
            v
        })
        .collect();
    json!({
        "studies": names,
        "k": names.len(),
        "level": a.level,
        "expected_q_kdb": match &a.expected_q { Ok(e) => json!(e), Err(e) => err(e) },
        "tau2": tau2,
        "tau2_intervals": tau2_ci,
        "effects": effects,
        "effect_intervals": effect_ci,
    })
}

/// Exit code implied by the failures among the reported estimators.
fn failure_code(a: &Analysis, sel: &Selection) -> i32 {
    let mut errors: Vec<&Error> = Vec::new();
    errors.extend(sel.tau2.iter().filter_map(|m| a.tau2_of(*m).as_ref().err()));
    errors.extend(
        sel.tau2_ci
            .iter()
            .filter_map(|m| a.tau2_ci_of(*m).as_ref().err()),
    );
    errors.extend(
        sel.effects
            .iter()
            .filter_map(|w| a.effect_of(*w).as_ref().err()),
    );
    errors.extend(
        sel.effect_ci
            .iter()
            .filter_map(|c| a.effect_ci_of(*c).as_ref().err()),
    );
    if errors.iter().any(|e| !e.is_numerical()) {
        EXIT_INVARIANT
    } else if !errors.is_empty() {
        EXIT_NUMERICAL
    } else {
        EXIT_OK
    }
}

pub(super) fn cmd_analyze(
    args: &AnalyzeArgs,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let (names, input) = read_studies(&args.input)?;
    let a = analyze(&input, args.level).map_err(|e| CliError::input(e.to_string()))?;
    let sel = Selection::from_args(args);
    let report = match args.format {
        OutputFormat::Text => text_report(&a, &sel, &names),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&json_report(&a, &sel, &names))
                .expect("report serializes");
            s.push('\n');
            s
        }
    };
    match &args.out {
        Some(path) => std::fs::write(path, report)
            .map_err(|e| CliError::io(&format!("{}", path.display()), e))?,
        None => out
            .write_all(report.as_bytes())
            .map_err(|e| CliError::io("stdout", e))?,
    }
    let code = failure_code(&a, &sel);
    if code != EXIT_OK {
        let _ = writeln!(err, "warning: some estimators failed; see the report");
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_both_styles_per_row() {
        let f = csv_file(
            "study_id,n_t,n_c,mean_t,sd_t,mean_c,sd_c,g,var_g\n\
             a,10,10,1.0,2.0,0.0,2.0,,\n\
             b,12,8,,,,,0.4,0.2\n",
        );
        let (names, input) = read_studies(f.path()).unwrap();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(input.k(), 2);
        assert_eq!(input.studies()[1].g(), 0.4);
    }

    #[test]
    fn error_classes() {
        let mixed = csv_file("study_id,n_t,n_c,mean_t,sd_t,mean_c,sd_c,g,var_g\na,10,10,1,2,0,2,0.4,0.2\nb,5,5,,,,,0.1,0.3\n");
        let e = read_studies(mixed.path()).unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("line 2"));

        let bad = csv_file("study_id,n_t,n_c,g,var_g\na,10,10,x,0.2\nb,5,5,0.1,0.3\n");
        let e = read_studies(bad.path()).unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("column g"), "{}", e.message);

        let small = csv_file("study_id,n_t,n_c,g,var_g\na,1,10,0.3,0.2\nb,5,5,0.1,0.3\n");
        assert_eq!(read_studies(small.path()).unwrap_err().code, 3);

        let single = csv_file("study_id,n_t,n_c,g,var_g\na,10,10,0.3,0.2\n");
        assert_eq!(read_studies(single.path()).unwrap_err().code, 3);

        let unknown = csv_file("study_id,n_t,n_c,g,var_g,weight\na,10,10,0.3,0.2,1\n");
        assert_eq!(read_studies(unknown.path()).unwrap_err().code, 2);
    }

    #[test]
    fn level_bounds() {
        assert!(parse_level("0.95").is_ok());
        assert!(parse_level("0.5").is_err());
        assert!(parse_level("1").is_err());
        assert!(parse_level("abc").is_err());
    }
}
