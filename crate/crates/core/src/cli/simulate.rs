use super::analyze::parse_level;
use super::{fmt_sig9, CliError, EXIT_NUMERICAL, EXIT_OK};
use crate::simlab::{expand_grid, run_cells, CellReport, GridConfig};
use clap::Args;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const RESULTS_HEADER: [&str; 12] = [
    "delta",
    "tau2",
    "k",
    "pattern",
    "n_bar",
    "q",
    "estimator",
    "metric",
    "value",
    "mc_se",
    "reps",
    "seed",
];

/// Flags of `simulate`. A level flag that is omitted keeps the full standard
/// set for that factor; `--n` and `--nbar` together choose the size patterns,
/// so giving only one of them drops the other family.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Overall effects, e.g. "0,0.5" or "0(0.5)2".
    #[arg(long, value_parser = parse_levels)]
    pub delta: Option<Levels>,
    /// Between-study variances, e.g. "0(0.5)2.5".
    #[arg(long, value_parser = parse_levels)]
    pub tau2: Option<Levels>,
    /// Numbers of studies.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Equal study sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<u32>,
    /// Mean sizes of the unequal-size sets.
    #[arg(long, value_delimiter = ',')]
    pub nbar: Vec<u32>,
    /// Control-arm proportions.
    #[arg(long, value_parser = parse_levels)]
    pub q: Option<Levels>,
    #[arg(long, default_value_t = 2000)]
    pub reps: usize,
    /// Replicates are split into this many equal chunks of parallel work.
    #[arg(long, default_value_t = 10)]
    pub chunks: usize,
    /// Worker threads (default: all cores).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=4096))]
    pub threads: Option<u32>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    /// Results CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Accept factor levels outside the standard design.
    #[arg(long)]
    pub allow_custom: bool,
}

/// Factor levels given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub struct Levels(pub Vec<f64>);

/// Parse a comma list whose items are numbers or ranges `start(step)end`.
pub fn parse_levels(s: &str) -> Result<Levels, String> {
    let number = |t: &str| -> Result<f64, String> {
        t.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("'{t}' is not a finite number"))
    };
    let mut out = Vec::new();
    for item in s.split(',') {
        let item = item.trim();
        if let Some((start, rest)) = item.split_once('(') {
            let (step, end) = rest
                .split_once(')')
                .ok_or_else(|| format!("'{item}': expected start(step)end"))?;
            let (a, h, b) = (number(start)?, number(step)?, number(end)?);
            if !(h > 0.0) || b < a {
                return Err(format!("'{item}': need a positive step and end >= start"));
            }
            let count = ((b - a) / h + 1e-9).floor() as usize;
            if count > 10_000 {
                return Err(format!("'{item}': too many levels"));
            }
            // Round to 12 decimals so 0(0.1)0.3 yields 0.3, not 0.30000000000000004.
            out.extend((0..=count).map(|i| ((a + i as f64 * h) * 1e12).round() / 1e12));
        } else {
            out.push(number(item)?);
        }
    }
    Ok(Levels(out))
}

impl SimulateArgs {
    pub fn grid(&self) -> GridConfig {
        let d = GridConfig::default();
        let (equal_ns, unequal_nbars) = if self.n.is_empty() && self.nbar.is_empty() {
            (d.equal_ns.clone(), d.unequal_nbars.clone())
        } else {
            (self.n.clone(), self.nbar.clone())
        };
        GridConfig {
            deltas: self.delta.clone().map_or(d.deltas, |l| l.0),
            tau2s: self.tau2.clone().map_or(d.tau2s, |l| l.0),
            ks: if self.k.is_empty() {
                d.ks
            } else {
                self.k.clone()
            },
            equal_ns,
            unequal_nbars,
            qs: self.q.clone().map_or(d.qs, |l| l.0),
            reps: self.reps,
            chunks: self.chunks,
            seed: self.seed,
            level: self.level,
            allow_custom: self.allow_custom,
        }
    }
}

fn write_results(path: &Path, reports: &[CellReport]) -> Result<usize, CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::io(&format!("{}", dir.display()), e))?;
    let mut rows = 0;
    {
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(tmp.as_file()));
        let fail = |e: csv::Error| CliError::io(&format!("{}", path.display()), e);
        w.write_record(RESULTS_HEADER).map_err(fail)?;
        for r in reports {
            let c = &r.cell;
            let coords = [
                fmt_sig9(c.delta),
                fmt_sig9(c.tau2),
                c.k.to_string(),
                c.pattern.label().to_string(),
                c.pattern.n().to_string(),
                fmt_sig9(c.q),
            ];
            for row in &r.rows {
                let mut rec: Vec<String> = coords.to_vec();
                rec.extend([
                    row.estimator.clone(),
                    row.metric.to_string(),
                    fmt_sig9(row.value),
                    fmt_sig9(row.mc_se),
                    c.reps.to_string(),
                    c.seed.to_string(),
                ]);
                w.write_record(&rec).map_err(fail)?;
                rows += 1;
            }
        }
        w.flush()
            .map_err(|e| CliError::io(&format!("{}", path.display()), e))?;
    }
    // A failed run leaves no partial file: the temporary is removed on drop.
    tmp.persist(path)
        .map_err(|e| CliError::io(&format!("{}", path.display()), e.error))?;
    Ok(rows)
}

pub(super) fn cmd_simulate(args: &SimulateArgs, err: &mut dyn Write) -> Result<i32, CliError> {
    let cells = expand_grid(&args.grid()).map_err(|e| CliError::input(e.to_string()))?;
    let reports = run_cells(&cells, args.threads.map(|t| t as usize))
        .map_err(|e| CliError::input(e.to_string()))?;
    let rows = write_results(&args.out, &reports)?;
    let _ = writeln!(
        err,
        "wrote {rows} rows for {} cells to {}",
        cells.len(),
        args.out.display()
    );
    let mut failures = Vec::new();
    for r in &reports {
        for row in r
            .rows
            .iter()
            .filter(|row| row.metric.ends_with("_failures"))
        {
            failures.push(format!(
                "  delta={} tau2={} k={} {} q={}: {} {} = {}",
                r.cell.delta,
                r.cell.tau2,
                r.cell.k,
                r.cell.pattern,
                r.cell.q,
                row.estimator,
                row.metric,
                row.value
            ));
        }
    }
    if failures.is_empty() {
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(err, "replicates excluded after estimator failures:");
        for f in &failures {
            let _ = writeln!(err, "{f}");
        }
        Ok(EXIT_NUMERICAL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_lists_and_ranges() {
        assert_eq!(
            parse_levels("0(0.5)2.5").unwrap().0,
            [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
        );
        assert_eq!(parse_levels("0,0.2, 1").unwrap().0, [0.0, 0.2, 1.0]);
        assert_eq!(parse_levels("0(0.1)0.3").unwrap().0, [0.0, 0.1, 0.2, 0.3]);
        assert!(parse_levels("0(0)1").is_err());
        assert!(parse_levels("a").is_err());
        assert!(parse_levels("1(0.5").is_err());
    }
}
