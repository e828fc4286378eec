use super::analyze::parse_level;
use super::simulate::{parse_levels, Levels, RESULTS_HEADER};
use super::{fmt_sig9, CliError, EXIT_OK};
use crate::simlab::{DELTAS, EQUAL_NS, KS, QS, UNEQUAL_NBARS};
use clap::{Args, ValueEnum};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

/// The three families of four size levels that make up the rows of a figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SizeFamily {
    /// Equal sizes n = 20, 40, 100, 250.
    Equal,
    /// Equal sizes n = 30, 50, 60, 70.
    EqualExtra,
    /// Unequal sets with n̄ = 30, 60, 100, 160.
    Unequal,
}

impl SizeFamily {
    pub const ALL: [SizeFamily; 3] = [Self::Equal, Self::EqualExtra, Self::Unequal];

    pub fn pattern(&self) -> &'static str {
        match self {
            Self::Unequal => "unequal",
            _ => "equal",
        }
    }

    pub fn levels(&self) -> [u32; 4] {
        match self {
            Self::Equal => [EQUAL_NS[0], EQUAL_NS[1], EQUAL_NS[2], EQUAL_NS[3]],
            Self::EqualExtra => [EQUAL_NS[4], EQUAL_NS[5], EQUAL_NS[6], EQUAL_NS[7]],
            Self::Unequal => UNEQUAL_NBARS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Equal => "equal",
            Self::EqualExtra => "equal-extra",
            Self::Unequal => "unequal",
        }
    }

    fn size_symbol(&self) -> &'static str {
        match self {
            Self::Unequal => "n̄",
            _ => "n",
        }
    }
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Results CSV written by `simulate`.
    pub input: PathBuf,
    /// Metric to draw, e.g. tau2_bias, tau2_coverage, delta_bias, delta_coverage, mse_ratio.
    #[arg(long)]
    pub metric: String,
    /// Overall effects to draw (default: all found in the input).
    #[arg(long, value_parser = parse_levels)]
    pub delta: Option<Levels>,
    /// Control-arm proportions to draw (default: all found in the input).
    #[arg(long, value_parser = parse_levels)]
    pub q: Option<Levels>,
    /// Size families to draw (default: all found in the input).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub family: Vec<SizeFamily>,
    /// Nominal level drawn as a reference line on coverage figures.
    #[arg(long, default_value_t = 0.95, value_parser = parse_level)]
    pub level: f64,
    /// Directory for the SVG files.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
struct Row {
    delta: f64,
    tau2: f64,
    k: usize,
    pattern: String,
    n_bar: u32,
    q: f64,
    estimator: String,
    value: f64,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs())
}

fn read_rows(path: &Path, metric: &str) -> Result<Vec<Row>, CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| CliError::io(&format!("{}", path.display()), e))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::input(format!("{}: header: {e}", path.display())))?;
    if headers.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(CliError::input(format!(
            "{}: header must be {}",
            path.display(),
            RESULTS_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        if &record[7] != metric {
            continue;
        }
        let line = record.position().map_or(0, |p| p.line());
        let bad = |col: usize| {
            CliError::input(format!(
                "line {line}, column {}: '{}' cannot be parsed",
                RESULTS_HEADER[col], &record[col]
            ))
        };
        let f = |col: usize| record[col].parse::<f64>().map_err(|_| bad(col));
        rows.push(Row {
            delta: f(0)?,
            tau2: f(1)?,
            k: record[2].parse().map_err(|_| bad(2))?,
            pattern: record[3].to_string(),
            n_bar: record[4].parse().map_err(|_| bad(4))?,
            q: f(5)?,
            estimator: record[6].to_string(),
            value: f(8)?,
        });
    }
    Ok(rows)
}

fn present(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    for x in values {
        if !v.iter().any(|y| same(*y, x)) {
            v.push(x);
        }
    }
    v.sort_by(f64::total_cmp);
    v
}

fn family_of(row: &Row) -> Option<SizeFamily> {
    SizeFamily::ALL
        .into_iter()
        .find(|f| f.pattern() == row.pattern && f.levels().contains(&row.n_bar))
}

/// Colour and dash pattern per estimator, fixed so figures compare across runs.
fn style(estimator: &str) -> (&'static str, &'static str) {
    match estimator {
        "DL" | "Z-DL" => ("#1f77b4", ""),
        "REML" | "Z-REML" => ("#ff7f0e", ""),
        "MP" | "Z-MP" => ("#2ca02c", ""),
        "J" | "Z-J" => ("#d62728", ""),
        "KDB" | "Z-KDB" => ("#9467bd", ""),
        "SSW" => ("#8c564b", ""),
        "QP" => ("#1f77b4", "6 3"),
        "BJ" => ("#e377c2", "6 3"),
        "PL" => ("#7f7f7f", "6 3"),
        "HKSJ" => ("#17becf", "6 3"),
        "HKSJ-KDB" => ("#bcbd22", "6 3"),
        "SSW-KDB" => ("#8c564b", "2 2"),
        "SSW/KDB" => ("#9467bd", "6 3"),
        "SSW/MP" => ("#2ca02c", "2 2"),
        _ => ("#444444", "1 3"),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-12 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

struct Figure<'a> {
    metric: &'a str,
    delta: f64,
    q: f64,
    family: SizeFamily,
    reference: Option<f64>,
    rows: Vec<&'a Row>,
}

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 190.0;
const GAP_X: f64 = 50.0;
const GAP_Y: f64 = 55.0;
const LEFT: f64 = 70.0;

fn render(fig: &Figure) -> String {
    let mut estimators: Vec<&str> = Vec::new();
    for r in &fig.rows {
        if !estimators.contains(&r.estimator.as_str()) {
            estimators.push(&r.estimator);
        }
    }
    let legend_rows = estimators.len().div_ceil(6);
    let top = 60.0 + 20.0 * legend_rows as f64 + 20.0;
    let width = LEFT + 3.0 * (PANEL_W + GAP_X);
    let height = top + 4.0 * (PANEL_H + GAP_Y);

    let mut ylo = fig
        .rows
        .iter()
        .map(|r| r.value)
        .fold(f64::INFINITY, f64::min);
    let mut yhi = fig
        .rows
        .iter()
        .map(|r| r.value)
        .fold(f64::NEG_INFINITY, f64::max);
    if let Some(r) = fig.reference {
        ylo = ylo.min(r);
        yhi = yhi.max(r);
    }
    if !(yhi > ylo) {
        ylo -= 0.05;
        yhi += 0.05;
    }
    let pad = 0.05 * (yhi - ylo);
    let (ylo, yhi) = (ylo - pad, yhi + pad);
    let xs = present(fig.rows.iter().map(|r| r.tau2));
    let xhi = xs.last().copied().filter(|x| *x > 0.0).unwrap_or(1.0);
    let xlo = xs.first().copied().unwrap_or(0.0).min(0.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="28" font-size="16" text-anchor="middle">{} (δ = {}, q = {}, {} sizes)</text>"#,
        width / 2.0,
        escape(fig.metric),
        fmt_sig9(fig.delta),
        fmt_sig9(fig.q),
        fig.family.name()
    );
    for (i, e) in estimators.iter().enumerate() {
        let (color, dash) = style(e);
        let x = LEFT + (i % 6) as f64 * 170.0;
        let y = 55.0 + 20.0 * (i / 6) as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{}" y="{}">{}</text>"#,
            x + 30.0,
            x + 36.0,
            y + 4.0,
            escape(e)
        );
    }

    let yticks = nice_ticks(ylo, yhi);
    for (row, n) in fig.family.levels().into_iter().enumerate() {
        for (col, k) in KS.into_iter().enumerate() {
            let px = LEFT + col as f64 * (PANEL_W + GAP_X);
            let py = top + row as f64 * (PANEL_H + GAP_Y);
            let sx = |x: f64| px + (x - xlo) / (xhi - xlo) * PANEL_W;
            let sy = |y: f64| py + PANEL_H - (y - ylo) / (yhi - ylo) * PANEL_H;
            let _ = writeln!(
                s,
                r#"<rect x="{px}" y="{py}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{} = {n}, K = {k}</text>"#,
                px + PANEL_W / 2.0,
                py - 6.0,
                fig.family.size_symbol()
            );
            for t in &yticks {
                let y = sy(*t);
                let _ = writeln!(
                    s,
                    r##"<line x1="{px}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"##,
                    px + PANEL_W,
                    px - 4.0,
                    y + 3.0,
                    fmt_sig9((*t * 1e9).round() / 1e9)
                );
            }
            for x in &xs {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{}</text>"#,
                    sx(*x),
                    py + PANEL_H + 13.0,
                    fmt_sig9(*x)
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="11">τ²</text>"#,
                px + PANEL_W / 2.0,
                py + PANEL_H + 27.0
            );
            if let Some(r) = fig.reference {
                let y = sy(r);
                let _ = writeln!(
                    s,
                    r#"<line class="reference" x1="{px}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="black" stroke-dasharray="4 4"/>"#,
                    px + PANEL_W
                );
            }
            for e in &estimators {
                let mut pts: Vec<(f64, f64)> = fig
                    .rows
                    .iter()
                    .filter(|r| r.k == k && r.n_bar == n && r.estimator == *e)
                    .map(|r| (r.tau2, r.value))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                if pts.is_empty() {
                    continue;
                }
                let (color, dash) = style(e);
                let path: Vec<String> = pts
                    .iter()
                    .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/>"#,
                    path.join(" ")
                );
                for (x, y) in &pts {
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                        sx(*x),
                        sy(*y)
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn file_name(metric: &str, delta: f64, q: f64, family: SizeFamily) -> String {
    let clean: String = metric
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect();
    format!(
        "{clean}_delta{}_q{}_{}.svg",
        fmt_sig9(delta),
        fmt_sig9(q),
        family.name()
    )
}

pub(super) fn cmd_plot(args: &PlotArgs, err: &mut dyn Write) -> Result<i32, CliError> {
    let rows = read_rows(&args.input, &args.metric)?;
    let fallback = |found: Vec<f64>, standard: &[f64]| {
        if found.is_empty() {
            standard.to_vec()
        } else {
            found
        }
    };
    let deltas = args
        .delta
        .clone()
        .map(|l| l.0)
        .unwrap_or_else(|| fallback(present(rows.iter().map(|r| r.delta)), &DELTAS));
    let qs = args
        .q
        .clone()
        .map(|l| l.0)
        .unwrap_or_else(|| fallback(present(rows.iter().map(|r| r.q)), &QS));
    let families: Vec<SizeFamily> = if !args.family.is_empty() {
        args.family.clone()
    } else {
        let found: Vec<SizeFamily> = SizeFamily::ALL
            .into_iter()
            .filter(|f| rows.iter().any(|r| family_of(r) == Some(*f)))
            .collect();
        if found.is_empty() {
            SizeFamily::ALL.to_vec()
        } else {
            found
        }
    };
    let reference = args.metric.ends_with("coverage").then_some(args.level);

    let mut figures = Vec::new();
    let mut missing = Vec::new();
    for &delta in &deltas {
        for &q in &qs {
            for &family in &families {
                let selected: Vec<&Row> = rows
                    .iter()
                    .filter(|r| {
                        same(r.delta, delta) && same(r.q, q) && family_of(r) == Some(family)
                    })
                    .collect();
                for n in family.levels() {
                    for k in KS {
                        if !selected.iter().any(|r| r.n_bar == n && r.k == k) {
                            missing.push(format!(
                                "metric={} delta={} q={} pattern={} n_bar={n} k={k}",
                                args.metric,
                                fmt_sig9(delta),
                                fmt_sig9(q),
                                family.pattern()
                            ));
                        }
                    }
                }
                figures.push(Figure {
                    metric: &args.metric,
                    delta,
                    q,
                    family,
                    reference,
                    rows: selected,
                });
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::input(format!(
            "{} panels have no data in {}:\n  {}",
            missing.len(),
            args.input.display(),
            missing.join("\n  ")
        )));
    }
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(&format!("{}", args.out_dir.display()), e))?;
    for fig in &figures {
        let path = args
            .out_dir
            .join(file_name(fig.metric, fig.delta, fig.q, fig.family));
        std::fs::write(&path, render(fig))
            .map_err(|e| CliError::io(&format!("{}", path.display()), e))?;
        let _ = writeln!(err, "wrote {}", path.display());
    }
    Ok(EXIT_OK)
}
