use super::grid::{study_sizes, SimCell};
use super::metrics::{bias, coverage, mse, mse_ratio, proportion, Metric};
use crate::analysis::analyze;
use crate::effect::{EffectCiMethod, Weighting};
use crate::error::{Error, Result};
use crate::numkernel::RandomStream;
use crate::qstat::MetaInput;
use crate::smd::sample_g;
use crate::tau2::{Tau2CiMethod, Tau2Method};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

/// What one replicate contributes; `None` marks an estimator failure.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub tau2: [Option<(f64, bool)>; 5],
    pub tau2_covered: [Option<bool>; 5],
    pub delta: [Option<f64>; 6],
    pub delta_covered: [Option<(bool, bool)>; 8],
}

/// One metric of one estimator in one cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub estimator: String,
    pub metric: &'static str,
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub cell: SimCell,
    pub rows: Vec<MetricRow>,
}

impl CellReport {
    pub fn get(&self, estimator: &str, metric: &str) -> Option<Metric> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.metric == metric)
            .map(|r| Metric {
                value: r.value,
                mc_se: r.mc_se,
            })
    }

    /// Count stored under a `*_failures` or `*_degenerate` metric, 0 when absent.
    pub fn count(&self, estimator: &str, metric: &str) -> usize {
        self.get(estimator, metric).map_or(0, |m| m.value as usize)
    }
}

/// One simulated meta-analysis.
pub fn simulate_input(cell: &SimCell, sizes: &[(u32, u32)], index: u64) -> Result<MetaInput> {
    let mut rng = RandomStream::new(cell.seed, cell.stream_key())
        .child(index)
        .rng();
    let sd = cell.tau2.sqrt();
    let studies = sizes
        .iter()
        .map(|&(n_t, n_c)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sample_g(&mut rng, n_t, n_c, cell.delta + sd * z)
        })
        .collect::<Result<Vec<_>>>()?;
    MetaInput::new(studies)
}

fn replicate(cell: &SimCell, sizes: &[(u32, u32)], index: u64) -> Result<Replicate> {
    let input = simulate_input(cell, sizes, index)?;
    let a = analyze(&input, cell.level)?;
    Ok(Replicate {
        tau2: a
            .tau2
            .each_ref()
            .map(|r| r.as_ref().ok().map(|t| (t.value, t.is_truncated()))),
        tau2_covered: a
            .tau2_ci
            .each_ref()
            .map(|r| r.as_ref().ok().map(|ci| ci.contains(cell.tau2))),
        delta: a
            .effects
            .each_ref()
            .map(|r| r.as_ref().ok().map(|e| e.value)),
        delta_covered: a.effect_ci.each_ref().map(|r| {
            r.as_ref()
                .ok()
                .map(|ci| (ci.contains(cell.delta), ci.degenerate))
        }),
    })
}

fn run_chunk(cell: &SimCell, sizes: &[(u32, u32)], chunk: usize) -> Result<Vec<Replicate>> {
    let per = cell.reps / cell.chunks;
    (chunk * per..(chunk + 1) * per)
        .map(|i| replicate(cell, sizes, i as u64))
        .collect()
}

/// Run one cell on the current thread pool.
pub fn run_cell(cell: &SimCell) -> Result<CellReport> {
    Ok(run_cells(std::slice::from_ref(cell), None)?.remove(0))
}

/// Run cells concurrently over (cell, chunk) jobs. Replicate i of a cell always
/// draws from the stream keyed by (seed, cell coordinates, i), and the per-cell
/// reduction is sequential in replicate order, so reports do not depend on
/// `threads` or on the chunk count.
pub fn run_cells(cells: &[SimCell], threads: Option<usize>) -> Result<Vec<CellReport>> {
    for c in cells {
        c.validate()?;
    }
    let sizes: Vec<Vec<(u32, u32)>> = cells.iter().map(study_sizes).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..c.chunks).map(move |j| (i, j)))
        .collect();
    let work = || -> Vec<Result<Vec<Replicate>>> {
        jobs.par_iter()
            .map(|&(i, j)| run_chunk(&cells[i], &sizes[i], j))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Invalid(format!("threads: {e}")))?
            .install(work),
        None => work(),
    };
    let mut per_cell: Vec<Vec<Replicate>> =
        cells.iter().map(|c| Vec::with_capacity(c.reps)).collect();
    for (&(i, _), chunk) in jobs.iter().zip(results) {
        per_cell[i].extend(chunk?);
    }
    cells
        .iter()
        .zip(per_cell)
        .map(|(c, reps)| summarize(c, &reps))
        .collect()
}

fn push(rows: &mut Vec<MetricRow>, estimator: &str, metric: &'static str, m: Metric) {
    rows.push(MetricRow {
        estimator: estimator.to_string(),
        metric,
        value: m.value,
        mc_se: m.mc_se,
    });
}

fn push_failures(rows: &mut Vec<MetricRow>, estimator: &str, metric: &'static str, count: usize) {
    if count > 0 {
        rows.push(MetricRow {
            estimator: estimator.to_string(),
            metric,
            value: count as f64,
            mc_se: 0.0,
        });
    }
}

/// Reduce replicates (in order) to the metrics of a cell.
pub fn summarize(cell: &SimCell, reps: &[Replicate]) -> Result<CellReport> {
    let mut rows = Vec::new();
    for (i, m) in Tau2Method::ALL.into_iter().enumerate() {
        let ok: Vec<(f64, bool)> = reps.iter().filter_map(|r| r.tau2[i]).collect();
        let values: Vec<f64> = ok.iter().map(|v| v.0).collect();
        let truncated: Vec<bool> = ok.iter().map(|v| v.1).collect();
        if !ok.is_empty() {
            push(&mut rows, m.name(), "tau2_bias", bias(&values, cell.tau2)?);
            push(
                &mut rows,
                m.name(),
                "tau2_truncation",
                proportion(&truncated)?,
            );
        }
        push_failures(&mut rows, m.name(), "tau2_failures", reps.len() - ok.len());
    }
    for (i, m) in Tau2CiMethod::ALL.into_iter().enumerate() {
        let hits: Vec<bool> = reps.iter().filter_map(|r| r.tau2_covered[i]).collect();
        if !hits.is_empty() {
            push(&mut rows, m.name(), "tau2_coverage", coverage(&hits)?);
        }
        push_failures(
            &mut rows,
            m.name(),
            "tau2_ci_failures",
            reps.len() - hits.len(),
        );
    }
    for (i, w) in Weighting::ALL.into_iter().enumerate() {
        let values: Vec<f64> = reps.iter().filter_map(|r| r.delta[i]).collect();
        if !values.is_empty() {
            push(
                &mut rows,
                w.name(),
                "delta_bias",
                bias(&values, cell.delta)?,
            );
            push(&mut rows, w.name(), "delta_mse", mse(&values, cell.delta)?);
        }
        push_failures(
            &mut rows,
            w.name(),
            "delta_failures",
            reps.len() - values.len(),
        );
    }
    for (i, c) in EffectCiMethod::ALL.into_iter().enumerate() {
        let ok: Vec<(bool, bool)> = reps.iter().filter_map(|r| r.delta_covered[i]).collect();
        let hits: Vec<bool> = ok.iter().map(|v| v.0).collect();
        if !hits.is_empty() {
            push(&mut rows, c.name(), "delta_coverage", coverage(&hits)?);
        }
        push_failures(
            &mut rows,
            c.name(),
            "delta_ci_failures",
            reps.len() - hits.len(),
        );
        push_failures(
            &mut rows,
            c.name(),
            "delta_ci_degenerate",
            ok.iter().filter(|v| v.1).count(),
        );
    }
    let ssw = Weighting::ALL.len() - 1;
    for reference in [Tau2Method::KDB, Tau2Method::MP] {
        let j = Weighting::ALL
            .iter()
            .position(|w| *w == Weighting::InverseVariance(reference))
            .expect("listed");
        let (a, b): (Vec<f64>, Vec<f64>) = reps
            .iter()
            .filter_map(|r| Some((r.delta[ssw]?, r.delta[j]?)))
            .unzip();
        if !a.is_empty() {
            let name = format!("SSW/{}", reference.name());
            push(
                &mut rows,
                &name,
                "mse_ratio",
                mse_ratio(&a, &b, cell.delta)?,
            );
        }
    }
    Ok(CellReport { cell: *cell, rows })
}
