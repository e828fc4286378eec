//! Inverse-variance weighted means, the generalized Cochran Q(τ²) and the
//! monotone root solver behind every moment-type τ² estimator.

use crate::error::{Error, Result};
use crate::numkernel::compensated_sum;
use crate::smd::Study;
use serde::Serialize;

/// Ordered collection of K ≥ 2 studies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetaInput {
    studies: Vec<Study>,
}

impl MetaInput {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.len() < 2 {
            return Err(Error::Invalid(format!(
                "a meta-analysis needs at least 2 studies, got {}",
                studies.len()
            )));
        }
        Ok(Self { studies })
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn k(&self) -> usize {
        self.studies.len()
    }

    pub fn g(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|s| s.g())
    }

    pub fn v2(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|s| s.v2())
    }

    pub fn max_v2(&self) -> f64 {
        self.v2().fold(0.0, f64::max)
    }

    /// True when every g_i is identical.
    pub fn is_homogeneous(&self) -> bool {
        let g0 = self.studies[0].g();
        self.g().all(|g| g == g0)
    }

    /// Same studies with every g_i shifted by `c` (variances untouched).
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            studies: self.studies.iter().map(|s| s.with_g_shift(c)).collect(),
        }
    }
}

/// Weighted mean with the weights that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedFit {
    pub weights: Vec<f64>,
    pub mean: f64,
    pub sum_w: f64,
}

/// Weighted mean of arbitrary values.
pub fn weighted_mean(values: &[f64], weights: Vec<f64>) -> WeightedFit {
    let sum_w = compensated_sum(weights.iter().copied());
    let mean = compensated_sum(values.iter().zip(&weights).map(|(x, w)| w * x)) / sum_w;
    WeightedFit {
        weights,
        mean,
        sum_w,
    }
}

/// Mean with weights 1 / (v_i² + τ²).
pub fn iv_weighted_mean(input: &MetaInput, tau2: f64) -> WeightedFit {
    let weights = input.v2().map(|v| 1.0 / (v + tau2)).collect();
    let g: Vec<f64> = input.g().collect();
    weighted_mean(&g, weights)
}

/// Σ w_i (x_i - x̄_w)² for given weights.
pub fn weighted_dispersion(values: &[f64], fit: &WeightedFit) -> f64 {
    compensated_sum(
        values
            .iter()
            .zip(&fit.weights)
            .map(|(x, w)| w * (x - fit.mean).powi(2)),
    )
}

/// Generalized Cochran statistic Q(τ²).
pub fn q_statistic(input: &MetaInput, tau2: f64) -> f64 {
    let fit = iv_weighted_mean(input, tau2);
    let g: Vec<f64> = input.g().collect();
    weighted_dispersion(&g, &fit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RootStatus {
    /// Q(0) was already at or below the target.
    Truncated,
    Interior,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QRoot {
    pub tau2: f64,
    pub status: RootStatus,
    pub iterations: usize,
}

/// Largest τ² the root search will consider.
pub const TAU2_CAP: f64 = 1e7;
const MAX_BISECTIONS: usize = 400;

/// Solve Q(τ²) = target on τ² ≥ 0.
pub fn solve_q_equals(input: &MetaInput, target: f64) -> Result<QRoot> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::domain(
            "solve_q_equals",
            format!("target {target} must be positive"),
        ));
    }
    let q0 = q_statistic(input, 0.0);
    if q0 <= target {
        return Ok(QRoot {
            tau2: 0.0,
            status: RootStatus::Truncated,
            iterations: 0,
        });
    }
    let mut lo = 0.0;
    let mut hi = (q0 * input.max_v2()).clamp(1.0, TAU2_CAP);
    while q_statistic(input, hi) > target {
        if hi >= TAU2_CAP {
            return Err(Error::BracketExceeded {
                what: "Q(tau2) = target",
                cap: TAU2_CAP,
            });
        }
        lo = hi;
        hi = (2.0 * hi).min(TAU2_CAP);
    }
    let tol = 1e-8 * target;
    for it in 1..=MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let q = q_statistic(input, mid);
        if (q - target).abs() <= tol || hi - lo <= f64::EPSILON * mid {
            return Ok(QRoot {
                tau2: mid,
                status: RootStatus::Interior,
                iterations: it,
            });
        }
        if q > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence {
        what: "Q(tau2) = target bisection",
        iterations: MAX_BISECTIONS,
        bound: hi - lo,
    })
}
