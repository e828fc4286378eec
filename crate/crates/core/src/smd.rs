//! Study-level standardized mean difference: Hedges's g, its bias-correction
//! factor, its unbiased variance estimate, and exact sampling under the model.

use crate::error::{Error, Result};
use crate::numkernel::{ln_gamma_half_ratio, sample_noncentral_t};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Summary statistics of one study arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub n: u32,
    pub mean: f64,
    pub sd: f64,
}

impl ArmSummary {
    pub fn new(n: u32, mean: f64, sd: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Invalid(format!("arm size {n} must be at least 2")));
        }
        if !(sd >= 0.0) || !sd.is_finite() || !mean.is_finite() {
            return Err(Error::Invalid(format!(
                "arm mean {mean} and sd {sd} must be finite with sd >= 0"
            )));
        }
        Ok(Self { n, mean, sd })
    }
}

/// One two-arm study: arm sizes, Hedges's g and its estimated variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Study {
    n_t: u32,
    n_c: u32,
    g: f64,
    v2: f64,
}

impl Study {
    pub fn new(n_t: u32, n_c: u32, g: f64, v2: f64) -> Result<Self> {
        if n_t < 2 || n_c < 2 {
            return Err(Error::Invalid(format!(
                "arm sizes ({n_t}, {n_c}) must both be at least 2"
            )));
        }
        if !g.is_finite() {
            return Err(Error::Invalid(format!("effect estimate {g} is not finite")));
        }
        if !(v2 > 0.0) || !v2.is_finite() {
            return Err(Error::Invalid(format!("variance {v2} must be positive")));
        }
        Ok(Self { n_t, n_c, g, v2 })
    }

    /// Study with `v2` computed from `g` by [`g_variance`].
    pub fn from_g(n_t: u32, n_c: u32, g: f64) -> Result<Self> {
        let v2 = g_variance(g, n_t, n_c)?;
        Self::new(n_t, n_c, g, v2)
    }

    pub fn n_t(&self) -> u32 {
        self.n_t
    }
    pub fn n_c(&self) -> u32 {
        self.n_c
    }
    pub fn g(&self) -> f64 {
        self.g
    }
    pub fn v2(&self) -> f64 {
        self.v2
    }
    pub fn n(&self) -> u32 {
        self.n_t + self.n_c
    }
    /// Degrees of freedom m = n_t + n_c - 2.
    pub fn df(&self) -> u32 {
        self.n_t + self.n_c - 2
    }
    /// Effective sample size ñ = n_t n_c / (n_t + n_c).
    pub fn effective_n(&self) -> f64 {
        effective_n(self.n_t, self.n_c)
    }
    /// Share of the study in the control arm.
    pub fn q(&self) -> f64 {
        self.n_c as f64 / self.n() as f64
    }

    pub(crate) fn with_g_shift(&self, shift: f64) -> Self {
        Self {
            g: self.g + shift,
            ..*self
        }
    }
}

pub fn effective_n(n_t: u32, n_c: u32) -> f64 {
    let (t, c) = (n_t as f64, n_c as f64);
    t * c / (t + c)
}

/// Exact small-sample correction J(m) = Γ(m/2) / (sqrt(m/2) Γ((m-1)/2)).
pub fn j_factor(m: u32) -> Result<f64> {
    if m < 2 {
        return Err(Error::domain(
            "j_factor",
            format!("m = {m} must be at least 2"),
        ));
    }
    let half = 0.5 * m as f64;
    Ok((ln_gamma_half_ratio(half)? - 0.5 * half.ln()).exp())
}

/// Coefficient b(m) = 1 - (m-2)/(m J(m)²) multiplying g² in the variance of g.
pub(crate) fn g_variance_slope(m: u32) -> Result<f64> {
    let j = j_factor(m)?;
    let mf = m as f64;
    Ok(1.0 - (mf - 2.0) / (mf * j * j))
}

/// Unbiased estimate of Var(g).
pub fn g_variance(g: f64, n_t: u32, n_c: u32) -> Result<f64> {
    let m = (n_t + n_c).saturating_sub(2);
    if m < 3 {
        return Err(Error::domain(
            "g_variance",
            format!("m = {m} must be at least 3"),
        ));
    }
    let (t, c) = (n_t as f64, n_c as f64);
    Ok((t + c) / (t * c) + g_variance_slope(m)? * g * g)
}

/// Hedges's g from arm summaries (pooled standard deviation).
pub fn hedges_g(t: &ArmSummary, c: &ArmSummary) -> Result<Study> {
    let m = t.n + c.n - 2;
    let pooled = ((t.n - 1) as f64 * t.sd * t.sd + (c.n - 1) as f64 * c.sd * c.sd) / m as f64;
    if !(pooled > 0.0) {
        return Err(Error::Degenerate(
            "pooled standard deviation is zero".to_string(),
        ));
    }
    let g = j_factor(m)? * (t.mean - c.mean) / pooled.sqrt();
    Study::from_g(t.n, c.n, g)
}

/// Draw g for a study with true effect `delta_i` from its scaled non-central t law.
pub fn sample_g<R: Rng + ?Sized>(rng: &mut R, n_t: u32, n_c: u32, delta_i: f64) -> Result<Study> {
    if n_t < 2 || n_c < 2 {
        return Err(Error::Invalid(format!(
            "arm sizes ({n_t}, {n_c}) must both be at least 2"
        )));
    }
    let m = n_t + n_c - 2;
    let eff = effective_n(n_t, n_c).sqrt();
    let t = sample_noncentral_t(rng, m, eff * delta_i);
    let g = j_factor(m)? * t / eff;
    Study::from_g(n_t, n_c, g)
}
