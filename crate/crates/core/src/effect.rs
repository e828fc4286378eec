//! Overall effect δ: inverse-variance and effective-sample-size weighted
//! estimates and their confidence intervals.

use crate::error::Result;
use crate::numkernel::{compensated_sum, normal_quantile, t_quantile};
use crate::qstat::{iv_weighted_mean, weighted_dispersion, weighted_mean, MetaInput};
use crate::tau2::{check_level, tau2_kdb, Tau2Method, Tau2Result};
use serde::Serialize;
use std::fmt;

/// Weighting scheme behind a point estimate of δ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Weighting {
    /// Weights 1/(v_i² + τ̂²) with τ̂² from the given method.
    InverseVariance(Tau2Method),
    /// Weights ñ_i.
    EffectiveSize,
}

impl Weighting {
    pub const ALL: [Weighting; 6] = [
        Self::InverseVariance(Tau2Method::DL),
        Self::InverseVariance(Tau2Method::REML),
        Self::InverseVariance(Tau2Method::MP),
        Self::InverseVariance(Tau2Method::J),
        Self::InverseVariance(Tau2Method::KDB),
        Self::EffectiveSize,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::InverseVariance(m) => m.name(),
            Self::EffectiveSize => "SSW",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectResult {
    pub value: f64,
    pub variance: f64,
    pub weights: Vec<f64>,
    pub weighting: Weighting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum EffectCiMethod {
    Z(Tau2Method),
    Hksj(Tau2Method),
    SswKdb,
}

impl EffectCiMethod {
    /// The eight intervals compared in the simulation.
    pub const ALL: [EffectCiMethod; 8] = [
        Self::Z(Tau2Method::DL),
        Self::Z(Tau2Method::REML),
        Self::Z(Tau2Method::MP),
        Self::Z(Tau2Method::J),
        Self::Z(Tau2Method::KDB),
        Self::Hksj(Tau2Method::DL),
        Self::Hksj(Tau2Method::KDB),
        Self::SswKdb,
    ];

    pub fn name(&self) -> &'static str {
        use Tau2Method::*;
        match self {
            Self::Z(DL) => "Z-DL",
            Self::Z(REML) => "Z-REML",
            Self::Z(MP) => "Z-MP",
            Self::Z(J) => "Z-J",
            Self::Z(KDB) => "Z-KDB",
            Self::Hksj(DL) => "HKSJ",
            Self::Hksj(REML) => "HKSJ-REML",
            Self::Hksj(MP) => "HKSJ-MP",
            Self::Hksj(J) => "HKSJ-J",
            Self::Hksj(KDB) => "HKSJ-KDB",
            Self::SswKdb => "SSW-KDB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for EffectCiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectInterval {
    pub center: f64,
    pub half_width: f64,
    pub method: EffectCiMethod,
    pub level: f64,
    /// Zero-width interval from identical study estimates.
    pub degenerate: bool,
}

impl EffectInterval {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn contains(&self, delta: f64) -> bool {
        self.lo() <= delta && delta <= self.hi()
    }
}

/// Random-effects weighted mean at the given τ̂², with variance 1/Σw.
pub fn effect_iv(input: &MetaInput, tau2: &Tau2Result) -> EffectResult {
    let fit = iv_weighted_mean(input, tau2.value);
    EffectResult {
        value: fit.mean,
        variance: 1.0 / fit.sum_w,
        weights: fit.weights,
        weighting: Weighting::InverseVariance(tau2.method),
    }
}

fn effective_sizes(input: &MetaInput) -> Vec<f64> {
    input.studies().iter().map(|s| s.effective_n()).collect()
}

/// Σñ_i²(v_i² + τ²) / (Σñ_i)².
pub fn ssw_variance(input: &MetaInput, tau2: f64) -> f64 {
    let n = effective_sizes(input);
    let total = compensated_sum(n.iter().copied());
    compensated_sum(n.iter().zip(input.v2()).map(|(n, v)| n * n * (v + tau2))) / (total * total)
}

/// Effective-sample-size weighted mean, variance evaluated at the KDB τ̂².
pub fn effect_ssw(input: &MetaInput) -> Result<EffectResult> {
    Ok(effect_ssw_with(input, tau2_kdb(input)?.value))
}

/// Effective-sample-size weighted mean, variance evaluated at `tau2`.
pub fn effect_ssw_with(input: &MetaInput, tau2: f64) -> EffectResult {
    let g: Vec<f64> = input.g().collect();
    let fit = weighted_mean(&g, effective_sizes(input));
    EffectResult {
        value: fit.mean,
        variance: ssw_variance(input, tau2),
        weights: fit.weights,
        weighting: Weighting::EffectiveSize,
    }
}

/// Normal-quantile interval around the inverse-variance weighted mean.
pub fn ci_z(input: &MetaInput, tau2: &Tau2Result, level: f64) -> Result<EffectInterval> {
    let alpha = check_level("ci_z", level)?;
    let fit = effect_iv(input, tau2);
    let z = normal_quantile(1.0 - alpha / 2.0)?;
    Ok(EffectInterval {
        center: fit.value,
        half_width: z * fit.variance.sqrt(),
        method: EffectCiMethod::Z(tau2.method),
        level,
        degenerate: false,
    })
}

/// t-quantile interval with the weighted residual variance scale.
pub fn ci_hksj(input: &MetaInput, tau2: &Tau2Result, level: f64) -> Result<EffectInterval> {
    let alpha = check_level("ci_hksj", level)?;
    let fit = iv_weighted_mean(input, tau2.value);
    let method = EffectCiMethod::Hksj(tau2.method);
    if input.is_homogeneous() {
        return Ok(EffectInterval {
            center: fit.mean,
            half_width: 0.0,
            method,
            level,
            degenerate: true,
        });
    }
    let g: Vec<f64> = input.g().collect();
    let df = (input.k() - 1) as f64;
    let variance = weighted_dispersion(&g, &fit) / (df * fit.sum_w);
    let t = t_quantile(1.0 - alpha / 2.0, df)?;
    Ok(EffectInterval {
        center: fit.mean,
        half_width: t * variance.sqrt(),
        method,
        level,
        degenerate: false,
    })
}

/// t-quantile interval around the effective-sample-size weighted mean.
pub fn ci_ssw_kdb(input: &MetaInput, level: f64) -> Result<EffectInterval> {
    ci_ssw_with(input, tau2_kdb(input)?.value, level)
}

/// As [`ci_ssw_kdb`] with a precomputed τ̂².
pub fn ci_ssw_with(input: &MetaInput, tau2: f64, level: f64) -> Result<EffectInterval> {
    let alpha = check_level("ci_ssw_kdb", level)?;
    let fit = effect_ssw_with(input, tau2);
    let t = t_quantile(1.0 - alpha / 2.0, (input.k() - 1) as f64)?;
    Ok(EffectInterval {
        center: fit.value,
        half_width: t * fit.variance.sqrt(),
        method: EffectCiMethod::SswKdb,
        level,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smd::Study;
    use crate::tau2::{tau2_dl, Tau2Status};
    use approx::assert_relative_eq;

    fn fixed(value: f64, method: Tau2Method) -> Tau2Result {
        Tau2Result {
            value,
            method,
            status: Tau2Status::Interior,
            iterations: 0,
        }
    }

    fn meta(g: &[f64], v2: &[f64], sizes: &[(u32, u32)]) -> MetaInput {
        MetaInput::new(
            g.iter()
                .zip(v2)
                .zip(sizes)
                .map(|((&g, &v), &(a, b))| Study::new(a, b, g, v).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn iv_cases() {
        let m = meta(&[0.0, 1.0], &[1.0, 3.0], &[(10, 10); 2]);
        let r = effect_iv(&m, &fixed(1.0, Tau2Method::DL));
        assert_relative_eq!(r.value, 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(r.variance, 4.0 / 3.0, max_relative = 1e-15);
        let m = meta(&[0.3, 0.9], &[0.5, 0.5], &[(10, 10); 2]);
        assert_relative_eq!(
            effect_iv(&m, &fixed(7.0, Tau2Method::MP)).value,
            0.6,
            max_relative = 1e-15
        );
    }

    #[test]
    fn ssw_cases() {
        let m = meta(&[0.2, 0.8], &[0.3, 0.1], &[(10, 10); 2]);
        assert_relative_eq!(effect_ssw_with(&m, 0.0).value, 0.5, max_relative = 1e-15);
        let m = meta(&[0.4, 1.0], &[0.2, 0.2], &[(6, 6), (42, 42)]);
        let r = effect_ssw_with(&m, 0.0);
        assert_eq!(r.weights, vec![3.0, 21.0]);
        assert_relative_eq!(
            r.value,
            (3.0 * 0.4 + 21.0 * 1.0) / 24.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(ssw_variance(&m, 0.0), 0.15625, max_relative = 1e-14);
        let bump = ssw_variance(&m, 0.3) - ssw_variance(&m, 0.0);
        assert_relative_eq!(bump, 0.3 * 450.0 / 576.0, max_relative = 1e-12);
    }

    #[test]
    fn z_interval_two_studies() {
        let m = meta(&[0.0, 2.0], &[1.0, 1.0], &[(10, 10); 2]);
        let dl = tau2_dl(&m).unwrap();
        assert_relative_eq!(dl.value, 1.0, max_relative = 1e-14);
        let ci = ci_z(&m, &dl, 0.95).unwrap();
        assert_relative_eq!(ci.center, 1.0, max_relative = 1e-15);
        assert_relative_eq!(ci.half_width, 1.959964, max_relative = 1e-6);
        assert_eq!(ci.method.name(), "Z-DL");
    }

    #[test]
    fn hksj_two_studies() {
        let m = meta(&[0.0, 2.0], &[1.0, 1.0], &[(10, 10); 2]);
        let ci = ci_hksj(&m, &fixed(1.0, Tau2Method::DL), 0.95).unwrap();
        assert_relative_eq!(ci.half_width, 12.7062, max_relative = 1e-5);
        assert_eq!(ci.method.name(), "HKSJ");
        assert!(!ci.degenerate);
    }

    #[test]
    fn hksj_degenerate() {
        let m = meta(&[0.7; 3], &[0.1, 0.2, 0.3], &[(10, 10); 3]);
        let ci = ci_hksj(&m, &fixed(0.0, Tau2Method::KDB), 0.95).unwrap();
        assert_eq!(ci.half_width, 0.0);
        assert!(ci.degenerate);
        assert_eq!(ci.method.name(), "HKSJ-KDB");
    }

    #[test]
    fn hksj_equal_variances_ignore_tau2() {
        let m = meta(&[0.1, 0.5, 1.1, -0.2], &[0.25; 4], &[(10, 10); 4]);
        let a = ci_hksj(&m, &fixed(0.1, Tau2Method::DL), 0.95).unwrap();
        let b = ci_hksj(&m, &fixed(2.3, Tau2Method::KDB), 0.95).unwrap();
        assert_relative_eq!(a.half_width, b.half_width, max_relative = 1e-12);
    }

    #[test]
    fn ssw_interval_at_zero_tau2() {
        let m = meta(
            &[0.1, 0.5, 0.9],
            &[0.2, 0.1, 0.4],
            &[(10, 10), (20, 20), (5, 5)],
        );
        let ci = ci_ssw_with(&m, 0.0, 0.95).unwrap();
        let t = t_quantile(0.975, 2.0).unwrap();
        let n = [5.0, 10.0, 2.5];
        let var = (25.0 * 0.2 + 100.0 * 0.1 + 6.25 * 0.4) / (17.5f64 * 17.5);
        assert_relative_eq!(ci.half_width, t * var.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(
            ci.center,
            (n[0] * 0.1 + n[1] * 0.5 + n[2] * 0.9) / 17.5,
            max_relative = 1e-14
        );
    }

    #[test]
    fn names_parse() {
        for m in EffectCiMethod::ALL {
            assert_eq!(EffectCiMethod::parse(m.name()), Some(m));
        }
        let names: Vec<&str> = Weighting::ALL.iter().map(|w| w.name()).collect();
        assert_eq!(names, ["DL", "REML", "MP", "J", "KDB", "SSW"]);
    }
}
