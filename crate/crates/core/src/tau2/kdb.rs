//! Small-sample corrected null mean of Q for standardized mean differences.
//!
//! Under homogeneity each g_i is a scaled non-central t, and Q(0) is
//! A - N²/S with A = Σ W_i ε_i², N = Σ W_i ε_i, S = Σ W_i, where
//! W_i = 1/v_i² and ε_i = g_i - δ. E[A] is exact. E[N²/S] is expanded to second
//! order around S̄ = E[S]. The per-study expectations E[W^a ε^b] are evaluated
//! by product trapezoid rules over the normal numerator and the log of the
//! chi-square denominator of the t variable, which converge geometrically for
//! these smooth, bounded integrands.

use super::{Tau2Method, Tau2Result};
use crate::error::{Error, Result};
use crate::numkernel::compensated_sum;
use crate::qstat::{solve_q_equals, MetaInput};
use crate::smd::{effective_n, g_variance_slope, j_factor};

const Z_STEP: f64 = 0.4;
const Z_MAX: f64 = 9.0;
const Y_STEP: f64 = 0.3;

/// Moments E[W^a ε^b] of one study, indexed `[a][b]` for a ≤ 4, b ≤ 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdbMoments {
    m: [[f64; 3]; 5],
}

impl KdbMoments {
    pub fn compute(n_t: u32, n_c: u32, delta: f64) -> Result<Self> {
        if n_t < 2 || n_c < 2 || n_t + n_c < 5 {
            return Err(Error::domain(
                "KdbMoments::compute",
                format!("arm sizes ({n_t}, {n_c}) too small"),
            ));
        }
        let df = n_t + n_c - 2;
        let mf = df as f64;
        let eff = effective_n(n_t, n_c);
        let scale = j_factor(df)? / eff.sqrt();
        let shift = eff.sqrt() * delta;
        let a = (n_t + n_c) as f64 / (n_t as f64 * n_c as f64);
        let b = g_variance_slope(df)?;

        let zs = trapezoid_nodes(-Z_MAX, Z_MAX, Z_STEP, |z| -0.5 * z * z);
        // t = ln(X/m) for X ~ χ²_m; log density ∝ (m/2)(t - e^t + 1)
        let sd = (2.0 / mf).sqrt();
        let lower = (12.0 * sd).max(60.0 / mf);
        let ts = trapezoid_nodes(-lower, 8.0 * sd, Y_STEP * sd, |t| {
            -0.5 * mf * (t.exp_m1() - t)
        });

        let mut acc = [[0.0; 3]; 5];
        for &(t, wt) in &ts {
            let inv_root = (-0.5 * t).exp();
            for &(z, wz) in &zs {
                let g = scale * (z + shift) * inv_root;
                let w = 1.0 / (a + b * g * g);
                let e = g - delta;
                let weight = wt * wz;
                let mut wp = weight;
                for row in acc.iter_mut() {
                    row[0] += wp;
                    row[1] += wp * e;
                    row[2] += wp * e * e;
                    wp *= w;
                }
            }
        }
        Ok(Self { m: acc })
    }

    /// E[W^a ε^b].
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.m[a][b]
    }
}

/// Nodes and normalized weights of a trapezoid rule for a density known up to
/// a constant through its logarithm.
fn trapezoid_nodes(
    lo: f64,
    hi: f64,
    step: f64,
    log_density: impl Fn(f64) -> f64,
) -> Vec<(f64, f64)> {
    let count = ((hi - lo) / step).ceil() as usize;
    let mut nodes: Vec<(f64, f64)> = (0..=count)
        .map(|i| {
            let x = lo + i as f64 * step;
            (x, log_density(x).exp())
        })
        .collect();
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    for n in &mut nodes {
        n.1 /= total;
    }
    nodes
}

/// Corrected E[Q(0)] for studies of the given arm sizes under a common effect δ.
pub fn expected_q_at(sizes: &[(u32, u32)], delta: f64) -> Result<f64> {
    if sizes.len() < 2 {
        return Err(Error::domain("expected_q_at", "need at least 2 studies"));
    }
    let mut cache: Vec<((u32, u32), KdbMoments)> = Vec::new();
    let mut per_study = Vec::with_capacity(sizes.len());
    for &key in sizes {
        let m = match cache.iter().find(|(k, _)| *k == key) {
            Some((_, m)) => *m,
            None => {
                let m = KdbMoments::compute(key.0, key.1, delta)?;
                cache.push((key, m));
                m
            }
        };
        per_study.push(m);
    }
    Ok(assemble(&per_study))
}

fn assemble(ms: &[KdbMoments]) -> f64 {
    let sum = |f: &dyn Fn(&KdbMoments) -> f64| compensated_sum(ms.iter().map(f));
    let expect_a = sum(&|m| m.get(1, 2));
    let s_bar = sum(&|m| m.get(1, 0));
    let y1: Vec<f64> = ms.iter().map(|m| m.get(1, 1)).collect();
    let sum_y1 = compensated_sum(y1.iter().copied());
    let sum_y1_sq = compensated_sum(y1.iter().map(|y| y * y));
    let sum_y2 = sum(&|m| m.get(2, 2));
    let expect_n2 = sum_y2 + sum_y1 * sum_y1 - sum_y1_sq;
    let var_y: Vec<f64> = ms
        .iter()
        .zip(&y1)
        .map(|(m, y)| m.get(2, 2) - y * y)
        .collect();
    let sum_var_y = compensated_sum(var_y.iter().copied());

    let mut cov_n2_s = 0.0;
    let mut n2_dev2 = 0.0;
    let mut sum_c = 0.0;
    let mut sum_c2 = 0.0;
    for (k, m) in ms.iter().enumerate() {
        let w1 = m.get(1, 0);
        let rest = sum_y1 - y1[k];
        let c = m.get(2, 1) - y1[k] * w1;
        let cov_y2_w = m.get(3, 2) - m.get(2, 2) * w1;
        cov_n2_s += cov_y2_w + 2.0 * rest * c;
        let y2u2 = m.get(4, 2) - 2.0 * w1 * m.get(3, 2) + w1 * w1 * m.get(2, 2);
        let yu2 = m.get(3, 1) - 2.0 * w1 * m.get(2, 1) + w1 * w1 * m.get(1, 1);
        let var_w = m.get(2, 0) - w1 * w1;
        let rest2 = (sum_var_y - var_y[k]) + rest * rest;
        n2_dev2 += y2u2 + 2.0 * rest * yu2 + rest2 * var_w;
        sum_c += c;
        sum_c2 += c * c;
    }
    n2_dev2 += 2.0 * (sum_c * sum_c - sum_c2);
    let expect_b = (expect_n2 - cov_n2_s / s_bar + n2_dev2 / (s_bar * s_bar)) / s_bar;
    expect_a - expect_b
}

/// Corrected E[Q(0)] at the studies' sizes, with δ replaced by the
/// effective-sample-size weighted mean of the observed g.
pub fn corrected_expected_q(input: &MetaInput) -> Result<f64> {
    let sizes: Vec<(u32, u32)> = input.studies().iter().map(|s| (s.n_t(), s.n_c())).collect();
    let weights: Vec<f64> = input.studies().iter().map(|s| s.effective_n()).collect();
    let delta = compensated_sum(input.g().zip(&weights).map(|(g, w)| g * w))
        / compensated_sum(weights.iter().copied());
    expected_q_at(&sizes, delta)
}

/// Moment estimator solving Q(τ²) = corrected E[Q].
pub fn tau2_kdb(input: &MetaInput) -> Result<Tau2Result> {
    tau2_kdb_with(input, corrected_expected_q(input)?)
}

/// As [`tau2_kdb`] with a precomputed corrected mean.
pub fn tau2_kdb_with(input: &MetaInput, expected_q: f64) -> Result<Tau2Result> {
    let root = solve_q_equals(input, expected_q)?;
    Ok(Tau2Result::new(root.tau2, Tau2Method::KDB, root.iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{ln_gamma, RandomStream};
    use crate::qstat::q_statistic;
    use crate::smd::{sample_g, Study};
    use approx::assert_relative_eq;

    /// First-order delta-method expansion using exact moments of g.
    fn first_order(sizes: &[(u32, u32)], d: f64) -> f64 {
        let mut ea = 0.0;
        let (mut s0, mut en0, mut en0n1, mut sum_w1s2, mut en1b, mut en0n2) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let (mut a1, mut a2, mut a3, mut a4, mut a5, mut a6, mut a7) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for &(nt, nc) in sizes {
            let m = (nt + nc - 2) as f64;
            let eff = effective_n(nt, nc);
            let j = j_factor(nt + nc - 2).unwrap();
            let s = j / eff.sqrt();
            let lam = eff.sqrt() * d;
            let c = |k: f64| {
                ((k / 2.0) * (m / 2.0).ln() + ln_gamma((m - k) / 2.0).unwrap()
                    - ln_gamma(m / 2.0).unwrap())
                .exp()
            };
            let ez = [
                1.0,
                lam,
                lam * lam + 1.0,
                lam.powi(3) + 3.0 * lam,
                lam.powi(4) + 6.0 * lam * lam + 3.0,
            ];
            let r: Vec<f64> = (0..5)
                .map(|k| c(k as f64) * ez[k] * s.powi(k as i32))
                .collect();
            let mu = r[1];
            let s2 = r[2] - mu * mu;
            let m3 = r[3] - 3.0 * mu * r[2] + 2.0 * mu.powi(3);
            let m4 = r[4] - 4.0 * mu * r[3] + 6.0 * mu * mu * r[2] - 3.0 * mu.powi(4);
            let a = (nt + nc) as f64 / (nt as f64 * nc as f64);
            let b = g_variance_slope(nt + nc - 2).unwrap();
            let w = 1.0 / (a + b * d * d);
            let w1 = -2.0 * b * d * w * w;
            let w2 = -2.0 * b * w * w + 8.0 * b * b * d * d * w.powi(3);
            ea += w * s2 + w1 * m3 + 0.5 * w2 * m4;
            s0 += w;
            en0 += w * w * s2;
            en0n1 += w * w1 * m3;
            sum_w1s2 += w1 * s2;
            en1b += w1 * w1 * (m4 - s2 * s2);
            en0n2 += 0.5 * w * w2 * m4;
            a1 += w * w * w1 * m3;
            a2 += w * w1 * s2;
            a3 += w * w1 * w1 * s2 * s2;
            a4 += w2 * s2;
            a5 += w * w * w2 * s2 * s2;
            a6 += w1 * w1 * s2;
            a7 += w * w * w1 * w1 * s2 * s2;
        }
        let en1 = sum_w1s2 * sum_w1s2 + en1b;
        let en0d1 = a1 / s0;
        let en0n1d1 = (a2 * sum_w1s2 + 2.0 * a3) / s0;
        let en0d2 = (en0 * a4 + 2.0 * a5) / (2.0 * s0);
        let en0d1sq = (en0 * a6 + 2.0 * a2 * a2 + 2.0 * a7) / (s0 * s0);
        let eb =
            (en0 + 2.0 * en0n1 + en1 + 2.0 * en0n2 - en0d1 - 2.0 * en0n1d1 - en0d2 + en0d1sq) / s0;
        ea - eb
    }

    #[test]
    fn zeroth_moment_is_one_and_mean_error_vanishes() {
        let m = KdbMoments::compute(10, 10, 0.5).unwrap();
        assert_relative_eq!(m.get(0, 0), 1.0, max_relative = 1e-14);
        // g is unbiased: E[ε] = 0
        assert!(m.get(0, 1).abs() < 1e-9, "{}", m.get(0, 1));
        let m = KdbMoments::compute(3, 9, 2.0).unwrap();
        assert!(m.get(0, 1).abs() < 1e-8, "{}", m.get(0, 1));
    }

    #[test]
    fn large_samples_approach_k_minus_one() {
        for k in [2usize, 5, 30] {
            let sizes = vec![(500_000, 500_000); k];
            let e = expected_q_at(&sizes, 0.5).unwrap();
            assert!((e - (k - 1) as f64).abs() < 1e-3, "K={k}: {e}");
        }
    }

    #[test]
    fn agrees_with_first_order_expansion_at_moderate_n() {
        for &(nt, nc, d) in &[(100u32, 100u32, 0.5), (150, 50, 1.0), (400, 400, 2.0)] {
            let sizes = vec![(nt, nc); 6];
            let exact = expected_q_at(&sizes, d).unwrap();
            let approx = first_order(&sizes, d);
            let correction = (exact - 5.0).abs();
            assert!(
                (exact - approx).abs() < 0.1 * correction + 2e-3,
                "{nt},{nc},{d}: {exact} vs {approx}"
            );
        }
    }

    #[test]
    fn invariant_to_study_order() {
        let a = expected_q_at(&[(12, 12), (16, 16), (84, 84), (9, 27)], 0.7).unwrap();
        let b = expected_q_at(&[(84, 84), (9, 27), (12, 12), (16, 16)], 0.7).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn matches_simulated_null_mean() {
        let sizes = vec![(10u32, 10u32); 5];
        let delta = 0.5;
        let target = expected_q_at(&sizes, delta).unwrap();
        let mut rng = RandomStream::new(17, 3).rng();
        let reps = 100_000;
        let qs: Vec<f64> = (0..reps)
            .map(|_| {
                let studies: Vec<Study> = sizes
                    .iter()
                    .map(|&(nt, nc)| sample_g(&mut rng, nt, nc, delta).unwrap())
                    .collect();
                q_statistic(&MetaInput::new(studies).unwrap(), 0.0)
            })
            .collect();
        let n = reps as f64;
        let mean = qs.iter().sum::<f64>() / n;
        let se = (qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        assert!(
            (target - mean).abs() < 3.0 * se,
            "{target} vs {mean} ± {se}"
        );
    }

    #[test]
    fn kdb_tracks_mp_for_huge_samples() {
        let studies: Vec<Study> = [0.1, 0.5, -0.2, 0.9, 0.4]
            .iter()
            .map(|&g| Study::from_g(500_000, 500_000, g).unwrap())
            .collect();
        let m = MetaInput::new(studies).unwrap();
        let kdb = tau2_kdb(&m).unwrap().value;
        let mp = super::super::tau2_mp(&m).unwrap().value;
        assert!((kdb - mp).abs() < 1e-6 + 1e-3 * mp, "{kdb} vs {mp}");
    }
}
