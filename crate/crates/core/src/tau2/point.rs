use super::{Tau2Method, Tau2Result, Tau2Status};
use crate::error::{Error, Result};
use crate::numkernel::compensated_sum;
use crate::qstat::{iv_weighted_mean, q_statistic, solve_q_equals, MetaInput};

/// DerSimonian-Laird moment estimator.
pub fn tau2_dl(input: &MetaInput) -> Result<Tau2Result> {
    let w: Vec<f64> = input.v2().map(|v| 1.0 / v).collect();
    let s1 = compensated_sum(w.iter().copied());
    let s2 = compensated_sum(w.iter().map(|w| w * w));
    let denom = s1 - s2 / s1;
    if !(denom > 0.0) {
        return Err(Error::Degenerate(format!(
            "DL denominator {denom} is not positive"
        )));
    }
    let excess = q_statistic(input, 0.0) - (input.k() - 1) as f64;
    Ok(Tau2Result::new(excess / denom, Tau2Method::DL, 0))
}

/// Mandel-Paule: Q(τ²) = K - 1.
pub fn tau2_mp(input: &MetaInput) -> Result<Tau2Result> {
    let root = solve_q_equals(input, (input.k() - 1) as f64)?;
    Ok(Tau2Result::new(root.tau2, Tau2Method::MP, root.iterations))
}

/// Restricted log-likelihood up to an additive constant.
pub fn restricted_loglik(input: &MetaInput, tau2: f64) -> f64 {
    let fit = iv_weighted_mean(input, tau2);
    let log_det = compensated_sum(input.v2().map(|v| (v + tau2).ln()));
    let q = compensated_sum(
        input
            .g()
            .zip(&fit.weights)
            .map(|(g, w)| w * (g - fit.mean).powi(2)),
    );
    -0.5 * (log_det + fit.sum_w.ln() + q)
}

const REML_MAX_ITER: usize = 200;
const REML_MAX_HALVINGS: usize = 60;

fn reml_update(input: &MetaInput, tau2: f64) -> f64 {
    let fit = iv_weighted_mean(input, tau2);
    let sw2 = compensated_sum(fit.weights.iter().map(|w| w * w));
    let num = compensated_sum(
        input
            .g()
            .zip(input.v2())
            .zip(&fit.weights)
            .map(|((g, v), w)| w * w * ((g - fit.mean).powi(2) - v)),
    );
    (num / sw2 + 1.0 / fit.sum_w).max(0.0)
}

/// REML by damped fixed-point iteration started at the DL value.
pub fn tau2_reml(input: &MetaInput) -> Result<Tau2Result> {
    let mut tau2 = tau2_dl(input)?.value;
    let mut ll = restricted_loglik(input, tau2);
    for it in 1..=REML_MAX_ITER {
        let proposal = reml_update(input, tau2);
        let mut next = proposal;
        let mut ll_next = restricted_loglik(input, next);
        let mut halvings = 0;
        while ll_next < ll && halvings < REML_MAX_HALVINGS {
            next = 0.5 * (tau2 + next);
            ll_next = restricted_loglik(input, next);
            halvings += 1;
        }
        let step = next - tau2;
        tau2 = next;
        ll = ll_next;
        if step.abs() <= 1e-8 * (1.0 + tau2) {
            return Ok(Tau2Result::new(tau2, Tau2Method::REML, it));
        }
    }
    Ok(Tau2Result {
        value: tau2,
        method: Tau2Method::REML,
        status: Tau2Status::MaxIter,
        iterations: REML_MAX_ITER,
    })
}

/// Generalized Q moment estimator with fixed weights 1/v_i.
pub fn tau2_jackson(input: &MetaInput) -> Tau2Result {
    let u: Vec<f64> = input.v2().map(|v| 1.0 / v.sqrt()).collect();
    let total = compensated_sum(u.iter().copied());
    let mean = compensated_sum(input.g().zip(&u).map(|(g, u)| u * g)) / total;
    let q = compensated_sum(input.g().zip(&u).map(|(g, u)| u * (g - mean).powi(2)));
    let c: Vec<f64> = u.iter().map(|u| u - u * u / total).collect();
    let sc = compensated_sum(c.iter().copied());
    let cv = compensated_sum(c.iter().zip(input.v2()).map(|(c, v)| c * v));
    Tau2Result::new((q - cv) / sc, Tau2Method::J, 0)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::meta;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dl_cases() {
        let r = tau2_dl(&meta(&[-1.0, 0.0, 1.0], &[1.0, 1.0, 1.0])).unwrap();
        assert_eq!((r.value, r.status), (0.0, Tau2Status::TruncatedAtZero));
        let r = tau2_dl(&meta(&[-2.0, 0.0, 2.0], &[1.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(r.value, 3.0, max_relative = 1e-14);
        assert_eq!(r.status, Tau2Status::Interior);
    }

    #[test]
    fn mp_cases() {
        let r = tau2_mp(&meta(&[-2.0, 0.0, 2.0], &[1.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(r.value, 3.0, max_relative = 1e-7);
        let r = tau2_mp(&meta(&[-0.5, 0.0, 0.5], &[1.0, 1.0, 1.0])).unwrap();
        assert!(r.is_truncated());
        let m = meta(&[0.1, 0.9, -0.7, 1.8, 0.4], &[0.3; 5]);
        assert_relative_eq!(
            tau2_mp(&m).unwrap().value,
            tau2_dl(&m).unwrap().value,
            max_relative = 1e-7
        );
    }

    #[test]
    fn reml_cases() {
        let r = tau2_reml(&meta(&[-2.0, 0.0, 2.0], &[1.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(r.value, 3.0, max_relative = 1e-7);
        assert_eq!(r.status, Tau2Status::Interior);
        assert_eq!(
            tau2_reml(&meta(&[0.4; 4], &[0.2, 0.3, 0.1, 0.5]))
                .unwrap()
                .value,
            0.0
        );
    }

    fn restricted_score(m: &MetaInput, tau2: f64) -> f64 {
        let fit = iv_weighted_mean(m, tau2);
        let sw2: f64 = fit.weights.iter().map(|w| w * w).sum();
        let r: f64 = m
            .g()
            .zip(&fit.weights)
            .map(|(g, w)| w * w * (g - fit.mean).powi(2))
            .sum();
        0.5 * (r - fit.sum_w + sw2 / fit.sum_w)
    }

    #[test]
    fn reml_solves_score_equation_and_maximizes() {
        let m = meta(
            &[0.1, 1.4, -0.6, 0.9, 2.2, 0.3],
            &[0.12, 0.4, 0.25, 0.08, 0.6, 0.2],
        );
        let r = tau2_reml(&m).unwrap();
        assert_eq!(r.status, Tau2Status::Interior);
        assert!(restricted_score(&m, r.value).abs() < 1e-6);
        let best = restricted_loglik(&m, r.value);
        for i in 0..1000 {
            let t = 5.0 * i as f64 / 999.0;
            assert!(restricted_loglik(&m, t) <= best + 1e-12, "tau2 = {t}");
        }
    }

    #[test]
    fn jackson_cases() {
        let r = tau2_jackson(&meta(&[0.0, 2.0], &[1.0, 4.0]));
        assert_eq!(r.value, 0.0);
        let m = meta(&[-2.0, 0.0, 2.0], &[1.0, 1.0, 1.0]);
        assert_relative_eq!(tau2_jackson(&m).value, 3.0, max_relative = 1e-14);
        let m = meta(&[0.2, 0.2], &[0.3, 0.6]);
        assert!(tau2_jackson(&m).is_truncated());
    }

    #[test]
    fn jackson_hand_computation_interior() {
        // g=(0,4), v²=(1,4): u=(1,1/2), mean 4/3, Q=1·16/9+½·64/9=48/9, Σc v²=5/3, Σc=2/3
        let r = tau2_jackson(&meta(&[0.0, 4.0], &[1.0, 4.0]));
        assert_relative_eq!(
            r.value,
            (48.0 / 9.0 - 5.0 / 3.0) / (2.0 / 3.0),
            max_relative = 1e-14
        );
    }
}
