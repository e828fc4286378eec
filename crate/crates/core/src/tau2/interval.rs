use super::kdb::corrected_expected_q;
use super::point::{restricted_loglik, tau2_reml};
use super::{check_level, Tau2CiMethod, Tau2Interval};
use crate::error::{Error, Result};
use crate::numkernel::{
    chisq_quantile, compensated_sum, mixture_cdf, symmetric_eigenvalues, ChiSqMixture, SymMatrix,
};
use crate::qstat::{solve_q_equals, MetaInput, TAU2_CAP};

/// Solution of a monotone endpoint equation.
enum Endpoint {
    Zero,
    At(f64),
    Unbounded,
}

impl Endpoint {
    fn value(&self) -> f64 {
        match self {
            Endpoint::Zero => 0.0,
            Endpoint::At(t) => *t,
            Endpoint::Unbounded => f64::INFINITY,
        }
    }
}

fn build(method: Tau2CiMethod, level: f64, lo: Endpoint, hi: Endpoint, flat: bool) -> Tau2Interval {
    let lo_truncated = matches!(lo, Endpoint::Zero);
    let hi_truncated = matches!(hi, Endpoint::Zero);
    let (lo, hi) = (lo.value(), hi.value());
    Tau2Interval {
        lo: lo.min(hi),
        hi,
        method,
        level,
        lo_truncated,
        hi_truncated,
        flat,
    }
}

fn q_root(input: &MetaInput, target: f64) -> Result<Endpoint> {
    match solve_q_equals(input, target) {
        Ok(r) if r.tau2 == 0.0 => Ok(Endpoint::Zero),
        Ok(r) => Ok(Endpoint::At(r.tau2)),
        Err(Error::BracketExceeded { .. }) => Ok(Endpoint::Unbounded),
        Err(e) => Err(e),
    }
}

fn q_profile(input: &MetaInput, df: f64, level: f64, method: Tau2CiMethod) -> Result<Tau2Interval> {
    let alpha = check_level("q_profile", level)?;
    let lo = q_root(input, chisq_quantile(1.0 - alpha / 2.0, df)?)?;
    let hi = q_root(input, chisq_quantile(alpha / 2.0, df)?)?;
    Ok(build(method, level, lo, hi, false))
}

/// Q-profile interval with K - 1 degrees of freedom.
pub fn ci_qp(input: &MetaInput, level: f64) -> Result<Tau2Interval> {
    q_profile(input, (input.k() - 1) as f64, level, Tau2CiMethod::QP)
}

/// Q-profile interval with the corrected mean of Q as fractional degrees of freedom.
pub fn ci_kdb(input: &MetaInput, level: f64) -> Result<Tau2Interval> {
    ci_kdb_with(input, corrected_expected_q(input)?, level)
}

/// As [`ci_kdb`] with a precomputed corrected mean.
pub fn ci_kdb_with(input: &MetaInput, expected_q: f64, level: f64) -> Result<Tau2Interval> {
    q_profile(input, expected_q, level, Tau2CiMethod::KDB)
}

/// P(Q ≤ x) for Q = Σ a_i (y_i - ȳ_a)² with fixed weights `a`, when
/// y_i ~ N(μ, v_i² + τ²) independently.
pub fn exact_q_cdf(x: f64, weights: &[f64], v2: &[f64], tau2: f64) -> Result<f64> {
    let k = weights.len();
    let total = compensated_sum(weights.iter().copied());
    let root_d: Vec<f64> = v2.iter().map(|v| (v + tau2).sqrt()).collect();
    let mut m = SymMatrix::zeros(k);
    for i in 0..k {
        for j in 0..=i {
            let a = if i == j { weights[i] } else { 0.0 } - weights[i] * weights[j] / total;
            let val = root_d[i] * a * root_d[j];
            m.set(i, j, val);
            m.set(j, i, val);
        }
    }
    let eig = symmetric_eigenvalues(&m)?;
    let top = eig.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Ok(if x >= 0.0 { 1.0 } else { 0.0 });
    }
    let positive: Vec<f64> = eig.into_iter().filter(|l| *l > 1e-12 * top).collect();
    mixture_cdf(x, &ChiSqMixture::new(positive)?)
}

const ROOT_MAX_ITER: usize = 200;
/// Slack for the monotonicity check, above the CDF's own error.
const MONOTONE_SLACK: f64 = 1e-6;

/// Solve `f(τ²) = p` for a function decreasing from f(0).
fn invert_decreasing(
    mut f: impl FnMut(f64) -> Result<f64>,
    p: f64,
    start: f64,
    what: &'static str,
) -> Result<Endpoint> {
    let f0 = f(0.0)?;
    if f0 <= p {
        return Ok(Endpoint::Zero);
    }
    let (mut a, mut fa) = (0.0, f0 - p);
    let mut b = start.clamp(1e-8, TAU2_CAP);
    let mut fb = f(b)? - p;
    while fb > 0.0 {
        if fb > fa + MONOTONE_SLACK {
            return Err(Error::NonMonotone { what, at: b });
        }
        if b >= TAU2_CAP {
            return Ok(Endpoint::Unbounded);
        }
        a = b;
        fa = fb;
        b = (2.0 * b).min(TAU2_CAP);
        fb = f(b)? - p;
    }
    if fb < fa - 1.0 - MONOTONE_SLACK {
        return Err(Error::NonMonotone { what, at: b });
    }
    brent(&mut f, p, a, fa, b, fb, what).map(Endpoint::At)
}

/// Brent's method on a sign-changing bracket, for g(τ) = f(τ) - p.
fn brent(
    f: &mut impl FnMut(f64) -> Result<f64>,
    p: f64,
    mut a: f64,
    mut fa: f64,
    mut b: f64,
    mut fb: f64,
    what: &'static str,
) -> Result<f64> {
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..ROOT_MAX_ITER {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5e-9 * (1.0 + b.abs());
        let half = 0.5 * (c - b);
        if half.abs() <= tol || fb == 0.0 {
            return Ok(b.max(0.0));
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut pn, mut q);
            if a == c {
                pn = 2.0 * half * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                pn = s * (2.0 * half * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if pn > 0.0 {
                q = -q;
            }
            pn = pn.abs();
            if 2.0 * pn < (3.0 * half * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = pn / q;
            } else {
                d = half;
                e = d;
            }
        } else {
            d = half;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(half) };
        fb = f(b)? - p;
    }
    Err(Error::NonConvergence {
        what,
        iterations: ROOT_MAX_ITER,
        bound: (c - b).abs(),
    })
}

fn exact_cdf_interval(
    input: &MetaInput,
    weights: Vec<f64>,
    level: f64,
    method: Tau2CiMethod,
    what: &'static str,
) -> Result<Tau2Interval> {
    let alpha = check_level(what, level)?;
    let v2: Vec<f64> = input.v2().collect();
    let g: Vec<f64> = input.g().collect();
    let total = compensated_sum(weights.iter().copied());
    let mean = compensated_sum(g.iter().zip(&weights).map(|(g, w)| g * w)) / total;
    let q_obs = compensated_sum(g.iter().zip(&weights).map(|(g, w)| w * (g - mean).powi(2)));
    if q_obs <= 0.0 {
        return Ok(build(method, level, Endpoint::Zero, Endpoint::Zero, false));
    }
    let cdf = |tau2: f64| exact_q_cdf(q_obs, &weights, &v2, tau2);
    let start = input.max_v2().max(1e-3);
    let lo = invert_decreasing(cdf, 1.0 - alpha / 2.0, start, what)?;
    let hi_start = match lo {
        Endpoint::At(t) => t.max(start),
        _ => start,
    };
    let hi = invert_decreasing(cdf, alpha / 2.0, hi_start, what)?;
    Ok(build(method, level, lo, hi, false))
}

/// Interval from the exact distribution of Q with fixed weights 1/v_i².
pub fn ci_bj(input: &MetaInput, level: f64) -> Result<Tau2Interval> {
    let w = input.v2().map(|v| 1.0 / v).collect();
    exact_cdf_interval(
        input,
        w,
        level,
        Tau2CiMethod::BJ,
        "exact Q CDF (1/v² weights)",
    )
}

/// Interval from the exact distribution of the generalized Q with weights 1/v_i.
pub fn ci_jackson(input: &MetaInput, level: f64) -> Result<Tau2Interval> {
    let u = input.v2().map(|v| 1.0 / v.sqrt()).collect();
    exact_cdf_interval(
        input,
        u,
        level,
        Tau2CiMethod::J,
        "exact Q CDF (1/v weights)",
    )
}

const PL_MAX_BISECTIONS: usize = 200;

/// Profile-likelihood interval around the REML estimate.
pub fn ci_pl(input: &MetaInput, level: f64) -> Result<Tau2Interval> {
    check_level("ci_pl", level)?;
    let crit = 0.5 * chisq_quantile(level, 1.0)?;
    let center = tau2_reml(input)?.value;
    let top = restricted_loglik(input, center);
    // positive inside the interval
    let inside = |t: f64| crit - (top - restricted_loglik(input, t));

    let bisect = |mut a: f64, mut b: f64| -> Result<f64> {
        // inside(a) > 0 ≥ inside(b)
        for _ in 0..PL_MAX_BISECTIONS {
            let mid = 0.5 * (a + b);
            if (b - a).abs() <= 1e-10 * (1.0 + mid) {
                return Ok(mid);
            }
            if inside(mid) > 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        Err(Error::NonConvergence {
            what: "profile likelihood bisection",
            iterations: PL_MAX_BISECTIONS,
            bound: (b - a).abs(),
        })
    };

    let lo = if center == 0.0 || inside(0.0) > 0.0 {
        Endpoint::Zero
    } else {
        Endpoint::At(bisect(center, 0.0)?)
    };

    let mut step = center.max(input.max_v2()).max(1e-3);
    let mut b = center + step;
    let mut flat = false;
    let hi = loop {
        if inside(b) <= 0.0 {
            break Endpoint::At(bisect(center, b)?);
        }
        if b >= TAU2_CAP {
            flat = (top - restricted_loglik(input, b)).abs() < 1e-12;
            break Endpoint::Unbounded;
        }
        step *= 2.0;
        b = (center + step).min(TAU2_CAP);
    };
    Ok(build(Tau2CiMethod::PL, level, lo, hi, flat))
}
