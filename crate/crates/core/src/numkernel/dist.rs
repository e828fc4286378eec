use super::special::{gamma_p, gamma_q, ln_gamma_half_ratio, ln_gamma_unchecked, reg_inc_beta};
use crate::error::{Error, Result};
use std::f64::consts::{PI, SQRT_2};

/// Iteration cap shared by the bisection + Newton quantile inverters.
const QUANTILE_MAX_ITER: usize = 200;
const QUANTILE_TOL: f64 = 1e-12;

fn check_prob(func: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(func, format!("p = {p} outside (0, 1)")))
    }
}

fn check_df(func: &'static str, df: f64) -> Result<()> {
    if df > 0.0 && !df.is_nan() {
        Ok(())
    } else {
        Err(Error::domain(func, format!("df = {df} must be positive")))
    }
}

fn erfc(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z >= 0.0 {
        gamma_q(0.5, z * z).unwrap_or(0.0)
    } else {
        2.0 - erfc(-z)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile (rational start, Halley polish to full precision).
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_prob("normal_quantile", p)?;
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (-p).ln_1p()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    for _ in 0..2 {
        let e = if x < 0.0 {
            normal_cdf(x) - p
        } else {
            (1.0 - p) - normal_cdf(-x)
        };
        let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Chi-squared CDF with (possibly fractional) degrees of freedom.
pub fn chisq_cdf(x: f64, df: f64) -> Result<f64> {
    check_df("chisq_cdf", df)?;
    if !(x >= 0.0) {
        return Err(Error::domain(
            "chisq_cdf",
            format!("x = {x} must be nonnegative"),
        ));
    }
    gamma_p(0.5 * df, 0.5 * x)
}

/// Chi-squared density.
pub fn chisq_pdf(x: f64, df: f64) -> Result<f64> {
    check_df("chisq_pdf", df)?;
    if x < 0.0 {
        return Ok(0.0);
    }
    if x == 0.0 {
        return Ok(match df {
            d if d < 2.0 => f64::INFINITY,
            2.0 => 0.5,
            _ => 0.0,
        });
    }
    let k = 0.5 * df;
    Ok(((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma_unchecked(k)).exp())
}

/// Chi-squared quantile by geometric bracketing, bisection and a Newton polish.
pub fn chisq_quantile(p: f64, df: f64) -> Result<f64> {
    check_prob("chisq_quantile", p)?;
    check_df("chisq_quantile", df)?;
    let cdf = |x: f64| chisq_cdf(x, df);

    let mut hi = df.max(1.0);
    let mut guard = 0;
    while cdf(hi)? < p {
        hi *= 2.0;
        guard += 1;
        if guard > 2000 {
            return Err(Error::NonConvergence {
                what: "chi-squared quantile bracket",
                iterations: guard,
                bound: hi,
            });
        }
    }
    let mut lo = 0.5 * hi;
    while lo > 0.0 && cdf(lo)? > p {
        hi = lo;
        lo *= 0.5;
        guard += 1;
        if guard > 4000 {
            return Err(Error::NonConvergence {
                what: "chi-squared quantile bracket",
                iterations: guard,
                bound: lo,
            });
        }
    }
    invert_monotone("chi-squared quantile", p, lo, hi, &cdf, &|x| {
        chisq_pdf(x, df)
    })
}

/// Bisection until the bracket is tight, then Newton steps kept inside it.
fn invert_monotone(
    what: &'static str,
    p: f64,
    mut lo: f64,
    mut hi: f64,
    cdf: &dyn Fn(f64) -> Result<f64>,
    pdf: &dyn Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let mut iterations = 0;
    while iterations < QUANTILE_MAX_ITER {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if cdf(mid)? < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-6 * hi.abs().max(lo.abs()).max(1e-300) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    let mut err = cdf(x)? - p;
    while iterations < QUANTILE_MAX_ITER {
        if err.abs() <= QUANTILE_TOL {
            return Ok(x);
        }
        iterations += 1;
        if err < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = pdf(x)?;
        let mut next = if dens > 0.0 && dens.is_finite() {
            x - err / dens
        } else {
            f64::NAN
        };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x {
            return Ok(x);
        }
        x = next;
        err = cdf(x)? - p;
        if hi - lo <= 4.0 * f64::EPSILON * x.abs() {
            return Ok(x);
        }
    }
    if err.abs() <= QUANTILE_TOL {
        Ok(x)
    } else {
        Err(Error::NonConvergence {
            what,
            iterations,
            bound: err.abs(),
        })
    }
}

/// Student-t CDF.
pub fn t_cdf(t: f64, df: f64) -> Result<f64> {
    check_df("t_cdf", df)?;
    if t.is_nan() {
        return Err(Error::domain("t_cdf", "t is NaN"));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 1.0 } else { 0.0 });
    }
    let x = df / (df + t * t);
    let tail = 0.5 * reg_inc_beta(x, 0.5 * df, 0.5)?;
    Ok(if t > 0.0 { 1.0 - tail } else { tail })
}

fn t_pdf(t: f64, df: f64) -> f64 {
    let half = 0.5 * (df + 1.0);
    let ln_norm = ln_gamma_unchecked(half) - ln_gamma_unchecked(0.5 * df) - 0.5 * (df * PI).ln();
    (ln_norm - half * (t * t / df).ln_1p()).exp()
}

/// Degrees of freedom above which the Cornish-Fisher expansion replaces inversion.
const T_LARGE_DF: f64 = 1e5;

/// Student-t quantile.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    check_prob("t_quantile", p)?;
    check_df("t_quantile", df)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    if df >= T_LARGE_DF {
        let z = normal_quantile(p)?;
        let (z2, nu) = (z * z, df);
        let g1 = (z2 + 1.0) * z / 4.0;
        let g2 = ((5.0 * z2 + 16.0) * z2 + 3.0) * z / 96.0;
        let g3 = (((3.0 * z2 + 19.0) * z2 + 17.0) * z2 - 15.0) * z / 384.0;
        let g4 = ((((79.0 * z2 + 776.0) * z2 + 1482.0) * z2 - 1920.0) * z2 - 945.0) * z / 92160.0;
        return Ok(z + g1 / nu + g2 / (nu * nu) + g3 / nu.powi(3) + g4 / nu.powi(4));
    }
    // Solve on the upper half and reflect.
    let upper = p.max(1.0 - p);
    let cdf = |t: f64| t_cdf(t, df);
    let mut hi = 1.0;
    let mut guard = 0;
    while cdf(hi)? < upper {
        hi *= 2.0;
        guard += 1;
        if guard > 1100 {
            return Err(Error::NonConvergence {
                what: "t quantile bracket",
                iterations: guard,
                bound: hi,
            });
        }
    }
    let t = invert_monotone("t quantile", upper, 0.0, hi, &cdf, &|t| Ok(t_pdf(t, df)))?;
    Ok(if p < 0.5 { -t } else { t })
}

/// Mean of the non-central t distribution (df > 1).
pub fn noncentral_t_mean(df: f64, ncp: f64) -> Result<f64> {
    if !(df > 1.0) {
        return Err(Error::domain(
            "noncentral_t_mean",
            format!("df = {df} must exceed 1"),
        ));
    }
    // E[T] = ncp · sqrt(df/2) · Γ((df-1)/2) / Γ(df/2)
    let ln_ratio = ln_gamma_half_ratio(0.5 * df)?;
    Ok(ncp * (0.5 * df).sqrt() * (-ln_ratio).exp())
}

/// Variance of the non-central t distribution (df > 2).
pub fn noncentral_t_variance(df: f64, ncp: f64) -> Result<f64> {
    if !(df > 2.0) {
        return Err(Error::domain(
            "noncentral_t_variance",
            format!("df = {df} must exceed 2"),
        ));
    }
    let mean = noncentral_t_mean(df, ncp)?;
    Ok(df * (1.0 + ncp * ncp) / (df - 2.0) - mean * mean)
}
