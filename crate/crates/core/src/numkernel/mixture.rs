use super::dist::chisq_cdf;
use super::quad::{integrate, kronrod15};
use crate::error::{Error, Result};
use std::collections::VecDeque;
use std::f64::consts::PI;

/// Positive linear combination Σ λ_i χ²_1 of independent one-df chi-squares.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSqMixture {
    coefficients: Vec<f64>,
}

impl ChiSqMixture {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::domain(
                "ChiSqMixture::new",
                "coefficients must be finite and nonnegative",
            ));
        }
        if !coefficients.iter().any(|c| *c > 0.0) {
            return Err(Error::domain(
                "ChiSqMixture::new",
                "at least one coefficient must be positive",
            ));
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Coefficients that contribute, i.e. above 1e-12 of the largest.
    fn effective(&self) -> Vec<f64> {
        let max = self.coefficients.iter().fold(0.0f64, |m, c| m.max(*c));
        self.coefficients
            .iter()
            .copied()
            .filter(|c| *c > 1e-12 * max)
            .collect()
    }
}

/// Target absolute error of the returned probability.
const CDF_TOL: f64 = 1e-8;
const MAX_TAIL_INTERVALS: usize = 500_000;

/// P(Σ λ_i χ²_1 ≤ x) by Imhof's inversion of the characteristic function.
///
/// The integrand `sin θ(u) / (u ρ(u))` is integrated adaptively up to the
/// first zero of `sin θ` past the maximum of the concave phase θ; beyond it
/// the integral is a sum of half-wave contributions with alternating signs and
/// strictly shrinking magnitude. The sum stops when half the last term is
/// below tolerance or when Euler averaging of recent partial sums settles.
pub fn mixture_cdf(x: f64, mix: &ChiSqMixture) -> Result<f64> {
    if x.is_nan() {
        return Err(Error::domain("mixture_cdf", "x is NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let lam = mix.effective();
    let first = lam[0];
    if lam.iter().all(|l| (l - first).abs() <= 1e-12 * first) {
        return chisq_cdf(x / first, lam.len() as f64);
    }
    let integral = imhof_integral(x, &lam)?;
    Ok((0.5 - integral / PI).clamp(0.0, 1.0))
}

struct Phase<'a> {
    lam: &'a [f64],
    x: f64,
}

impl Phase<'_> {
    fn theta(&self, u: f64) -> f64 {
        0.5 * self.lam.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * self.x * u
    }

    fn dtheta(&self, u: f64) -> f64 {
        0.5 * self
            .lam
            .iter()
            .map(|l| l / (1.0 + l * l * u * u))
            .sum::<f64>()
            - 0.5 * self.x
    }

    fn integrand(&self, u: f64) -> f64 {
        if u == 0.0 {
            return self.dtheta(0.0);
        }
        let ln_rho = 0.25
            * self
                .lam
                .iter()
                .map(|l| (l * l * u * u).ln_1p())
                .sum::<f64>();
        self.theta(u).sin() / (u * ln_rho.exp())
    }

    /// Maximiser of θ on [0, ∞); θ is concave.
    fn peak(&self) -> f64 {
        if self.dtheta(0.0) <= 0.0 {
            return 0.0;
        }
        let lmax = self.lam.iter().fold(0.0f64, |m, l| m.max(*l));
        let mut hi = 1.0 / lmax;
        while self.dtheta(hi) > 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.dtheta(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// u > start with θ(u) = level, where θ is decreasing on [start, ∞).
    fn solve_level(&self, start: f64, level: f64) -> f64 {
        let mut lo = start;
        let mut step = (2.0 * PI / self.x).max(start * 0.5).max(f64::MIN_POSITIVE);
        let mut hi = start + step;
        while self.theta(hi) > level {
            lo = hi;
            step *= 2.0;
            hi = start + step;
        }
        // safeguarded Newton inside [lo, hi]
        let mut u = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.theta(u) - level;
            if f > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
            let d = self.dtheta(u);
            let mut next = u - f / d;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            u = next;
        }
        u
    }
}

fn imhof_integral(x: f64, lam: &[f64]) -> Result<f64> {
    let phase = Phase { lam, x };
    let tol = CDF_TOL * PI;
    let peak = phase.peak();
    let theta_max = phase.theta(peak);
    let mut j = (theta_max / PI).floor();
    let first_zero = if peak == 0.0 {
        0.0
    } else if j * PI == theta_max {
        peak
    } else {
        phase.solve_level(peak, j * PI)
    };
    let head = if first_zero > 0.0 {
        integrate(|u| phase.integrand(u), 0.0, first_zero, 0.25 * tol)?
    } else {
        0.0
    };

    // Half-wave terms alternate in sign with shrinking size. Stop on the
    // certified midpoint bound, or once repeated averaging of the last
    // EULER_DEPTH + 1 partial sums has settled.
    let mut sum = head;
    let mut left = first_zero;
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(EULER_DEPTH + 1);
    let mut previous: Option<f64> = None;
    let mut settled = 0;
    for n in 0..MAX_TAIL_INTERVALS {
        j -= 1.0;
        let right = phase.solve_level(left, j * PI);
        let mut f = |u: f64| phase.integrand(u);
        let (mut term, err) = kronrod15(&mut f, left, right);
        if err > 1e-3 * tol {
            term = integrate(&mut f, left, right, 1e-3 * tol)?;
        }
        sum += term;
        left = right;
        if 0.5 * term.abs() <= 0.5 * tol && n > 0 {
            return Ok(sum - 0.5 * term);
        }
        if recent.len() == EULER_DEPTH + 1 {
            recent.pop_front();
        }
        recent.push_back(sum);
        if recent.len() == EULER_DEPTH + 1 {
            let estimate = euler_average(&recent);
            if let Some(prev) = previous {
                if (estimate - prev).abs() <= 0.1 * tol {
                    settled += 1;
                    if settled >= 2 {
                        return Ok(estimate);
                    }
                } else {
                    settled = 0;
                }
            }
            previous = Some(estimate);
        }
    }
    Err(Error::NonConvergence {
        what: "Imhof tail summation",
        iterations: MAX_TAIL_INTERVALS,
        bound: f64::NAN,
    })
}

const EULER_DEPTH: usize = 10;

/// Binomially weighted mean of consecutive partial sums.
fn euler_average(sums: &VecDeque<f64>) -> f64 {
    let mut row: Vec<f64> = sums.iter().copied().collect();
    while row.len() > 1 {
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    row[0]
}
