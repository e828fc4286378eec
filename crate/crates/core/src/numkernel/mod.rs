//! Special functions, distribution primitives, quadratic-form CDFs and
//! reproducible random streams shared by the estimators and the simulator.

mod dist;
mod eigen;
mod mixture;
pub mod quad;
mod rng;
mod special;

pub use dist::{
    chisq_cdf, chisq_pdf, chisq_quantile, noncentral_t_mean, noncentral_t_variance, normal_cdf,
    normal_quantile, t_cdf, t_quantile,
};
pub use eigen::{symmetric_eigenvalues, SymMatrix};
pub use mixture::{mixture_cdf, ChiSqMixture};
pub use rng::{mix64, sample_noncentral_t, RandomStream, StreamRng};
pub use special::{gamma_p, gamma_q, ln_beta, ln_gamma, ln_gamma_half_ratio, reg_inc_beta};

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
