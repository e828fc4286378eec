//! Random-effects meta-analysis of the standardized mean difference.
//!
//! The crate covers study-level Hedges's g quantities ([`smd`]), the
//! generalized Q statistic ([`qstat`]), point and interval estimators of the
//! between-study variance ([`tau2`]) and of the overall effect ([`effect`]),
//! and a deterministic Monte-Carlo laboratory ([`simlab`]) for bias, coverage
//! and MSE studies. [`cli`] holds the command-line front end.
// NaN-rejecting guards are written as negated comparisons on purpose, and
// series coefficients keep their published digits.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod analysis;
pub mod cli;
pub mod effect;
pub mod error;
pub mod numkernel;
pub mod qstat;
pub mod simlab;
pub mod smd;
pub mod tau2;

pub use error::{Error, Result};
