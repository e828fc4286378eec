//! Between-study variance: five point estimators and five interval estimators.

mod interval;
mod kdb;
mod point;

pub use interval::{ci_bj, ci_jackson, ci_kdb, ci_kdb_with, ci_pl, ci_qp, exact_q_cdf};
pub use kdb::{corrected_expected_q, expected_q_at, tau2_kdb, tau2_kdb_with, KdbMoments};
pub use point::{restricted_loglik, tau2_dl, tau2_jackson, tau2_mp, tau2_reml};

use crate::error::Result;
use crate::qstat::MetaInput;
use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Tau2Method {
    DL,
    REML,
    MP,
    J,
    KDB,
}

impl Tau2Method {
    pub const ALL: [Tau2Method; 5] = [Self::DL, Self::REML, Self::MP, Self::J, Self::KDB];

    pub fn name(&self) -> &'static str {
        match self {
            Self::DL => "DL",
            Self::REML => "REML",
            Self::MP => "MP",
            Self::J => "J",
            Self::KDB => "KDB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Tau2Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau2Status {
    Interior,
    TruncatedAtZero,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tau2Result {
    pub value: f64,
    pub method: Tau2Method,
    pub status: Tau2Status,
    pub iterations: usize,
}

impl Tau2Result {
    pub(crate) fn new(value: f64, method: Tau2Method, iterations: usize) -> Self {
        let value = value.max(0.0);
        let status = if value == 0.0 {
            Tau2Status::TruncatedAtZero
        } else {
            Tau2Status::Interior
        };
        Self {
            value,
            method,
            status,
            iterations,
        }
    }

    pub fn is_truncated(&self) -> bool {
        self.status == Tau2Status::TruncatedAtZero
    }
}

/// Point estimate by any of the five methods.
pub fn estimate(input: &MetaInput, method: Tau2Method) -> Result<Tau2Result> {
    match method {
        Tau2Method::DL => tau2_dl(input),
        Tau2Method::REML => tau2_reml(input),
        Tau2Method::MP => tau2_mp(input),
        Tau2Method::J => Ok(tau2_jackson(input)),
        Tau2Method::KDB => tau2_kdb(input),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Tau2CiMethod {
    QP,
    BJ,
    J,
    PL,
    KDB,
}

impl Tau2CiMethod {
    pub const ALL: [Tau2CiMethod; 5] = [Self::QP, Self::BJ, Self::J, Self::PL, Self::KDB];

    pub fn name(&self) -> &'static str {
        match self {
            Self::QP => "QP",
            Self::BJ => "BJ",
            Self::J => "J",
            Self::PL => "PL",
            Self::KDB => "KDB",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for Tau2CiMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Confidence interval for τ². `hi` is `f64::INFINITY` when the upper end lies
/// beyond the search cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tau2Interval {
    pub lo: f64,
    pub hi: f64,
    pub method: Tau2CiMethod,
    pub level: f64,
    pub lo_truncated: bool,
    pub hi_truncated: bool,
    /// Profile likelihood varied by less than 1e-12 over the search bracket.
    pub flat: bool,
}

impl Tau2Interval {
    pub fn contains(&self, tau2: f64) -> bool {
        self.lo <= tau2 && tau2 <= self.hi
    }

    pub fn hi_infinite(&self) -> bool {
        self.hi.is_infinite()
    }
}

/// Interval by any of the five methods.
pub fn interval(input: &MetaInput, method: Tau2CiMethod, level: f64) -> Result<Tau2Interval> {
    match method {
        Tau2CiMethod::QP => ci_qp(input, level),
        Tau2CiMethod::BJ => ci_bj(input, level),
        Tau2CiMethod::J => ci_jackson(input, level),
        Tau2CiMethod::PL => ci_pl(input, level),
        Tau2CiMethod::KDB => ci_kdb(input, level),
    }
}

pub(crate) fn check_level(func: &'static str, level: f64) -> Result<f64> {
    if level > 0.0 && level < 1.0 {
        Ok(1.0 - level)
    } else {
        Err(crate::error::Error::domain(
            func,
            format!("level {level} must lie in (0, 1)"),
        ))
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::qstat::MetaInput;
    use crate::smd::Study;

    pub fn meta(g: &[f64], v2: &[f64]) -> MetaInput {
        MetaInput::new(
            g.iter()
                .zip(v2)
                .map(|(&g, &v)| Study::new(10, 10, g, v).unwrap())
                .collect(),
        )
        .unwrap()
    }
}
