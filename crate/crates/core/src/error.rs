use thiserror::Error;

/// Errors raised by the estimation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error(
        "{what} did not converge after {iterations} iterations (achieved error bound {bound:.3e})"
    )]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        bound: f64,
    },

    #[error("root bracket for {what} exceeded the cap tau2 = {cap:e}")]
    BracketExceeded { what: &'static str, cap: f64 },

    #[error("{what} is not monotone in tau2 near {at:e}")]
    NonMonotone { what: &'static str, at: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            func,
            detail: detail.into(),
        }
    }

    /// True for failures of an iterative numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::BracketExceeded { .. }
                | Error::NonMonotone { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
