use thiserror::Error;

use crate::codes::CodeViolation;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid code: {}", join_violations(.0))]
    InvalidCode(Vec<CodeViolation>),
    #[error("code length {n} exceeds the exhaustive-enumeration limit {limit}")]
    CodeTooLong { n: usize, limit: usize },
    #[error("coordinate {index} out of range for a code of length {n}")]
    CoordinateOutOfRange { index: usize, n: usize },
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("no failing load found below the search cap {cap}")]
    NoFailingLoad { cap: f64 },
    #[error("density evolution does not converge even at load {load}; threshold is below the tolerance")]
    NoConvergingLoad { load: f64 },
    #[error("root bracketing failed after {iterations} iterations")]
    RootNotFound { iterations: usize },
    #[error("adaptive quadrature did not reach tolerance (error estimate {estimate:e})")]
    QuadratureFailed { estimate: f64 },
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoFailingLoad { .. }
                | Error::NoConvergingLoad { .. }
                | Error::RootNotFound { .. }
                | Error::QuadratureFailed { .. }
        )
    }
}

fn join_violations(v: &[CodeViolation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::Domain {
        name,
        value,
        reason,
    }
}
