use thiserror::Error;

/// Errors raised by model construction and the numerical routines.
///
/// Infeasibility of an optimization is never an error; it is reported as a
/// value by the solvers that can encounter it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid value in {context}: {reason}")]
    Value {
        context: &'static str,
        reason: String,
    },
    #[error("riccati iteration did not converge after {iterations} iterations (residual {residual:e}); pair may not be stabilizable")]
    NotStabilizable { iterations: usize, residual: f64 },
    #[error("closed-loop matrix is not strictly stable (spectral radius {0})")]
    UnstableClosedLoop(f64),
    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("constraint set does not contain the origin strictly")]
    OriginNotInterior,
    #[error("invariant set iteration exceeded the determinedness bound of {0} steps")]
    DeterminednessIndexExceeded(usize),
    #[error("horizon {0} is not in the configured horizon set")]
    UnknownHorizon(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}

pub(crate) fn value_err(context: &'static str, reason: impl Into<String>) -> Error {
    Error::Value {
        context,
        reason: reason.into(),
    }
}
