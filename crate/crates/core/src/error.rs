use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("validation failed with {} violation(s): {}", .0.len(), join_violations(.0))]
    Validation(Vec<Violation>),

    /// No coupling exists on the requested support.
    #[error("infeasible support: {marginal} marginal at state {index} cannot be covered (deficit {deficit:.3e})")]
    Infeasible {
        marginal: &'static str,
        index: usize,
        deficit: f64,
    },

    #[error("iterative proportional fitting stalled after {iterations} iterations: {marginal} marginal at state {index} has residual {residual:.3e}")]
    NoConvergence {
        iterations: usize,
        marginal: &'static str,
        index: usize,
        residual: f64,
    },

    #[error("inadmissible transition: {0}")]
    Inadmissible(String),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl Error {
    /// True for failures caused by bad inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::DimensionMismatch(_)
                | Error::Validation(_)
                | Error::Inadmissible(_)
                | Error::Infeasible { .. }
                | Error::Unsupported(_)
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
