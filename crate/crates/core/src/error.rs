use std::fmt;

use thiserror::Error;

/// Structural assumptions the design relies on. Each variant names the
/// condition in words so error messages are self-explanatory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// `lambda * I - P` must stay positive definite.
    PenaltyDominance,
    /// `Phi = B R^-1 B^T - I / lambda` must be positive semidefinite.
    PhiPositiveSemidefinite,
    /// `(A, Phi^1/2)` stabilizable and `(A, Q^1/2)` observable.
    ControlStabilizability,
    /// `(A, C)` detectable and `(A, Sigma*^1/2)` stabilizable.
    FilterDetectability,
    /// The resolvent `I - A^T (I + P Phi)^-1` must be invertible.
    ResolventInvertible,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::PenaltyDominance => {
                "penalty dominance (lambda*I - P must be positive definite)"
            }
            Assumption::PhiPositiveSemidefinite => {
                "control authority (Phi = B R^-1 B^T - I/lambda must be positive semidefinite)"
            }
            Assumption::ControlStabilizability => {
                "control stabilizability ((A, Phi^1/2) stabilizable and (A, Q^1/2) observable)"
            }
            Assumption::FilterDetectability => {
                "filter detectability ((A, C) detectable and (A, Sigma*^1/2) stabilizable)"
            }
            Assumption::ResolventInvertible => {
                "stable resolvent (I - A^T (I + P Phi)^-1 must be invertible)"
            }
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum WdrcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("assumption violated: {assumption}: {detail}")]
    AssumptionViolated {
        assumption: Assumption,
        detail: String,
    },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no admissible lambda on the grid ({tried} points tried)")]
    NoAdmissibleLambda { tried: usize },

    #[error("singular matrix: {0}")]
    Singular(String),
}

impl WdrcError {
    pub(crate) fn violated(assumption: Assumption, detail: impl Into<String>) -> Self {
        WdrcError::AssumptionViolated {
            assumption,
            detail: detail.into(),
        }
    }

    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            WdrcError::AssumptionViolated { .. } | WdrcError::NoAdmissibleLambda { .. }
        )
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self, WdrcError::NoConvergence { .. })
    }
}

pub type Result<T> = std::result::Result<T, WdrcError>;
