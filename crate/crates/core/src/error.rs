//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by the bound, certificate and search routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmespError {
    /// Input data violates a structural invariant (dimensions, symmetry, box bounds).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    /// Input could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),
    /// No feasible point exists for the requested problem.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A principal submatrix (or factor product) has fewer than `t` positive eigenvalues.
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    /// The Γ-function tail is identically zero.
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    /// A matrix that must be positive definite is (numerically) singular.
    #[error("near singular: {0}")]
    NearSingular(String),
    /// The eigen-solver did not converge.
    #[error("eigen-decomposition failed: {0}")]
    EigenFailure(String),
    /// An iterative solver hit its iteration cap.
    #[error("iteration limit reached: {0}")]
    MaxIterations(String),
    /// A dual point failed its feasibility checks.
    #[error("certificate failure: {0}")]
    CertificateFailure(String),
    /// Enumeration guard exceeded.
    #[error("instance too large: {0}")]
    TooLarge(String),
    /// Search budget exhausted before optimality was proven.
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),
    /// Unexpected internal state (e.g. an unbounded LP under box bounds).
    #[error("internal error: {0}")]
    Internal(String),
}

/// Convenience alias.
pub type Result<T> = std::result::Result<T, GmespError>;
