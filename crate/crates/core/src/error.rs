use thiserror::Error;

pub type Result<T> = std::result::Result<T, SmootherError>;

#[derive(Debug, Error)]
pub enum SmootherError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Cholesky of pivot block `block` failed.
    #[error("matrix is not positive definite (pivot block {block})")]
    NotPositiveDefinite { block: usize },

    #[error("state sequence is outside the objective domain (a factor diagonal entry is not positive)")]
    OutOfDomain,

    #[error("linearized factor diagonal is not strictly positive along the direction")]
    LinearizedDomainViolation,

    #[error("initial state sequence is not in the objective domain")]
    InfeasibleStart,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
