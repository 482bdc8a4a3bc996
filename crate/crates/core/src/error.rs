use thiserror::Error;

/// Errors raised by the estimation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected p = {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("replicate measurements are required; supply the error variance explicitly (covariance-aware mode)")]
    MissingReplicates,

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("estimator variant {variant} requires `{field}`")]
    MissingPrerequisite {
        variant: &'static str,
        field: &'static str,
    },

    #[error("degenerate identification: |J0| = {j_hat:e} is below 1e-10")]
    DegenerateIdentification { j_hat: f64 },

    #[error("eigendecomposition failed to converge")]
    EigenFailure,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidArgument {
        name,
        reason: reason.into(),
    }
}
