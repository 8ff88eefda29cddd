//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by estimation and data-handling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("eigendecomposition failed to converge for a {dim}x{dim} matrix")]
    EigenFailure { dim: usize },

    #[error("rank deficiency detected at column {column}")]
    RankDeficient { column: usize },

    #[error("matrix is not positive semi-definite: {0}")]
    NotPsd(String),

    #[error("response must be binary 0/1, found {0}")]
    NonBinaryResponse(f64),

    #[error("response has a single class; cannot fit a classifier")]
    SingleClass,

    #[error("survival times must be positive, found {0}")]
    NonPositiveTime(f64),

    #[error("no events in the survival data")]
    NoEvents,

    #[error("all coefficients are zero at lambda={lambda}; decrease the penalty")]
    ZeroCoefficients { lambda: f64 },

    #[error("matrix is numerically zero; nothing to decompose")]
    ZeroMatrix,

    #[error("refit diverged (|eta| > 1e3), likely separation; try a smaller u")]
    Separation,

    #[error("iteration limit reached in {routine} after {iters} iterations")]
    NonConvergence { routine: &'static str, iters: usize },

    #[error("cross-validation failed: {0}")]
    CvFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
