use thiserror::Error;

/// Errors produced by the crate.
#[derive(Debug, Error)]
pub enum GpError {
    /// Invalid caller-provided input (dimension mismatch, out-of-range
    /// values, malformed files, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The covariance matrix is not numerically positive definite.  This is
    /// a signal that the parameters violate the conditioning regime; no
    /// jitter or nugget fallback is attempted.
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    /// Symmetric eigendecomposition did not produce a usable factorization.
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),

    /// Data degenerate for the requested operation (e.g. all-zero
    /// observations where a profiling rule is undefined).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// All optimizer starts failed or no admissible model remains.
    #[error("selection failed: {0}")]
    SelectionFailure(String),
}
