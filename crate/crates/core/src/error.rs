//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A lattice, emitter or experiment description violates its invariants.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// A dense solve or evolution was requested beyond the configured guard.
    #[error("resource guard: {what} has dimension {dim}, guard is {guard} (use the iterative/force path)")]
    ResourceGuard {
        what: &'static str,
        dim: usize,
        guard: usize,
    },

    /// Numerical failure (LAPACK error, non-convergence, tolerance miss).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The Diophantine gap labeling is ambiguous (|t| = q/2 at even q).
    #[error("ambiguous Diophantine solution at gap {gap}: |t| = q/2 = {half_q} for q even; edge count undefined")]
    AmbiguousChern { gap: usize, half_q: u32 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Numeric(format!("linalg: {e}"))
    }
}
