//! Crate-wide error type.

/// Errors produced by quantization, linear algebra, estimation and the
/// experiment harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite sample")]
    NonFiniteSample,
    #[error("quantization level must be finite and nonnegative, got {0}")]
    InvalidQuantLevel(f64),
    #[error("empty record")]
    EmptyRecord,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("svd did not converge for a {rows}x{cols} matrix within {max_sweeps} sweeps")]
    SvdNoConvergence {
        rows: usize,
        cols: usize,
        max_sweeps: usize,
    },
    #[error("OLS requires nonsingular surrogate covariance (min eigenvalue {min_eig:.3e})")]
    SingularCovariance { min_eig: f64 },
    #[error("response matrix has zero Frobenius norm")]
    ZeroResponseNorm,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate random draw: {0}")]
    DegenerateDraw(&'static str),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
