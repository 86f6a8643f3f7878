use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular matrix (smallest pivot magnitude {pivot:e})")]
    SingularMatrix { pivot: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (cholesky failed at column {column})")]
    NotPositiveDefinite { column: usize },

    #[error("iteration did not converge (last two estimates {previous} and {last})")]
    NoConvergence { previous: f64, last: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("empty index set")]
    EmptyBatch,

    #[error("fixed-point residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },

    #[error("malformed csv {path}:{line}: {message}")]
    Csv {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("row index for {0} is stale (file changed since it was built)")]
    StaleIndex(PathBuf),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
