use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("spec error: {0}")]
    Spec(String),

    #[error("{diverged} of {total} runs diverged in {cell}, above the allowed fraction {allowed}")]
    Divergence {
        cell: String,
        diverged: usize,
        total: usize,
        allowed: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] fmgd::Error),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 spec error, 3 divergence threshold exceeded,
    /// 4 I/O failure, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Spec(_) => 2,
            LabError::Divergence { .. } => 3,
            LabError::Io { .. } => 4,
            LabError::Core(e) => match e {
                fmgd::Error::Io(_)
                | fmgd::Error::Csv { .. }
                | fmgd::Error::Checksum(_)
                | fmgd::Error::StaleIndex(_)
                | fmgd::Error::Manifest(_) => 4,
                fmgd::Error::InvalidArgument(_) => 2,
                _ => 1,
            },
        }
    }
}
