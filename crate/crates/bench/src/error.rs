use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, BenchError>;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        source: ciag_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("reference solve stopped at gradient norm {grad_norm:.3e} (tolerance {tol:.3e})")]
    ReferenceFailure { grad_norm: f64, tol: f64 },

    #[error(transparent)]
    Core(#[from] ciag_core::Error),

    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl BenchError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        BenchError::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io { path: path.into(), source }
    }

    /// 1 for configuration mistakes, 2 for everything that failed at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_)
            | BenchError::Core(ciag_core::Error::Config(_) | ciag_core::Error::InvalidInput(_)) => 1,
            _ => 2,
        }
    }
}
