use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An aggregate-state operation was called out of order
    /// (e.g. self-initializing a component twice).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("unsupported structure: {0}")]
    UnsupportedStructure(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("iterate diverged at iteration {iteration} (|theta| = {norm:e})")]
    Divergence { iteration: usize, norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
