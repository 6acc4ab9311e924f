use thiserror::Error;

use crate::persistence::ArchiveError;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver error at step {step}: {msg}")]
    Solver { step: usize, msg: String },
    #[error("model error: {0}")]
    Model(String),
    #[error("eigensolver error: {0}")]
    Eigen(String),
    #[error("linear program error: {0}")]
    Lp(String),
    #[error("estimator error: {0}")]
    Estimator(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("parameter out of range: {0}")]
    Domain(String),
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
