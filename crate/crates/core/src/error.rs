use std::io;

use thiserror::Error;

/// Errors produced by sampling, forest construction, statistics and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// A caller passed an index or argument that does not fit the data it refers to.
    #[error("usage error: {0}")]
    Usage(String),
    /// An operation's precondition on its inputs does not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
