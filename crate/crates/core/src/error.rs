use std::io;

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped so that a front end can map them onto exit codes:
/// configuration problems, bad or mismatched data, I/O, and internal failures.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Shapes or dimensions of otherwise valid objects do not fit together.
    #[error("structural error: {0}")]
    Structural(String),

    /// An operation was called in the wrong state (e.g. backward without a training pass).
    #[error("state error: {0}")]
    State(String),

    /// A query fell outside the range covered by the data.
    #[error("range error: {0}")]
    Range(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// A file did not start with the expected magic bytes or its header could not be decoded.
    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    /// File header and payload disagree on dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The payload ended before all declared records were read.
    #[error("truncated payload: {0}")]
    Truncated(String),

    /// Training produced a non-finite loss.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}
