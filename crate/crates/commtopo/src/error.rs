//! Crate-wide error type.
//!
//! Contract violations that indicate a programming error (shape mismatches
//! inside the numerics, invalid execution orders) panic via assertions;
//! everything a caller can plausibly recover from or report goes through
//! [`Error`].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration file, key, or value.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed task suite, metrics file, or other data input.
    #[error("data error: {0}")]
    Data(String),

    /// Checkpoint could not be written or refused on load.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// An exhaustive enumeration was requested beyond its size bound.
    #[error("enumeration refused: {0}")]
    Enumeration(String),

    /// Non-finite loss or gradient during training.
    #[error("training fault: {0}")]
    Train(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
