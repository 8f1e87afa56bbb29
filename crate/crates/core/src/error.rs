//! Error type shared by all evaluation modules.
//!
//! Variants are grouped by how a caller should react rather than by module:
//! `InvalidArgument` means the request itself is malformed, `Validation` means
//! the data on disk (or in memory) does not satisfy a documented contract, and
//! `Degenerate` means the inputs are formally valid but numerically unusable
//! (zero-norm columns, collapsed eigenvalue gaps, unidentifiable parameters).
//! The CLI maps these onto distinct process exit codes.

use thiserror::Error;

/// Unified error type for the evaluation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain (bad bounds, counts, sizes).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data violates a format or consistency contract.
    #[error("validation failed: {0}")]
    Validation(String),

    /// The computation is numerically degenerate for these inputs.
    #[error("numeric degeneracy: {0}")]
    Degenerate(String),

    /// Underlying file-system failure while reading or writing artifacts.
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),

    /// A JSON manifest could not be parsed or serialized.
    #[error("json failure: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand for an [`Error::InvalidArgument`] with a formatted message.
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Shorthand for an [`Error::Validation`] with a formatted message.
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Shorthand for an [`Error::Degenerate`] with a formatted message.
    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }
}
