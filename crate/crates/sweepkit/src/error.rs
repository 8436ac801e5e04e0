//! Crate-wide error type and result alias.

use thiserror::Error;

/// Errors produced by any sweepkit operation.
///
/// The CLI maps these onto exit codes: [`Error::InvalidArgument`] and
/// [`Error::Config`] exit with 1, [`Error::Format`] and [`Error::Io`]
/// exit with 2.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A policy, registry or run configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A file's bytes do not match the expected layout.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => 1,
            Error::Format(_) | Error::Io(_) => 2,
        }
    }
}
