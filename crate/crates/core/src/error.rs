use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text line or binary record could not be parsed. `line` is 1-based
    /// for text input and the record index for binary input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("store checksum mismatch: table was built for {expected}, store is {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("remote error {code}: {msg}")]
    Remote { code: u16, msg: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Domain(_)
            | Error::Config(_)
            | Error::ChecksumMismatch { .. } => 2,
            Error::Io(_) | Error::Transport(_) | Error::Remote { .. } => 3,
            Error::Parse { .. }
            | Error::Structural(_)
            | Error::Validation(_)
            | Error::Format(_)
            | Error::Protocol(_)
            | Error::Json(_) => 4,
        }
    }
}
