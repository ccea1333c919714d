use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the toolkit.
///
/// The variants are grouped so that front-ends (CLI exit codes, FFI status
/// codes) can classify failures with [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("placement error: {0}")]
    Placement(String),

    #[error("no valid pixels")]
    NoValidPixels,

    #[error("environment error: {message} (command: {command})")]
    Environment { message: String, command: String },

    #[error("external codec failed with status {status}: {stderr} (command: {command})")]
    External {
        status: i32,
        stderr: String,
        command: String,
    },

    #[error("partial frame: received {received} of {expected} bytes")]
    PartialFrame { expected: usize, received: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse failure class used for exit codes and FFI status values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input data or files.
    Data,
    /// Bad arguments supplied by the caller.
    Usage,
    /// Missing external tooling or failing subprocess.
    Environment,
    /// I/O and transport failures.
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Format(_)
            | Error::Length { .. }
            | Error::Validation(_)
            | Error::Decode(_)
            | Error::Contract(_)
            | Error::Placement(_)
            | Error::NoValidPixels
            | Error::Json(_) => ErrorKind::Data,
            Error::Index { .. } | Error::Argument(_) => ErrorKind::Usage,
            Error::Environment { .. } | Error::External { .. } => ErrorKind::Environment,
            Error::Io { .. } | Error::Stream(_) | Error::PartialFrame { .. } => ErrorKind::Io,
        }
    }
}
