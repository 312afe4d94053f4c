use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the command-line harness to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("reference signal is silent: {0}")]
    SilentReference(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("tape: {0}")]
    Tape(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed wav {}: {reason}", path.display())]
    MalformedWav { path: PathBuf, reason: String },

    #[error("unsupported encoding in {}: {reason}", path.display())]
    UnsupportedEncoding { path: PathBuf, reason: String },

    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("utterance {id}: {source}")]
    Utterance {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach an utterance id to an error raised while processing that utterance.
    pub fn for_utterance(self, id: impl Into<String>) -> Self {
        Error::Utterance {
            id: id.into(),
            source: Box::new(self),
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorCategory::Usage,
            Error::Numeric(_) | Error::Tape(_) => ErrorCategory::Numeric,
            Error::Utterance { source, .. } => source.category(),
            Error::Shape(_)
            | Error::TooShort(_)
            | Error::SilentReference(_)
            | Error::Io { .. }
            | Error::MalformedWav { .. }
            | Error::UnsupportedEncoding { .. }
            | Error::SampleRateMismatch { .. }
            | Error::Manifest(_)
            | Error::Checkpoint(_) => ErrorCategory::Data,
        }
    }
}
