use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input in instance `{id}`: non-finite value at channel {channel}, timestamp {timestamp}")]
    NonFinite {
        id: String,
        channel: usize,
        timestamp: usize,
    },

    #[error("instance `{id}` cannot be imputed: {reason}")]
    Unimputable { id: String, reason: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("shape mismatch for `{id}`: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        id: String,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("series too short: length {len}, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("channel {channel}: {source}")]
    Channel {
        channel: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("numeric failure at epoch {epoch}, batch {batch}: {message}")]
    Numeric {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("training diverged at epoch {epoch}: {message}")]
    TrainingFailure { epoch: usize, message: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Numeric { .. } | Error::TrainingFailure { .. } => ErrorKind::Numeric,
            Error::Channel { source, .. } | Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
