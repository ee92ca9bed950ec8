use std::path::PathBuf;

use thiserror::Error;

use crate::signal::Intent;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed recording: {0}")]
    MalformedRecording(String),

    #[error("insufficient support: no {intent} segment of at least {needed} frames")]
    InsufficientSupport { intent: Intent, needed: usize },

    #[error("context overflow: {len} rows exceeds context length {max}")]
    ContextOverflow { len: usize, max: usize },

    #[error("training diverged at step {step}: non-finite loss")]
    TrainingDiverged { step: usize },

    #[error("invalid corpus: no data for intent {intent} (available: {available})")]
    InvalidCorpus { intent: Intent, available: String },

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("leakage: inferral recording {0} is part of the generative training set")]
    Leakage(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported container: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
