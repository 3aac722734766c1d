use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
#[error("unknown {kind} `{value}`")]
pub struct ParseEnumError {
    pub kind: &'static str,
    pub value: String,
}

impl ParseEnumError {
    pub fn new(kind: &'static str, value: &str) -> Self {
        Self {
            kind,
            value: value.to_owned(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("provider error: {0}")]
    Provider(String),

    #[error(
        "generation failed for conversation {conversation_id} after {attempts} attempts: {message}"
    )]
    Generation {
        conversation_id: String,
        attempts: usize,
        message: String,
        partial: Box<crate::dialogue_gen::Conversation>,
    },

    #[error("training data is missing classes: {0}")]
    MissingClasses(String),

    #[error("bundle error: {0}")]
    Bundle(String),

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Enum(#[from] ParseEnumError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
