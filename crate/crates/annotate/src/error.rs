use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("invalid annotation: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("unknown annotator {0}")]
    UnknownAnnotator(String),
    #[error("{message_id} is not assigned to {annotator_id}")]
    NotAssigned {
        message_id: String,
        annotator_id: String,
    },
    #[error("{annotator_id} already annotated {message_id}")]
    Duplicate {
        message_id: String,
        annotator_id: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("journal: {0}")]
    Journal(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AnnotateError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_owned(),
            source,
        }
    }
}

pub type Result<T, E = AnnotateError> = std::result::Result<T, E>;
