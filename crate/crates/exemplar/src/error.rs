//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },

    #[error("{0}")]
    Validation(String),

    #[error("text is empty after normalization")]
    EmptyText,

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("degenerate mean embedding: {0}")]
    DegenerateMean(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("completion was empty after trimming")]
    EmptySkill,

    #[error("all candidate generations for {input_id:?} were empty")]
    CandidateSetEmpty { input_id: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("prompt budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("missing data for {id:?}: {message}")]
    MissingData { id: String, message: String },

    #[error("join failure: no record for {id:?} in {input}")]
    Join { id: String, input: String },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
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

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wrap an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
