use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header in {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    #[error("duplicate id(s): {0:?}")]
    DuplicateIds(Vec<String>),

    #[error("unparseable cell at row {row}, column '{column}': {value:?}")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("test undefined: {0}")]
    Undefined(String),

    #[error("extractor lacks capability: {0}")]
    Capability(String),

    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("missing upstream artifact {artifact}; run stage '{stage}' first")]
    MissingArtifact { artifact: String, stage: String },

    #[error("stale artifact: {0}")]
    Stale(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Process exit code: 2 for precondition failures, 3 for data errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Precondition(_)
            | Error::MissingArtifact { .. }
            | Error::Stale(_)
            | Error::Capability(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
