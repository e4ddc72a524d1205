use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed npy file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dtype mismatch in {path}: expected {expected}, found {found}")]
    Dtype {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("zero-norm row {row} (norm {norm:e} <= 1e-12)")]
    ZeroNormRow { row: usize, norm: f64 },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("label out of range at row {row}: {label} not in [0, {num_classes})")]
    LabelOutOfRange {
        row: usize,
        label: i64,
        num_classes: usize,
    },

    #[error("invalid bundle:\n  - {}", .0.join("\n  - "))]
    Bundle(Vec<String>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("class {class} has {available} samples, fewer than the {requested} requested shots")]
    TooFewSamples {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("missing score vector: {0}")]
    MissingScores(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("manifest error in {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
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

    /// Wraps the error with a location such as a row index or grid cell.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
