use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("missing column {column:?}")]
    MissingColumn { column: String },

    #[error("row {row}, column {column:?}: value {value:?} outside declared range [{lo}, {hi}]")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("row {row}, column {column:?}: unknown level {value:?}")]
    UnknownLevel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column {column:?}: malformed number {value:?}")]
    MalformedNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: label {value:?} is not 0 or 1")]
    BadLabel { row: usize, value: String },

    #[error("feature {0:?} cannot be discretized: fewer than 2 distinct values")]
    SingleBucket(String),

    #[error("invalid bucket edges for {feature:?}: {reason}")]
    BadEdges { feature: String, reason: String },

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("feature {feature:?}: level {level} out of range (has {levels} levels)")]
    LevelOutOfRange {
        feature: String,
        level: usize,
        levels: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("temperature must be positive, got {0}")]
    Temperature(f64),

    #[error("{0}")]
    Invalid(String),

    #[error("checkpoint schema hash {found} does not match schema hash {expected}")]
    SchemaHash { expected: String, found: String },

    #[error("no quasi-identifiers declared in schema")]
    NoQuasiIdentifiers,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
