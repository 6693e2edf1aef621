use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("i/o error: {0}")]
    Stream(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid input schema: {0}")]
    Schema(String),

    #[error("malformed geometry in feature {feature}: {reason}")]
    Geometry { feature: usize, reason: String },

    #[error("road network is empty")]
    EmptyNetwork,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),

    #[error("class {0} has no training rows after stratified split")]
    ClassMissingFromTrain(usize),

    #[error("row width {found} does not match model width {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("operation requires a tree model, got {0}")]
    NotATreeModel(&'static str),

    #[error("non-finite value in row {0}")]
    NonFinite(usize),

    #[error("unknown segment {0}")]
    UnknownSegment(String),

    #[error("unsupported model format version {0}")]
    ModelVersion(u32),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {cause}")]
    Stage { stage: String, cause: Box<Error> },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
