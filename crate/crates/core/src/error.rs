use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the denoising pipeline.
#[derive(Debug, Error)]
pub enum NlsamError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed NIfTI header: {0}")]
    MalformedHeader(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated data section: expected {expected} bytes, found {found}")]
    TruncatedData { expected: usize, found: usize },
    #[error("gradient table error: {0}")]
    Gradients(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no background voxels identified")]
    NoBackground,
    #[error("not enough candidate directions: need {needed}, have {available}")]
    NotEnoughNeighbors { needed: usize, available: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("zero dynamic range in reference")]
    ZeroDynamicRange,
}

impl NlsamError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NlsamError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, NlsamError>;
