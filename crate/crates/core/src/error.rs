//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("image file not found: {0}")]
    MissingFile(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("image too small: {0}")]
    ImageTooSmall(String),

    #[error("incompatible descriptor/matcher combination: {0}")]
    Incompatible(String),

    #[error("model build failed for pipeline {pipeline}: {reason}")]
    ModelBuild { pipeline: String, reason: String },

    #[error("evaluation failed at fold {fold} under pipeline {pipeline}: {reason}")]
    EvalFold {
        pipeline: String,
        fold: usize,
        reason: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("model container error: {0}")]
    Container(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
