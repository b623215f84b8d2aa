use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("empty data: {0}")]
    EmptyData(&'static str),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("class {class}: requested {requested} rows but only {available} available")]
    InsufficientClassRows {
        class: usize,
        requested: usize,
        available: usize,
    },

    #[error("batch size {batch_size} exceeds train split size {train_size}")]
    BatchTooLarge { batch_size: usize, train_size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("idx {path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    IdxBadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("idx {path}: truncated file (needed {needed} bytes, found {found})")]
    IdxTruncated {
        path: PathBuf,
        needed: usize,
        found: usize,
    },

    #[error("idx: count mismatch ({images} images vs {labels} labels)")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("config: `{key}` {message}")]
    Config { key: String, message: String },

    #[error("config parse error in {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("suite: {0}")]
    Suite(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("worker pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
