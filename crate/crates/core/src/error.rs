use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("value {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("zero-norm feature vector at patch {patch}")]
    ZeroNormFeature { patch: usize },

    #[error("eigen-solver did not converge (residual norm {residual:e})")]
    EigenNoConvergence { residual: f64 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("ground truth {path} is {gt_w}x{gt_h} but image is {img_w}x{img_h}")]
    GtSizeMismatch {
        path: PathBuf,
        gt_w: u32,
        gt_h: u32,
        img_w: u32,
        img_h: u32,
    },

    #[error("source {name} has {available} records, {requested} requested")]
    InsufficientSource {
        name: String,
        available: usize,
        requested: usize,
    },

    #[error("weights do not match architecture: {0}")]
    WeightMismatch(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("manifest parse error at line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("missing predictions for: {0}")]
    MissingPredictions(String),

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
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

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for errors caused by bad user input rather than internal faults.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. } | Error::EigenNoConvergence { .. })
    }
}
