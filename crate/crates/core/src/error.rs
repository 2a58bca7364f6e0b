use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("invalid value `{value}` for key `{key}`")]
    InvalidValue { key: String, value: String },

    #[error("degenerate covariance: points {i} and {j} ({detail})")]
    DegenerateCovariance { i: usize, j: usize, detail: String },

    #[error("point {point:?} lies outside the covered domain [{lo:?}, {hi:?}]")]
    Domain { point: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("target set is empty")]
    EmptyTargets,

    #[error("batch is empty")]
    EmptyBatch,

    #[error("non-finite loss in task {task_index}")]
    NonFiniteLoss { task_index: usize },

    #[error("non-finite gradient for parameter index {index}")]
    NonFiniteGradient { index: usize },

    #[error("training diverged at epoch {epoch}: validation NLL {val_nll}")]
    Diverged { epoch: usize, val_nll: f64 },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
