use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FcpeError>;

#[derive(Error, Debug)]
pub enum FcpeError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("frequency {f_hz} Hz outside the supported range [{min_hz:.3}, {max_hz:.3}] Hz")]
    Range { f_hz: f64, min_hz: f64, max_hz: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error in {chunk}: {message}")]
    Format { chunk: String, message: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("missing tensors: {}", .0.join(", "))]
    MissingTensors(Vec<String>),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Divergence { epoch: usize },
    #[error("{path}: {source_error}")]
    File {
        path: PathBuf,
        source_error: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FcpeError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FcpeError::File {
            path: path.into(),
            source_error: source,
        }
    }
}
