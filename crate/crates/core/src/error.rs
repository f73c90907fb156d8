use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid hyper-parameters or option values.
    #[error("configuration error: {0}")]
    Config(String),

    /// Operand shapes are incompatible.
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Malformed or non-finite input data.
    #[error("data error: {0}")]
    Data(String),

    /// A caller violated an API precondition (e.g. backward from a non-scalar).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("no match: {0}")]
    NoMatch(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
