use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("audit error: {0}")]
    Audit(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (l_s={l_s}, l_u={l_u}, l_c={l_c})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        l_s: f64,
        l_u: f64,
        l_c: f64,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
