use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes disagree.
    #[error("dimension mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Invalid model, training or run configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed delimited input. Rows are numbered from 1, header excluded.
    #[error("ingestion error at row {row}: {msg}")]
    Ingest { row: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    /// An instance does not conform to the schema it is used with.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// A metric is not defined for the given input (e.g. single-class AUC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("non-finite loss {loss} at batch {batch} (epoch {epoch})")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
