use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse instruction {text:?}: unexpected token {token:?}")]
    Parse { text: String, token: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("step called on a finished episode")]
    EpisodeDone,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty text cannot be encoded")]
    EmptyText,

    #[error("{path}:{line}: {msg}")]
    Import { path: PathBuf, line: usize, msg: String },

    #[error("no embedding for instruction {0:?}")]
    MissingEmbedding(String),

    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },

    #[error("base task {task:?} did not converge within {episodes} episodes")]
    BaseNotConverged { task: String, episodes: usize },

    #[error("alignment training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
