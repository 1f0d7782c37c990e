use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("index {index} out of range for {what} (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("uplink channel matrix is rank deficient (Gram condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("no feasible layout found after {iterations} iterations")]
    NoFeasibleLayout { iterations: usize },

    #[error("CSV schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
