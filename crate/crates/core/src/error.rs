use thiserror::Error;

/// Errors produced while loading problems or running informativity analyses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry in {what} at ({row}, {col})")]
    NonFinite {
        what: String,
        row: usize,
        col: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid problem file: {0}")]
    Schema(String),

    #[error("invalid tolerances: {0}")]
    Tolerance(String),

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("numerical instability: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
