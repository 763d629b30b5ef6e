use thiserror::Error;

/// Errors produced across the pipeline.
#[derive(Debug, Error)]
pub enum LspsError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("effect is not identifiable: {0}")]
    NonIdentifiable(String),
}

pub type Result<T> = std::result::Result<T, LspsError>;

impl LspsError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        LspsError::Io {
            path: path.into(),
            source,
        }
    }
}
