use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("matrix is singular or rank deficient (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("series of length {len} too short, need more than {required} samples")]
    SeriesTooShort { len: usize, required: usize },

    #[error("holdout index {index} outside valid range {min}..={max}")]
    HoldoutOutOfRange { index: usize, min: usize, max: usize },

    #[error("model needs {expected} exogenous channel(s), series has {actual}")]
    MissingChannels { expected: usize, actual: usize },

    #[error("holdout set is empty")]
    EmptyHoldout,

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("non-numeric cell `{value}` at row {row}, column `{column}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("malformed record at row {row}: {message}")]
    MalformedRecord { row: usize, message: String },

    #[error("file contains no data rows")]
    EmptyFile,

    #[error("value {value} at index {index} is outside the transform domain (must exceed {bound})")]
    Domain { index: usize, value: f64, bound: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
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

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(index) => Err(Error::NonFinite { what, index }),
    }
}
