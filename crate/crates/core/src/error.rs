use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("feature {0} has zero standard deviation")]
    DegenerateFeature(usize),

    #[error("linear system is singular or rank deficient")]
    SingularSystem,

    #[error("invalid split plan: {0}")]
    InvalidPlan(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("target has zero total sum of squares")]
    DegenerateTarget,

    #[error("labels contain a single class")]
    DegenerateLabels,

    #[error("expert {index} failed: {message}")]
    ExpertError { index: usize, message: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::invalid(format!(
            "{what}: length {got} does not match expected {expected}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what}: non-finite value at index {i}")));
    }
    Ok(())
}
