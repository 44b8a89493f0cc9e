use thiserror::Error;

/// Errors raised across the mapping toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented constraint.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data is malformed or inconsistent with the model.
    #[error("invalid input: {0}")]
    Input(String),

    /// A text file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Gradient-based training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    /// A linear-algebra step failed (e.g. Cholesky on a non-PD matrix).
    #[error("numerical failure at iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },

    /// A metric is undefined for the supplied data.
    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
