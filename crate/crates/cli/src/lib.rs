//! Reproducible train / eval / map / bench runs driven by one JSON config.

use std::fmt;

pub mod commands;
pub mod config;
pub mod data;

pub use commands::{cmd_bench, cmd_eval, cmd_map, cmd_train, model_path};
pub use config::RunConfig;

/// Process exit status of a command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Config = 2,
    Data = 3,
    Numeric = 4,
    Metric = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn new(code: ExitCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<contramap::Error> for CliError {
    fn from(e: contramap::Error) -> Self {
        use contramap::Error as E;
        let code = match &e {
            E::Parameter(_) => ExitCode::Config,
            E::Input(_) | E::Parse { .. } | E::Io(_) | E::Json(_) => ExitCode::Data,
            E::Diverged { .. } | E::Numerical { .. } => ExitCode::Numeric,
            E::Metric(_) => ExitCode::Metric,
        };
        Self::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ExitCode::Data, e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
