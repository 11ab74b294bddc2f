use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or flag combinations.
    #[error("{0}")]
    Usage(String),
    /// Missing, unreadable or inconsistent input data.
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    pub(crate) fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<bcosfire::Error> for CliError {
    fn from(e: bcosfire::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
