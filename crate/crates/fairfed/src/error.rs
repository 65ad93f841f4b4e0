use std::io;
use std::path::Path;

/// Errors surfaced by the command line, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or bad input files (exit code 2).
    #[error("{0}")]
    Config(String),
    /// Failure while running: non-finite losses, IO mid-run (exit code 3).
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    pub fn read(path: &Path, err: io::Error) -> Self {
        CliError::Config(format!("cannot read {}: {err}", path.display()))
    }

    pub fn write(path: &Path, err: io::Error) -> Self {
        CliError::Runtime(format!("cannot write {}: {err}", path.display()))
    }
}

impl From<fairfed_core::Error> for CliError {
    fn from(err: fairfed_core::Error) -> Self {
        use fairfed_core::Error as E;
        match err {
            E::InvalidConfig(_) => CliError::Config(err.to_string()),
            E::InvalidArgument(_) | E::Numeric(_) | E::UndefinedMetric(_) => {
                CliError::Runtime(err.to_string())
            }
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
