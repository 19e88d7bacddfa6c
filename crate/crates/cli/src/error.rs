use std::path::Path;

use thiserror::Error;

/// Process exit codes. Clap's own usage errors also exit with 2.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERICAL: i32 = 4;
    pub const IO: i32 = 5;
    pub const NOT_CONVERGED: i32 = 6;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(_) => exit::DATA,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Io { .. } => exit::IO,
        }
    }
}

impl From<dnbcure::Error> for CliError {
    fn from(err: dnbcure::Error) -> Self {
        use dnbcure::Error as E;
        match err {
            E::Usage(_) | E::Config(_) | E::Domain(_) => CliError::Usage(err.to_string()),
            // Dataset rows are 0-based internally; the file has a header line.
            E::Data { row, message } => CliError::Data(format!("line {}: {message}", row + 2)),
            E::Numerical { .. } | E::NotAscent { .. } | E::Inference(_) => {
                CliError::Numerical(err.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
