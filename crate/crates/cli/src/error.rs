use std::io::ErrorKind;
use std::process::ExitCode;

use gazetrack::io::IoError;
use thiserror::Error;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or unusable input data. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// The environment failed us: files, sockets, devices. Exit code 3.
    #[error("{0}")]
    Io(String),
    /// A bug: an invariant of our own output did not hold. Exit code 1.
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Input(_) => ExitCode::from(2),
            CliError::Io(_) => ExitCode::from(3),
            CliError::Internal(_) => ExitCode::from(1),
        }
    }

    /// Classifies a read failure: missing or malformed input is the
    /// caller's problem, anything else is environmental.
    pub fn from_read(e: IoError) -> Self {
        match &e {
            IoError::Io { source, .. } if source.kind() != ErrorKind::NotFound => CliError::Io(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }

    pub fn from_write(e: impl std::fmt::Display) -> Self {
        CliError::Io(e.to_string())
    }
}
