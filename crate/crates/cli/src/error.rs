use std::fmt;
use std::process::ExitCode;

use netrecon::ErrorKind;

/// Exit statuses: 0 success, 2 config or input, 3 numerical, 4 stability.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Config = 2,
    Numerical = 3,
    Stability = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub stage: &'static str,
    pub status: Status,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            stage: "config",
            status: Status::Config,
            message: message.into(),
        }
    }

    pub fn io(stage: &'static str, what: &std::path::Path, e: std::io::Error) -> Self {
        Self {
            stage,
            status: Status::Config,
            message: format!("{}: {e}", what.display()),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.status as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

/// Attach a stage name to a library error.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T> StageExt<T> for netrecon::Result<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError {
            stage,
            status: match e.kind() {
                ErrorKind::Input => Status::Config,
                ErrorKind::Numerical => Status::Numerical,
                ErrorKind::Stability => Status::Stability,
            },
            message: e.to_string(),
        })
    }
}
