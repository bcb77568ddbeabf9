use std::process::ExitCode;

use stimkit_core::calibrate::CalibrateError;
use stimkit_core::device::DeviceError;
use stimkit_core::signalgen::SignalError;
use stimkit_core::study::StudyError;
use thiserror::Error;

/// Failure of a CLI command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    /// Session state or configuration prevents the action.
    #[error("{0}")]
    State(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::State(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn to_exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SignalError> for CliError {
    fn from(e: SignalError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        match e {
            DeviceError::NoCurrentPath => CliError::State(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<CalibrateError> for CliError {
    fn from(e: CalibrateError) -> Self {
        match e {
            CalibrateError::MissingReference(_) | CalibrateError::MissingProfile(_) => CliError::State(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::LevelOutOfRange { .. } | StudyError::InvalidRating(_) => CliError::Validation(e.to_string()),
            StudyError::Json(_) | StudyError::Io(_) | StudyError::Invalid(_) => CliError::Io(e.to_string()),
            _ => CliError::State(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
