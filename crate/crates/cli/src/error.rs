use std::path::Path;

use helioview::control::ControlError;
use helioview::sim::{ConfigError, SimError};
use helioview::vision::VisionError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: malformed: {message}")]
    Format { path: String, message: String },
    #[error("calibration: {0}")]
    Calibration(#[from] ControlError),
    #[error("vision: {0}")]
    Vision(#[from] VisionError),
    #[error("simulation: {0}")]
    Run(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io { path: path.display().to_string(), message: err.to_string() }
    }

    pub fn format(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Format { path: path.display().to_string(), message: err.to_string() }
    }

    /// 2 for bad input (scenario, run directory, flags), 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Format { .. } => 2,
            _ => 1,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => CliError::Config(c),
            SimError::Control(c) => CliError::Calibration(c),
            SimError::Sink(s) => CliError::Run(s),
        }
    }
}
