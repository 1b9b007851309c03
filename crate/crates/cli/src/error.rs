use allocscore::{AllocError, ScoreError};
use allocscore_hubio::HubError;
use thiserror::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent input data or flags.
    #[error("{0}")]
    Input(String),
    /// The allocation problem could not be solved.
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl From<AllocError> for CliError {
    fn from(e: AllocError) -> Self {
        match e {
            AllocError::NoConvergence(_)
            | AllocError::InfeasibleConstraint(_)
            | AllocError::InfeasibleAllocation(_) => CliError::Solver(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        match e {
            ScoreError::Alloc(a) => a.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<HubError> for CliError {
    fn from(e: HubError) -> Self {
        match e {
            HubError::Io { .. } => CliError::Io(e.to_string()),
            HubError::Alloc(a) => a.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<allocscore::DistError> for CliError {
    fn from(e: allocscore::DistError) -> Self {
        CliError::Input(e.to_string())
    }
}
