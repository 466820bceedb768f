use std::path::Path;

use dagmm_ho_core::Error as CoreError;

/// Failure of a CLI command, grouped by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    #[error("{0}")]
    Config(String),
    /// Unreadable, malformed or unsuitable input data (exit 2).
    #[error("{0}")]
    Data(String),
    /// Numerical failure during fitting or scoring (exit 3).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Parameter(_) => CliError::Config(msg),
            CoreError::Dimension { .. }
            | CoreError::Input(_)
            | CoreError::DegenerateInput(_)
            | CoreError::Metric(_) => CliError::Data(msg),
            CoreError::NotPositiveDefinite
            | CoreError::NoConvergence(_)
            | CoreError::Numeric(_)
            | CoreError::NonFiniteObjective { .. }
            | CoreError::Diverged { .. } => CliError::Numeric(msg),
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
