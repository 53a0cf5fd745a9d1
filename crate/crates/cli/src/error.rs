use thiserror::Error;

use netspc_core::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error("moments: {0}")]
    Moments(#[source] CoreError),

    #[error("solver: {0}")]
    Solver(#[source] CoreError),

    #[error("report: {0}")]
    Report(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn from_config(e: CoreError) -> Self {
        CliError::Config(e.to_string())
    }

    /// Classify a failure of the preparation phase: bad inputs are config
    /// errors, everything else belongs to the moment computation.
    pub fn from_prepare(e: CoreError) -> Self {
        match e {
            CoreError::InvalidModel(_)
            | CoreError::InvalidArgument(_)
            | CoreError::DimensionMismatch(_)
            | CoreError::NotLyapunovStable(_)
            | CoreError::NotReachable { .. }
            | CoreError::NotPd(_)
            | CoreError::NotPsd(_) => CliError::Config(e.to_string()),
            e => CliError::Moments(e),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Report(_) | CliError::Io(_) => 1,
            CliError::Moments(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}
