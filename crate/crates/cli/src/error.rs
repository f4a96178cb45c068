use thiserror::Error;

/// Failure of a command, classified for the process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("runtime error: {0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] stfgnn::Error),
}

impl CliError {
    /// 2 for configuration, 3 for data, 4 for runtime faults.
    pub fn exit_code(&self) -> i32 {
        use stfgnn::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
            CliError::Core(e) => match e {
                E::Usage(_) | E::Config(_) | E::InfeasibleBand { .. } => 2,
                E::Ingestion { .. } | E::Io(_) => 3,
                E::NonFinite { .. } | E::UndefinedMetric(_) => 4,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;
