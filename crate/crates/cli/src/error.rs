use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] adp_sched_core::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 when a numerical
    /// assumption (concavity, monotone structure) fails at run time.
    pub fn exit_code(&self) -> i32 {
        use adp_sched_core::Error as E;
        match self {
            CliError::Parse(_) | CliError::Config { .. } => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(E::InvalidParameter { .. } | E::PriorityOrder | E::Unsupported(_) | E::InvalidBreakpoints(_)) => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
