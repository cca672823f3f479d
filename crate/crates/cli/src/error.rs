use std::path::PathBuf;

/// Failures of the batch runner, split by the exit status they map to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{context}{source}")]
    Config { context: String, source: fairagg::Error },

    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },

    #[error("{failed} of {total} runs failed")]
    RunsFailed { failed: usize, total: usize },
}

impl CliError {
    /// 1 for anything wrong with the configuration, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ReadConfig { .. } | CliError::Parse { .. } | CliError::Config { .. } => 1,
            CliError::Output { .. } | CliError::RunsFailed { .. } => 2,
        }
    }
}
