use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced by the command-line front end.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: cfnade::Error,
    },
}

impl CliError {
    pub fn core(context: impl Into<String>, source: cfnade::Error) -> Self {
        CliError::Core {
            context: context.into(),
            source,
        }
    }

    /// 0 success, 1 usage or config, 2 data, 3 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::File { .. } | CliError::Json { .. } => 2,
            CliError::Core { source, .. } => match source {
                cfnade::Error::Config { .. } => 1,
                cfnade::Error::Divergence { .. } | cfnade::Error::NonFinite(_) => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
