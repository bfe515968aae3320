use std::path::PathBuf;

use memica_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    NotConverged(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::NotConverged(_) => 4,
            CliError::Core(e) => match e {
                CoreError::Io { .. }
                | CoreError::UnsupportedFormat { .. }
                | CoreError::MalformedImage { .. } => 3,
                CoreError::InvalidParams(_)
                | CoreError::OutOfRange { .. }
                | CoreError::DestructiveRead { .. }
                | CoreError::Schedule(_)
                | CoreError::Variation(_) => 2,
                _ => 1,
            },
            CliError::Csv(_) => 1,
        }
    }
}
