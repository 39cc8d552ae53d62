use std::path::PathBuf;

use nlos_core::NlosError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Unreadable container: wrong magic, unknown version, malformed header.
    #[error("format error: {0}")]
    Format(String),
    /// Container that parses but whose payload disagrees with its header.
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] NlosError),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
    #[error("enhancer failed: {0}")]
    Enhancer(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(stage: &'static str) -> impl FnOnce(CliError) -> CliError {
        move |e| CliError::Stage {
            stage,
            source: Box::new(e),
        }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Format(_) | CliError::Integrity(_) => ExitStatus::Integrity,
            CliError::Core(NlosError::Budget { .. }) => ExitStatus::Budget,
            CliError::Stage { source, .. } => source.exit_status(),
            CliError::Io { .. } | CliError::Enhancer(_) => ExitStatus::Failure,
            CliError::Config(_) | CliError::Core(_) => ExitStatus::Validation,
        }
    }
}

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Ok = 0,
    Failure = 1,
    Validation = 2,
    Integrity = 3,
    Budget = 4,
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<CliError>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| CliError::in_stage(stage)(e.into()))
    }
}
