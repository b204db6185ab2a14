use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{failed} of {total} runs failed")]
    PartialFailure { failed: usize, total: usize },
    #[error("analysis input missing: {0}")]
    MissingInput(String),
    #[error("{path}: format version {found:?}, expected {expected}")]
    FormatVersion {
        path: PathBuf,
        found: Option<String>,
        expected: u32,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Evolution(#[from] neuroevo_core::evolution::EvolutionError),
    #[error(transparent)]
    Stats(#[from] neuroevo_core::stats::StatsError),
    #[error(transparent)]
    Complexity(#[from] neuroevo_core::complexity::ComplexityError),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::PartialFailure { .. } => 3,
            HarnessError::MissingInput(_) | HarnessError::FormatVersion { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Csv { path, source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Json { path, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
