use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed snapshot: {message}")]
    Snapshot { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] nlch_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for bad input, 1 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } | CliError::MissingKey(_) | CliError::Invalid(_) | CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                nlch_core::Error::Config(_)
                | nlch_core::Error::Usage(_)
                | nlch_core::Error::Domain { .. }
                | nlch_core::Error::InitialData { .. }
                | nlch_core::Error::MeanConstraint { .. }
                | nlch_core::Error::KernelHypothesis(_)
                | nlch_core::Error::Table { .. } => 2,
                nlch_core::Error::StepFailure { .. } | nlch_core::Error::NumericalBlowup { .. } => 1,
            },
            CliError::Io { .. } | CliError::Snapshot { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
