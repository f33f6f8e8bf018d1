use std::path::Path;

use growthcast::verification::VerificationError;
use growthcast::{DataError, EnsembleError, FitError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    /// The series cannot support a forecast: invalid fit, not ready, or too
    /// few ensemble members.
    #[error("{0}")]
    Collapse(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadForecast { path: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) | Self::BadForecast { .. } => 3,
            Self::Collapse(_) => 4,
            Self::Io { .. } => 5,
        }
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Data(d) => Self::Data(d),
            FitError::InvalidFit(_)
            | FitError::TooFewPoints { .. }
            | FitError::DegenerateDesign => Self::Collapse(e.to_string()),
        }
    }
}

impl From<EnsembleError> for CliError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::InvalidConfig(m) => Self::Usage(m),
            EnsembleError::Data(d) => Self::Data(d),
            EnsembleError::Collapse(r) => Self::Collapse(r.to_string()),
        }
    }
}

impl From<VerificationError> for CliError {
    fn from(e: VerificationError) -> Self {
        match e {
            VerificationError::EmptyRange { .. } => Self::Usage(e.to_string()),
            VerificationError::Fit(f) => f.into(),
            VerificationError::Data(d) => Self::Data(d),
        }
    }
}
