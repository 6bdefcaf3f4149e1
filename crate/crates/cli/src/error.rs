use std::path::PathBuf;

use esfem::ErrorCategory;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] esfem::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

macro_rules! via_core {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        })*
    };
}

via_core!(
    esfem::geometry::GeometryError,
    esfem::linalg::LinalgError,
    esfem::linalg::FitError,
    esfem::fem::EsfemError,
    esfem::frap::FrapError,
    esfem::pattern::RdsError,
    esfem::io::IoError
);

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Config(_) => ErrorCategory::Validation,
            CliError::Io { .. } => ErrorCategory::Io,
        }
    }

    /// 3 for bad input and file problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Numerical => 4,
            ErrorCategory::Validation | ErrorCategory::Io => 3,
        }
    }
}
