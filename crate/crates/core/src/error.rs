use thiserror::Error;

use crate::fem::EsfemError;
use crate::frap::FrapError;
use crate::geometry::GeometryError;
use crate::io::IoError;
use crate::linalg::{FitError, LinalgError};
use crate::pattern::RdsError;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Bad input: malformed files, invalid meshes, inconsistent parameters.
    Validation,
    /// Solver breakdown, non-convergence, non-finite results.
    Numerical,
    /// Reading or writing files failed.
    Io,
}

impl ErrorCategory {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Esfem(#[from] EsfemError),
    #[error(transparent)]
    Frap(#[from] FrapError),
    #[error(transparent)]
    Rds(#[from] RdsError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Geometry(_) => ErrorCategory::Validation,
            Error::Linalg(e) => linalg_category(e),
            Error::Fit(e) => fit_category(e),
            Error::Esfem(e) => e.category(),
            Error::Frap(e) => e.category(),
            Error::Rds(e) => e.category(),
            Error::Io(e) => e.category(),
        }
    }
}

pub(crate) fn linalg_category(e: &LinalgError) -> ErrorCategory {
    match e {
        LinalgError::Breakdown { .. } | LinalgError::NotConverged { .. } | LinalgError::NonFinite(_) => {
            ErrorCategory::Numerical
        }
        _ => ErrorCategory::Validation,
    }
}

pub(crate) fn fit_category(e: &FitError) -> ErrorCategory {
    match e {
        FitError::SingularNormalEquations | FitError::NotConverged { .. } | FitError::NonFinite => {
            ErrorCategory::Numerical
        }
        _ => ErrorCategory::Validation,
    }
}
