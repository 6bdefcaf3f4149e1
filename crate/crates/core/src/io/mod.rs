//! File formats: OFF and binary mesh frames, sequence manifests, legacy VTK
//! output, recovery CSV series and JSON records.

mod manifest;
mod mesh_io;
mod records;
mod vtk;

pub use manifest::{load_sequence, write_sequence, FrameEntry, SequenceManifest, DEFAULT_FRAME_INTERVAL};
pub use mesh_io::{
    off_string, parse_off, read_mesh_frame, write_binary, write_mesh_frame, write_off, MeshFormat, BINARY_MAGIC,
};
pub use records::{read_recovery_csv, recovery_csv_string, write_json, write_recovery_csv, RECOVERY_HEADER};
pub use vtk::{vtk_string, write_vtk_frame};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::ErrorCategory;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: byte {offset}: {message}")]
    Binary {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Geometry {
        path: PathBuf,
        #[source]
        source: GeometryError,
    },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

impl IoError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            IoError::Io { .. } => ErrorCategory::Io,
            _ => ErrorCategory::Validation,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn invalid(path: &Path, message: impl Into<String>) -> Self {
        IoError::Invalid {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}
