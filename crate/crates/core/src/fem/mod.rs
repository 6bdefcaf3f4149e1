//! P1 evolving-surface finite elements: assembly of mass, stiffness, ALE
//! advection and streamline-diffusion operators, and the backward-Euler step
//! that advances a nodal field from one surface frame to the next.

mod assembly;
mod step;

pub use assembly::{
    assemble_advection, assemble_mass, assemble_stiffness, assemble_streamline_diffusion, at_midpoints,
    mass_element, stiffness_element, Assembler, ElementMatrix, MIDPOINT_EDGES,
};
pub use step::{
    esfem_step, run_diffusion, DiffusionOptions, DiffusionRun, FrameState, Marcher, StepContext, StepRecord,
    SubstepPolicy,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::linalg_category;
use crate::geometry::GeometryError;
use crate::linalg::LinalgError;
use crate::ErrorCategory;

/// One value per vertex of the frame at `time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalField {
    values: Vec<f64>,
    time: f64,
}

impl NodalField {
    pub fn new(values: Vec<f64>, time: f64) -> Self {
        Self { values, time }
    }

    pub fn constant(n: usize, value: f64, time: f64) -> Self {
        Self::new(vec![value; n], time)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_len(&self, expected: usize) -> Result<(), EsfemError> {
        if self.values.len() != expected {
            return Err(EsfemError::FieldLength {
                expected,
                found: self.values.len(),
            });
        }
        if !self.is_finite() {
            return Err(EsfemError::NonFiniteField);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsfemError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("linear solve for the step ending at t = {time} failed: {source}")]
    Solve { time: f64, source: LinalgError },
    #[error("field has {found} values, mesh has {expected} vertices")]
    FieldLength { expected: usize, found: usize },
    #[error("field contains non-finite values")]
    NonFiniteField,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("end time {t_end} lies beyond the last frame at {last}")]
    BeyondSequence { t_end: f64, last: f64 },
    #[error("frame at t = {frame_time} is not a multiple of the step {dt}")]
    Misaligned { frame_time: f64, dt: f64 },
}

impl EsfemError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            EsfemError::Solve { source, .. } => linalg_category(source),
            EsfemError::Linalg(e) => linalg_category(e),
            EsfemError::NonFiniteField => ErrorCategory::Numerical,
            _ => ErrorCategory::Validation,
        }
    }
}
