//! Triangulated surface frames and their evolution in time.

mod icosphere;
mod mesh;
mod sequence;

pub use icosphere::icosphere;
pub use mesh::{
    element_geometry, max_element_diameter, validate_mesh, ElementGeometry, SurfaceMesh, Triangle,
    ValidationReport, DEGENERATE_AREA_RATIO,
};
pub use sequence::{
    interpolate_frames, synth_sequence, vertex_velocity, MeshSequence, SynthKind, VertexVelocityField,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("triangle {triangle} references a vertex outside 0..{vertex_count}")]
    IndexOutOfRange { triangle: usize, vertex_count: usize },
    #[error("surface is not closed: {boundary} boundary and {non_manifold} non-manifold edges (first {first:?})")]
    NotClosed {
        boundary: usize,
        non_manifold: usize,
        first: (usize, usize),
    },
    #[error("inconsistent orientation on {count} edges (first {first:?})")]
    Orientation { count: usize, first: (usize, usize) },
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    Degenerate { triangle: usize, area: f64 },
    #[error("Euler characteristic {found}, expected 2 for a genus-zero surface")]
    EulerCharacteristic { found: i64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("frame {frame} has {found} vertices, expected {expected}")]
    VertexCountMismatch {
        frame: usize,
        expected: usize,
        found: usize,
    },
    #[error("frame {frame} does not share the first frame's connectivity")]
    ConnectivityMismatch { frame: usize },
    #[error("frame {frame} at time {time} does not come after {previous}")]
    NonIncreasingTimes { frame: usize, time: f64, previous: f64 },
    #[error("time {t} outside the sequence range [{start}, {end}]")]
    TimeOutOfRange { t: f64, start: f64, end: f64 },
    #[error("a sequence needs at least one frame")]
    EmptySequence,
    #[error("{0}")]
    InvalidParameters(String),
}
