use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{icosphere, validate_mesh, GeometryError, SurfaceMesh, Triangle};
use crate::Vec3;

/// Frames of one evolving surface, ordered by strictly increasing time and
/// sharing one triangle list.
///
/// A single-frame sequence describes a static surface and can be sampled at
/// any time.
#[derive(Debug, Clone)]
pub struct MeshSequence {
    frames: Vec<SurfaceMesh>,
}

impl MeshSequence {
    /// Only the first frame's topology is checked in full; later frames must
    /// match its vertex count and triangle list.
    pub fn new(frames: Vec<SurfaceMesh>) -> Result<Self, GeometryError> {
        let first = frames.first().ok_or(GeometryError::EmptySequence)?;
        validate_mesh(first).check()?;
        let shared: Arc<[Triangle]> = Arc::clone(first.connectivity());
        let expected = first.vertex_count();
        let mut out = Vec::with_capacity(frames.len());
        let mut previous_time = f64::NEG_INFINITY;
        for (index, frame) in frames.into_iter().enumerate() {
            if frame.vertex_count() != expected {
                return Err(GeometryError::VertexCountMismatch {
                    frame: index,
                    expected,
                    found: frame.vertex_count(),
                });
            }
            if !Arc::ptr_eq(frame.connectivity(), &shared) && frame.triangles() != &shared[..] {
                return Err(GeometryError::ConnectivityMismatch { frame: index });
            }
            if !(frame.frame_time() > previous_time) || !frame.frame_time().is_finite() {
                return Err(GeometryError::NonIncreasingTimes {
                    frame: index,
                    time: frame.frame_time(),
                    previous: previous_time,
                });
            }
            previous_time = frame.frame_time();
            let frame_time = frame.frame_time();
            out.push(SurfaceMesh::new(frame.into_vertices(), Arc::clone(&shared), frame_time));
        }
        Ok(Self { frames: out })
    }

    /// A static surface.
    pub fn from_static(mesh: SurfaceMesh) -> Result<Self, GeometryError> {
        Self::new(vec![mesh])
    }

    pub fn frames(&self) -> &[SurfaceMesh] {
        &self.frames
    }

    pub fn first(&self) -> &SurfaceMesh {
        &self.frames[0]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn is_static(&self) -> bool {
        self.frames.len() == 1
    }

    pub fn start_time(&self) -> f64 {
        self.frames[0].frame_time()
    }

    /// Last frame time, or `+inf` for a static sequence.
    pub fn end_time(&self) -> f64 {
        if self.is_static() {
            f64::INFINITY
        } else {
            self.frames[self.frames.len() - 1].frame_time()
        }
    }

    pub fn connectivity(&self) -> &Arc<[Triangle]> {
        self.frames[0].connectivity()
    }

    /// The surface at time `t`; see [`interpolate_frames`].
    pub fn at(&self, t: f64) -> Result<SurfaceMesh, GeometryError> {
        interpolate_frames(self, t)
    }

    /// Same frames with every frame time shifted so that frame `index` sits
    /// at `t = 0`, dropping the earlier frames.
    pub fn starting_at(&self, index: usize) -> Result<Self, GeometryError> {
        if index >= self.frames.len() {
            return Err(GeometryError::InvalidParameters(format!(
                "start frame {index} but the sequence has {} frames",
                self.frames.len()
            )));
        }
        let t0 = self.frames[index].frame_time();
        let frames = self.frames[index..]
            .iter()
            .map(|f| {
                let mut f = f.clone();
                f.set_frame_time(f.frame_time() - t0);
                f
            })
            .collect();
        Ok(Self { frames })
    }

    /// Replaces frame times by `index * interval`.
    pub fn with_uniform_times(&self, interval: f64) -> Result<Self, GeometryError> {
        if !(interval > 0.0) {
            return Err(GeometryError::NonPositiveStep(interval));
        }
        let frames = self
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let mut f = f.clone();
                f.set_frame_time(i as f64 * interval);
                f
            })
            .collect();
        Ok(Self { frames })
    }

    /// Applies the same map to every vertex of every frame.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            frames: self.frames.iter().map(|m| m.map_vertices(&f)).collect(),
        }
    }
}

/// Velocity of every vertex, in length units per second.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexVelocityField(Vec<Vec3>);

impl VertexVelocityField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Vec3::zeros(); n])
    }

    pub fn values(&self) -> &[Vec3] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|v| *v == Vec3::zeros())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Difference quotient `(x_curr - x_prev) / tau` at every vertex.
pub fn vertex_velocity(
    prev: &SurfaceMesh,
    curr: &SurfaceMesh,
    tau: f64,
) -> Result<VertexVelocityField, GeometryError> {
    if !(tau > 0.0) {
        return Err(GeometryError::NonPositiveStep(tau));
    }
    if prev.vertex_count() != curr.vertex_count() {
        return Err(GeometryError::VertexCountMismatch {
            frame: 1,
            expected: prev.vertex_count(),
            found: curr.vertex_count(),
        });
    }
    Ok(VertexVelocityField(
        prev.vertices()
            .iter()
            .zip(curr.vertices())
            .map(|(p, c)| (c - p) / tau)
            .collect(),
    ))
}

/// Vertex positions interpolated linearly in time between neighbouring
/// frames. At a frame time the frame itself is returned unchanged.
pub fn interpolate_frames(seq: &MeshSequence, t: f64) -> Result<SurfaceMesh, GeometryError> {
    let frames = seq.frames();
    if seq.is_static() {
        if !(t >= frames[0].frame_time()) {
            return Err(GeometryError::TimeOutOfRange {
                t,
                start: frames[0].frame_time(),
                end: f64::INFINITY,
            });
        }
        let mut frame = frames[0].clone();
        frame.set_frame_time(t);
        return Ok(frame);
    }
    let (start, end) = (seq.start_time(), seq.end_time());
    // Step times are built as t0 + k*dt and may overshoot the last frame by
    // a few ulps.
    let slack = 1e-12 * (end - start).abs().max(1.0);
    if !(t >= start - slack && t <= end + slack) {
        return Err(GeometryError::TimeOutOfRange { t, start, end });
    }
    let t = t.clamp(start, end);
    let upper = frames.partition_point(|f| f.frame_time() <= t);
    let i = upper - 1;
    let lo = &frames[i];
    if lo.frame_time() == t || i + 1 == frames.len() {
        let mut frame = lo.clone();
        frame.set_frame_time(t);
        return Ok(frame);
    }
    let hi = &frames[i + 1];
    let s = (t - lo.frame_time()) / (hi.frame_time() - lo.frame_time());
    let vertices = lo
        .vertices()
        .iter()
        .zip(hi.vertices())
        .map(|(a, b)| a + (b - a) * s)
        .collect();
    Ok(lo.with_vertices(vertices, t))
}

/// Analytic test geometries built on an icosphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SynthKind {
    /// Every frame identical.
    StaticSphere {
        #[serde(default = "one")]
        radius: f64,
    },
    /// Radius `R(t) = initial_radius + rate * t`.
    ExpandingSphere {
        #[serde(default = "one")]
        initial_radius: f64,
        #[serde(default = "default_rate")]
        rate: f64,
    },
    /// Unit sphere whose x semi-axis is `1 + amplitude * sin(2 pi t / period)`.
    OscillatingEllipsoid {
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default = "default_period")]
        period: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn default_rate() -> f64 {
    0.1
}
fn default_amplitude() -> f64 {
    0.25
}
fn default_period() -> f64 {
    4.0
}

impl SynthKind {
    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::StaticSphere { .. } => "static-sphere",
            SynthKind::ExpandingSphere { .. } => "expanding-sphere",
            SynthKind::OscillatingEllipsoid { .. } => "oscillating-ellipsoid",
        }
    }

    /// Per-axis scale applied to the unit icosphere at time `t`.
    fn axis_scales(&self, t: f64) -> Vec3 {
        match *self {
            SynthKind::StaticSphere { radius } => Vec3::repeat(radius),
            SynthKind::ExpandingSphere { initial_radius, rate } => Vec3::repeat(initial_radius + rate * t),
            SynthKind::OscillatingEllipsoid { amplitude, period } => {
                Vec3::new(1.0 + amplitude * (2.0 * PI * t / period).sin(), 1.0, 1.0)
            }
        }
    }
}

/// Frames at times `0, frame_dt, ..., (frame_count - 1) * frame_dt`.
pub fn synth_sequence(
    kind: SynthKind,
    subdivisions: u32,
    frame_count: usize,
    frame_dt: f64,
) -> Result<MeshSequence, GeometryError> {
    if frame_count < 2 {
        return Err(GeometryError::InvalidParameters(format!(
            "synthetic sequences need at least 2 frames, got {frame_count}"
        )));
    }
    if !(frame_dt > 0.0) {
        return Err(GeometryError::NonPositiveStep(frame_dt));
    }
    if let SynthKind::OscillatingEllipsoid { period, .. } = kind {
        if !(period > 0.0) {
            return Err(GeometryError::InvalidParameters(format!("period must be positive, got {period}")));
        }
    }
    let base = icosphere(subdivisions, 1.0);
    let mut frames = Vec::with_capacity(frame_count);
    for i in 0..frame_count {
        let t = i as f64 * frame_dt;
        let scale = kind.axis_scales(t);
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(GeometryError::InvalidParameters(format!(
                "{} has non-positive extent {:?} at t = {t}",
                kind.name(),
                scale.as_slice()
            )));
        }
        frames.push(base.with_vertices(
            base.vertices().iter().map(|v| v.component_mul(&scale)).collect(),
            t,
        ));
    }
    MeshSequence::new(frames)
}
