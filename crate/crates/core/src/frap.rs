//! Fluorescence recovery after photobleaching on an evolving surface.
//!
//! A ball-shaped region is bleached at `t = 0` (concentration 0 at vertices
//! inside the ball, 1 elsewhere). The field then diffuses on the moving
//! surface and the mean concentration over the observed region is sampled
//! every step. The observed region is either the set of triangles selected
//! on the initial frame, carried along with the mesh, or the triangles
//! currently inside the fixed ball. The sampled series is fitted to
//! `A (1 - exp(-t / B))`, whose half-recovery time is `B ln 2`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::fit_category;
use crate::fem::{esfem_step, EsfemError, Marcher, NodalField, SubstepPolicy};
use crate::geometry::{GeometryError, MeshSequence, SurfaceMesh};
use crate::linalg::{levenberg_marquardt, CurveModel, FitError, LmOptions, SolverOptions};
use crate::{ErrorCategory, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrapError {
    #[error(transparent)]
    Esfem(#[from] EsfemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("invalid FRAP configuration: {0}")]
    InvalidConfig(String),
    #[error("the region of interest contains no triangles")]
    EmptyRoi,
    #[error("recovery fit needs at least 3 samples inside the window, found {found}")]
    TooFewSamples { found: usize },
}

impl FrapError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            FrapError::Esfem(e) => e.category(),
            FrapError::Fit(e) => fit_category(e),
            _ => ErrorCategory::Validation,
        }
    }
}

/// Ball with centre `center` and radius `radius`, in mesh units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    pub center: [f64; 3],
    pub radius: f64,
}

impl RoiSpec {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Self {
            center: [center.x, center.y, center.z],
            radius,
        }
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.center()).norm() < self.radius
    }

    fn validate(&self) -> Result<(), FrapError> {
        if !self.center.iter().all(|c| c.is_finite()) {
            return Err(FrapError::InvalidConfig("ROI centre must be finite".into()));
        }
        if !(self.radius >= 0.0) || !self.radius.is_finite() {
            return Err(FrapError::InvalidConfig(format!(
                "ROI radius must be non-negative, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

/// Which triangles belong to the region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoiRule {
    /// The triangle's barycentre lies inside the ball.
    #[default]
    Barycenter,
    /// All three corners lie inside the ball.
    AllVertices,
}

/// How the observed region follows the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Triangles selected on the initial frame, carried with the mesh.
    #[default]
    FrozenElements,
    /// Triangles inside the fixed ball, re-selected at every sample.
    FixedBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrapConfig {
    /// Diffusivity in square micrometres per second.
    pub diffusivity: f64,
    /// Micrometres per mesh length unit.
    pub unit_scale: f64,
    /// Time step in seconds.
    pub dt: f64,
    /// Only samples with `t <= fit_window` enter the recovery fit.
    pub fit_window: f64,
    /// Simulated time; defaults to the fit window.
    pub duration: Option<f64>,
    /// Defaults to the first-frame vertex farthest along +x from the vertex
    /// centroid.
    pub roi_center: Option<[f64; 3]>,
    /// Defaults to a quarter of the first frame's bounding radius.
    pub roi_radius: Option<f64>,
    pub roi_rule: RoiRule,
    pub sampling: SamplingMode,
    /// Index of the frame at which bleaching happens; it becomes `t = 0`.
    pub start_frame: usize,
    pub policy: SubstepPolicy,
}

impl Default for FrapConfig {
    fn default() -> Self {
        Self {
            diffusivity: 0.05,
            unit_scale: 1.0,
            dt: 0.04,
            fit_window: 12.0,
            duration: None,
            roi_center: None,
            roi_radius: None,
            roi_rule: RoiRule::Barycenter,
            sampling: SamplingMode::FrozenElements,
            start_frame: 0,
            policy: SubstepPolicy::Interpolate,
        }
    }
}

impl FrapConfig {
    /// Diffusivity converted to mesh units² per second.
    pub fn mesh_diffusivity(&self) -> f64 {
        self.diffusivity / (self.unit_scale * self.unit_scale)
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or(self.fit_window)
    }

    pub fn validate(&self) -> Result<(), FrapError> {
        let positive = [
            ("dt", self.dt),
            ("fit_window", self.fit_window),
            ("unit_scale", self.unit_scale),
            ("duration", self.duration()),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(FrapError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.diffusivity >= 0.0) || !self.diffusivity.is_finite() {
            return Err(FrapError::InvalidConfig(format!(
                "diffusivity must be non-negative, got {}",
                self.diffusivity
            )));
        }
        if self.fit_window > self.duration() * (1.0 + 1e-12) {
            return Err(FrapError::InvalidConfig(format!(
                "fit window {} exceeds the simulated duration {}",
                self.fit_window,
                self.duration()
            )));
        }
        Ok(())
    }

    /// The ball used on `mesh` (the first frame of the run).
    pub fn resolve_roi(&self, mesh: &SurfaceMesh) -> RoiSpec {
        let centroid = mesh.vertex_centroid();
        let center = match self.roi_center {
            Some(c) => Vec3::from(c),
            None => *mesh
                .vertices()
                .iter()
                .max_by(|a, b| (a.x - centroid.x).total_cmp(&(b.x - centroid.x)))
                .expect("meshes have vertices"),
        };
        let radius = self.roi_radius.unwrap_or(0.25 * mesh.bounding_radius());
        RoiSpec::new(center, radius)
    }
}

fn barycenter(mesh: &SurfaceMesh, t: usize) -> Vec3 {
    let [a, b, c] = mesh.triangle_points(t);
    (a + b + c) / 3.0
}

/// Triangles of `mesh` inside `roi`; may be empty.
pub fn roi_elements(mesh: &SurfaceMesh, roi: &RoiSpec, rule: RoiRule) -> Vec<usize> {
    (0..mesh.triangle_count())
        .filter(|&t| match rule {
            RoiRule::Barycenter => roi.contains(&barycenter(mesh, t)),
            RoiRule::AllVertices => mesh.triangle_points(t).iter().all(|p| roi.contains(p)),
        })
        .collect()
}

/// The triangle whose barycentre is closest to the ROI centre.
pub fn nearest_element(mesh: &SurfaceMesh, roi: &RoiSpec) -> usize {
    let c = roi.center();
    (0..mesh.triangle_count())
        .min_by(|&a, &b| {
            (barycenter(mesh, a) - c)
                .norm_squared()
                .total_cmp(&(barycenter(mesh, b) - c).norm_squared())
        })
        .expect("meshes have triangles")
}

/// Nodal interpolation of the unbleached indicator: 0 inside the ball, 1
/// outside.
pub fn bleach_initial(mesh: &SurfaceMesh, roi: &RoiSpec) -> NodalField {
    let values = mesh
        .vertices()
        .iter()
        .map(|p| if roi.contains(p) { 0.0 } else { 1.0 })
        .collect();
    NodalField::new(values, mesh.frame_time())
}

/// Area of the triangle union `elements` on `mesh`.
pub fn elements_area(mesh: &SurfaceMesh, elements: &[usize]) -> f64 {
    elements.iter().map(|&t| triangle_area(mesh, t)).sum()
}

fn triangle_area(mesh: &SurfaceMesh, t: usize) -> f64 {
    let [a, b, c] = mesh.triangle_points(t);
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Mean of the P1 field `u` over the triangle union `elements`:
/// `Σ area_T · mean(u on corners of T) / Σ area_T`.
pub fn mean_concentration(mesh: &SurfaceMesh, u: &[f64], elements: &[usize]) -> Result<f64, FrapError> {
    if elements.is_empty() {
        return Err(FrapError::EmptyRoi);
    }
    let tris = mesh.triangles();
    let (mut integral, mut area) = (0.0, 0.0);
    for &t in elements {
        let a = triangle_area(mesh, t);
        let [i, j, k] = tris[t];
        integral += a * (u[i] + u[j] + u[k]) / 3.0;
        area += a;
    }
    Ok(integral / area)
}

/// `A (1 - exp(-t / B))` with parameters `[A, B]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RecoveryModel;

impl CurveModel for RecoveryModel {
    fn parameter_count(&self) -> usize {
        2
    }

    fn value(&self, p: &[f64], t: f64) -> f64 {
        p[0] * (1.0 - (-t / p[1]).exp())
    }

    fn gradient(&self, p: &[f64], t: f64, grad: &mut [f64]) {
        let e = (-t / p[1]).exp();
        grad[0] = 1.0 - e;
        grad[1] = -p[0] * e * t / (p[1] * p[1]);
    }

    fn is_admissible(&self, p: &[f64]) -> bool {
        p[1] > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryFit {
    pub a: f64,
    pub b: f64,
    pub std_a: f64,
    pub std_b: f64,
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
    /// `b ln 2`.
    pub t_half: f64,
    pub samples: usize,
}

/// Unweighted fit of `A (1 - exp(-t / B))` to the samples with
/// `t <= window`.
///
/// The start is `A₀` = last sample in the window and `B₀` = first time the
/// series exceeds `A₀ (1 - 1/e)`, or half the window when that time is not
/// positive.
pub fn recovery_fit(times: &[f64], values: &[f64], window: f64) -> Result<RecoveryFit, FrapError> {
    if times.len() != values.len() {
        return Err(FitError::LengthMismatch {
            times: times.len(),
            observations: values.len(),
        }
        .into());
    }
    let slack = 1e-9 * window.abs().max(1.0);
    let (t, y): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(values)
        .filter(|(&t, _)| t <= window + slack)
        .map(|(&t, &y)| (t, y))
        .unzip();
    if t.len() < 3 {
        return Err(FrapError::TooFewSamples { found: t.len() });
    }
    let a0 = *y.last().expect("at least three samples");
    let threshold = a0 * (1.0 - (-1.0f64).exp());
    let b0 = t
        .iter()
        .zip(&y)
        .find(|(_, &v)| v > threshold)
        .map(|(&t, _)| t)
        .filter(|&t| t > 0.0)
        .unwrap_or(0.5 * window);
    let fit = levenberg_marquardt(&RecoveryModel, &t, &y, &[a0, b0], &LmOptions::default())?;
    Ok(RecoveryFit {
        a: fit.params[0],
        b: fit.params[1],
        std_a: fit.std_devs[0],
        std_b: fit.std_devs[1],
        ssr: fit.ssr,
        iterations: fit.iterations,
        converged: fit.converged,
        degenerate: fit.degenerate,
        t_half: fit.params[1] * LN_2,
        samples: t.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrapSample {
    pub time: f64,
    pub mean_concentration: f64,
    pub roi_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrapResult {
    pub roi: RoiSpec,
    pub samples: Vec<FrapSample>,
    /// Area of the observed triangles over the total area at `t = 0`.
    pub bleached_area_fraction: f64,
    /// `1 - ∫ c₀ / |Γ|` at `t = 0`: the share of the uniform mass removed
    /// by the bleach. The long-run uniform concentration is `1 -` this.
    pub bleached_mass_fraction: f64,
    pub roi_element_count: usize,
    /// The ball contained no barycentre, so the nearest triangle was used.
    pub roi_fallback: bool,
    /// Largest relative change of `∫ c` over the run.
    pub max_mass_drift: f64,
    pub fit: Option<RecoveryFit>,
    pub fit_error: Option<String>,
}

impl FrapResult {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.mean_concentration).collect()
    }
}

/// Bleaches the surface at `cfg.start_frame`, diffuses for `cfg.duration()`
/// seconds and fits the recovery curve.
pub fn run_frap(seq: &MeshSequence, cfg: &FrapConfig, solver: &SolverOptions) -> Result<FrapResult, FrapError> {
    cfg.validate()?;
    let seq = seq.starting_at(cfg.start_frame)?;
    let mesh0 = seq.first();
    let roi = cfg.resolve_roi(mesh0);
    roi.validate()?;
    if roi.radius > 0.5 * mesh0.bounding_radius() {
        log::warn!(
            "ROI radius {} exceeds half the bounding radius {}",
            roi.radius,
            mesh0.bounding_radius()
        );
    }
    let select = |mesh: &SurfaceMesh| -> (Vec<usize>, bool) {
        let elements = roi_elements(mesh, &roi, cfg.roi_rule);
        if elements.is_empty() {
            (vec![nearest_element(mesh, &roi)], true)
        } else {
            (elements, false)
        }
    };
    let (initial_elements, roi_fallback) = select(mesh0);
    let diffusivity = cfg.mesh_diffusivity();

    let mut marcher = Marcher::new(&seq, cfg.dt, cfg.duration(), cfg.policy)?;
    let mut u = bleach_initial(mesh0, &roi);
    let total_area = mesh0.total_area();
    let mass0 = marcher.current().total_mass(u.values());
    let bleached_mass_fraction = 1.0 - mass0 / total_area;
    let bleached_area_fraction = elements_area(mesh0, &initial_elements) / total_area;

    let sample = |mesh: &SurfaceMesh, u: &NodalField, time: f64| -> Result<FrapSample, FrapError> {
        let elements = match cfg.sampling {
            SamplingMode::FrozenElements => initial_elements.clone(),
            SamplingMode::FixedBall => select(mesh).0,
        };
        Ok(FrapSample {
            time,
            mean_concentration: mean_concentration(mesh, u.values(), &elements)?,
            roi_area: elements_area(mesh, &elements),
        })
    };

    let mut samples = vec![sample(mesh0, &u, 0.0)?];
    let mut max_mass_drift: f64 = 0.0;
    while let Some(ctx) = marcher.advance()? {
        let (next, _) = esfem_step(&ctx, diffusivity, &u, solver)?;
        u = next;
        let mass = ctx.curr().total_mass(u.values());
        max_mass_drift = max_mass_drift.max((mass - mass0).abs() / mass0.abs().max(f64::MIN_POSITIVE));
        samples.push(sample(ctx.curr().mesh(), &u, ctx.time())?);
    }

    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let means: Vec<f64> = samples.iter().map(|s| s.mean_concentration).collect();
    let (fit, fit_error) = match recovery_fit(&times, &means, cfg.fit_window) {
        Ok(fit) => (Some(fit), None),
        Err(e) => {
            log::warn!("recovery fit failed: {e}");
            (None, Some(e.to_string()))
        }
    };
    Ok(FrapResult {
        roi,
        samples,
        bleached_area_fraction,
        bleached_mass_fraction,
        roi_element_count: initial_elements.len(),
        roi_fallback,
        max_mass_drift,
        fit,
        fit_error,
    })
}
