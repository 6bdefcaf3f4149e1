use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::assembly::{at_midpoints, Assembler};
use super::{EsfemError, NodalField};
use crate::geometry::{
    element_geometry, interpolate_frames, vertex_velocity, ElementGeometry, MeshSequence, SurfaceMesh,
    VertexVelocityField,
};
use crate::linalg::{bicgstab, CsrMatrix, SolveStats, SolverOptions};
use crate::Vec3;

/// Everything about one surface frame that the step needs: geometry, mass
/// and stiffness matrices, lumped mass and the element size `h`.
///
/// A still surface keeps one frame state for many steps, so the time of a
/// step is carried by [`StepContext`] rather than by the frame.
#[derive(Debug)]
pub struct FrameState {
    mesh: SurfaceMesh,
    geometry: ElementGeometry,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    lumped_mass: Vec<f64>,
    h: f64,
}

impl FrameState {
    pub fn new(assembler: &Assembler, mesh: SurfaceMesh) -> Result<Self, EsfemError> {
        let geometry = element_geometry(&mesh)?;
        let mass = assembler.mass(&geometry);
        let stiffness = assembler.stiffness(&geometry);
        let mut lumped_mass = vec![0.0; mesh.vertex_count()];
        for (i, row) in lumped_mass.iter_mut().enumerate() {
            *row = mass.row_entries(i).map(|(_, v)| v).sum();
        }
        let h = mesh.max_element_diameter();
        Ok(Self {
            mesh,
            geometry,
            mass,
            stiffness,
            lumped_mass,
            h,
        })
    }

    pub fn mesh(&self) -> &SurfaceMesh {
        &self.mesh
    }

    pub fn geometry(&self) -> &ElementGeometry {
        &self.geometry
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Row sums of the mass matrix, i.e. `∫ χ_j`.
    pub fn lumped_mass(&self) -> &[f64] {
        &self.lumped_mass
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Discrete mass `1ᵀ M u = ∫ u_h`.
    pub fn total_mass(&self, u: &[f64]) -> f64 {
        self.lumped_mass.iter().zip(u).map(|(m, x)| m * x).sum()
    }
}

/// Operators of one step from `prev` to `curr`.
///
/// The vertex velocity is the difference quotient of the two frames. Its P1
/// interpolant is sampled at the edge midpoints of every triangle of the
/// current frame; the material velocity is the normal part of that sample
/// with respect to the constant facet normal, so `w - v` is exactly
/// tangential at every quadrature point.
#[derive(Debug)]
pub struct StepContext {
    prev: Arc<FrameState>,
    curr: Arc<FrameState>,
    time: f64,
    tau: f64,
    velocity: VertexVelocityField,
    quadrature_velocity: Vec<[Vec3; 3]>,
    material_velocity: Vec<[Vec3; 3]>,
    advection: Option<CsrMatrix>,
    streamline: Option<CsrMatrix>,
    g_h: f64,
}

impl StepContext {
    pub fn new(
        assembler: &Assembler,
        prev: Arc<FrameState>,
        curr: Arc<FrameState>,
        time: f64,
        tau: f64,
    ) -> Result<Self, EsfemError> {
        let velocity = vertex_velocity(prev.mesh(), curr.mesh(), tau)?;
        let geom = curr.geometry();
        let w = velocity.values();
        let quadrature_velocity: Vec<[Vec3; 3]> = curr
            .mesh()
            .triangles()
            .iter()
            .map(|tri| at_midpoints(&tri.map(|i| w[i])))
            .collect();
        let material_velocity: Vec<[Vec3; 3]> = quadrature_velocity
            .iter()
            .zip(geom.normals())
            .map(|(wq, n)| wq.map(|x| n * x.dot(n)))
            .collect();
        let (advection, streamline) = if velocity.is_zero() {
            (None, None)
        } else {
            let tangential: Vec<[Vec3; 3]> = quadrature_velocity
                .iter()
                .zip(&material_velocity)
                .map(|(wq, vq)| [wq[0] - vq[0], wq[1] - vq[1], wq[2] - vq[2]])
                .collect();
            (
                Some(assembler.advection(geom, &tangential)),
                Some(assembler.streamline(geom, &quadrature_velocity)),
            )
        };
        let g_h = curr.h() * curr.h();
        Ok(Self {
            prev,
            curr,
            time,
            tau,
            velocity,
            quadrature_velocity,
            material_velocity,
            advection,
            streamline,
            g_h,
        })
    }

    pub fn prev(&self) -> &Arc<FrameState> {
        &self.prev
    }

    pub fn curr(&self) -> &Arc<FrameState> {
        &self.curr
    }

    /// Time at the end of the step.
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn vertex_velocity(&self) -> &VertexVelocityField {
        &self.velocity
    }

    /// Vertex velocity interpolant at the edge midpoints of each triangle.
    pub fn quadrature_velocity(&self) -> &[[Vec3; 3]] {
        &self.quadrature_velocity
    }

    /// Normal projection of [`Self::quadrature_velocity`].
    pub fn material_velocity(&self) -> &[[Vec3; 3]] {
        &self.material_velocity
    }

    /// `None` when the mesh does not move during the step.
    pub fn advection(&self) -> Option<&CsrMatrix> {
        self.advection.as_ref()
    }

    /// Streamline matrix without the `D g(h)` factor; `None` for a still mesh.
    pub fn streamline(&self) -> Option<&CsrMatrix> {
        self.streamline.as_ref()
    }

    /// `g(h) = h²` with `h` the longest edge of the current frame.
    pub fn g_h(&self) -> f64 {
        self.g_h
    }

    /// `τD S + τA_adv + τD g(h) A_sld`, the transport part of the system
    /// matrix for diffusivity `d`, added to `target`.
    pub(crate) fn add_transport(&self, target: &mut CsrMatrix, d: f64) -> Result<(), EsfemError> {
        let tau = self.tau;
        target.axpy(tau * d, self.curr.stiffness())?;
        if let Some(a) = &self.advection {
            target.axpy(tau, a)?;
        }
        if let Some(s) = &self.streamline {
            target.axpy(tau * d * self.g_h, s)?;
        }
        Ok(())
    }

    /// System matrix `M + τD S + τA_adv + τA_sld` of the current frame.
    pub fn system_matrix(&self, d: f64) -> Result<CsrMatrix, EsfemError> {
        let mut system = self.curr.mass().clone();
        self.add_transport(&mut system, d)?;
        Ok(system)
    }
}

/// One backward-Euler step: solves
/// `(M + τD S + τA_adv + τA_sld) u = M_prev u_prev`.
pub fn esfem_step(
    ctx: &StepContext,
    diffusivity: f64,
    u_prev: &NodalField,
    opts: &SolverOptions,
) -> Result<(NodalField, SolveStats), EsfemError> {
    if !(diffusivity >= 0.0) || !diffusivity.is_finite() {
        return Err(EsfemError::InvalidParameter(format!(
            "diffusivity must be non-negative, got {diffusivity}"
        )));
    }
    let n = ctx.curr.mesh().vertex_count();
    u_prev.check_len(n)?;
    let rhs = ctx.prev.mass().spmv(u_prev.values())?;
    let system = ctx.system_matrix(diffusivity)?;
    let (values, stats) = bicgstab(&system, &rhs, u_prev.values(), opts).map_err(|source| EsfemError::Solve {
        time: ctx.time,
        source,
    })?;
    Ok((NodalField::new(values, ctx.time), stats))
}

/// How steps relate to the frames of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstepPolicy {
    /// Meshes at step times are interpolated linearly between frames.
    #[default]
    Interpolate,
    /// Every frame inside the run must coincide with a step time.
    RequireAligned,
}

/// Walks a mesh sequence at a fixed step, producing one [`StepContext`] per
/// step. Frame states are reused while the surface does not move.
#[derive(Debug)]
pub struct Marcher<'a> {
    seq: &'a MeshSequence,
    assembler: Arc<Assembler>,
    t0: f64,
    dt: f64,
    t_end: f64,
    steps: usize,
    taken: usize,
    current: Arc<FrameState>,
}

/// Fraction of a step within which `t_end` counts as reached.
const STEP_SLACK: f64 = 1e-9;

impl<'a> Marcher<'a> {
    /// Steps from the sequence start to `t_end`.
    pub fn new(seq: &'a MeshSequence, dt: f64, t_end: f64, policy: SubstepPolicy) -> Result<Self, EsfemError> {
        Self::with_assembler(seq, dt, t_end, policy, Arc::new(Assembler::for_mesh(seq.first())))
    }

    pub fn with_assembler(
        seq: &'a MeshSequence,
        dt: f64,
        t_end: f64,
        policy: SubstepPolicy,
        assembler: Arc<Assembler>,
    ) -> Result<Self, EsfemError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(EsfemError::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let t0 = seq.start_time();
        if !(t_end >= t0) || !t_end.is_finite() {
            return Err(EsfemError::InvalidParameter(format!(
                "end time {t_end} precedes the sequence start {t0}"
            )));
        }
        if t_end > seq.end_time() + STEP_SLACK * dt {
            return Err(EsfemError::BeyondSequence {
                t_end,
                last: seq.end_time(),
            });
        }
        let steps = ((t_end - t0) / dt + STEP_SLACK).floor() as usize;
        if policy == SubstepPolicy::RequireAligned {
            for frame in seq.frames() {
                let k = (frame.frame_time() - t0) / dt;
                if frame.frame_time() <= t_end && (k - k.round()).abs() > STEP_SLACK {
                    return Err(EsfemError::Misaligned {
                        frame_time: frame.frame_time(),
                        dt,
                    });
                }
            }
        }
        let current = Arc::new(FrameState::new(&assembler, interpolate_frames(seq, t0)?)?);
        Ok(Self {
            seq,
            assembler,
            t0,
            dt,
            t_end,
            steps,
            taken: 0,
            current,
        })
    }

    pub fn assembler(&self) -> &Arc<Assembler> {
        &self.assembler
    }

    pub fn current(&self) -> &Arc<FrameState> {
        &self.current
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn taken(&self) -> usize {
        self.taken
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.time_of(self.taken)
    }

    fn time_of(&self, k: usize) -> f64 {
        (self.t0 + k as f64 * self.dt).min(self.t_end)
    }

    /// Context of the next step, or `None` once `t_end` is reached.
    pub fn advance(&mut self) -> Result<Option<StepContext>, EsfemError> {
        if self.taken == self.steps {
            return Ok(None);
        }
        let t_prev = self.time_of(self.taken);
        let t_next = self.time_of(self.taken + 1);
        let mesh = interpolate_frames(self.seq, t_next)?;
        let next = if mesh.vertices() == self.current.mesh().vertices() {
            Arc::clone(&self.current)
        } else {
            Arc::new(FrameState::new(&self.assembler, mesh)?)
        };
        let ctx = StepContext::new(
            &self.assembler,
            Arc::clone(&self.current),
            Arc::clone(&next),
            t_next,
            t_next - t_prev,
        )?;
        self.current = next;
        self.taken += 1;
        Ok(Some(ctx))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionOptions {
    pub solver: SolverOptions,
    pub policy: SubstepPolicy,
    /// Keep every `record_every`-th field in the trajectory (the final field
    /// is always kept).
    pub record_every: usize,
}

impl Default for DiffusionOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            policy: SubstepPolicy::Interpolate,
            record_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub time: f64,
    /// `1ᵀ M u` after the step.
    pub mass: f64,
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone)]
pub struct DiffusionRun {
    /// Recorded fields, starting with the initial one.
    pub trajectory: Vec<NodalField>,
    /// One entry per step, plus the initial state at index 0.
    pub records: Vec<StepRecord>,
}

impl DiffusionRun {
    pub fn final_field(&self) -> &NodalField {
        self.trajectory.last().expect("trajectory holds at least the initial field")
    }

    /// Largest `|m_k - m_0| / |m_0|` over all steps.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let m0 = self.records[0].mass;
        self.records
            .iter()
            .map(|r| (r.mass - m0).abs() / m0.abs())
            .fold(0.0, f64::max)
    }
}

/// Advances `u0` (living on the sequence's first frame) from the sequence
/// start to `t_end` with step `dt`.
pub fn run_diffusion(
    seq: &MeshSequence,
    u0: &NodalField,
    diffusivity: f64,
    dt: f64,
    t_end: f64,
    opts: &DiffusionOptions,
) -> Result<DiffusionRun, EsfemError> {
    let mut marcher = Marcher::new(seq, dt, t_end, opts.policy)?;
    u0.check_len(seq.first().vertex_count())?;
    let record_every = opts.record_every.max(1);
    let mut u = NodalField::new(u0.values().to_vec(), marcher.time());
    let mut trajectory = vec![u.clone()];
    let mut records = vec![StepRecord {
        time: marcher.time(),
        mass: marcher.current().total_mass(u.values()),
        iterations: 0,
        relative_residual: 0.0,
    }];
    while let Some(ctx) = marcher.advance()? {
        let (next, stats) = esfem_step(&ctx, diffusivity, &u, &opts.solver)?;
        u = next;
        records.push(StepRecord {
            time: u.time(),
            mass: ctx.curr().total_mass(u.values()),
            iterations: stats.iterations,
            relative_residual: stats.relative_residual,
        });
        if marcher.taken() % record_every == 0 || marcher.taken() == marcher.steps() {
            trajectory.push(u.clone());
        }
    }
    Ok(DiffusionRun { trajectory, records })
}
