//! Activator / depleted-substrate pattern formation on a surface:
//!
//! ```text
//! ∂•u + u ∇·v − D_u Δu = γ (a − u + u² w)
//! ∂•w + w ∇·v − D_w Δw = γ (b − u² w)
//! ```
//!
//! Each step is backward Euler with the kinetics replaced by their
//! first-order Taylor expansion about the previous state. The nodal
//! interpolant of the linearised kinetics is integrated against the test
//! functions with the consistent mass matrix, which gives a single
//! `2J x 2J` linear system per step, solved with BiCGStab.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{EsfemError, Marcher, NodalField, StepContext, SubstepPolicy};
use crate::geometry::{GeometryError, MeshSequence, SurfaceMesh};
use crate::linalg::{bicgstab, CsrMatrix, LinalgError, SolveStats, SolverOptions, SparsityPattern};
use crate::ErrorCategory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RdsError {
    #[error(transparent)]
    Esfem(#[from] EsfemError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid reaction-diffusion parameters: {0}")]
    InvalidParameters(String),
    #[error("linear solve for step {step} (t = {time}) failed: {source}")]
    Solve {
        step: usize,
        time: f64,
        source: LinalgError,
    },
    #[error("non-finite concentration after step {step} (t = {time})")]
    NonFinite { step: usize, time: f64 },
}

impl RdsError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            RdsError::Esfem(e) => e.category(),
            RdsError::Solve { .. } | RdsError::NonFinite { .. } => ErrorCategory::Numerical,
            _ => ErrorCategory::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchnakenbergParams {
    pub d_u: f64,
    pub d_w: f64,
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for SchnakenbergParams {
    fn default() -> Self {
        Self {
            d_u: 1.0,
            d_w: 10.0,
            gamma: 200.0,
            a: 0.1,
            b: 0.9,
        }
    }
}

impl SchnakenbergParams {
    pub fn validate(&self) -> Result<(), RdsError> {
        for (name, v) in [("d_u", self.d_u), ("d_w", self.d_w), ("gamma", self.gamma), ("a", self.a), ("b", self.b)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(RdsError::InvalidParameters(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.a + self.b > 0.0) {
            return Err(RdsError::InvalidParameters("a + b must be positive".into()));
        }
        if self.d_w <= self.d_u {
            log::warn!(
                "d_w = {} does not exceed d_u = {}; no diffusion-driven instability expected",
                self.d_w,
                self.d_u
            );
        }
        Ok(())
    }

    /// `f(u, w) = γ (a − u + u² w)`.
    pub fn f(&self, u: f64, w: f64) -> f64 {
        self.gamma * (self.a - u + u * u * w)
    }

    /// `g(u, w) = γ (b − u² w)`.
    pub fn g(&self, u: f64, w: f64) -> f64 {
        self.gamma * (self.b - u * u * w)
    }

    /// `[[f_u, f_w], [g_u, g_w]]`.
    pub fn jacobian(&self, u: f64, w: f64) -> [[f64; 2]; 2] {
        let gm = self.gamma;
        [[gm * (-1.0 + 2.0 * u * w), gm * u * u], [-2.0 * gm * u * w, -gm * u * u]]
    }
}

/// Spatially uniform fixed point `(a + b, b / (a + b)²)`.
pub fn steady_state(params: &SchnakenbergParams) -> Result<(f64, f64), RdsError> {
    let s = params.a + params.b;
    if s == 0.0 || !s.is_finite() {
        return Err(RdsError::InvalidParameters("a + b must be non-zero".into()));
    }
    Ok((s, params.b / (s * s)))
}

/// `u_j = u*(1 + amplitude ξ_j)`, `w_j = w*(1 + amplitude η_j)` with all `ξ`
/// drawn first, then all `η`, uniform on `[-1, 1]`.
pub fn perturbed_initial(
    mesh: &SurfaceMesh,
    params: &SchnakenbergParams,
    amplitude: f64,
    seed: u64,
) -> Result<(NodalField, NodalField), RdsError> {
    if !(0.0..1.0).contains(&amplitude) {
        return Err(RdsError::InvalidParameters(format!(
            "perturbation amplitude must lie in [0, 1), got {amplitude}"
        )));
    }
    let (us, ws) = steady_state(params)?;
    let n = mesh.vertex_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |centre: f64| -> Vec<f64> {
        (0..n)
            .map(|_| centre * (1.0 + amplitude * rng.random_range(-1.0..=1.0)))
            .collect()
    };
    let u = draw(us);
    let w = draw(ws);
    let t = mesh.frame_time();
    Ok((NodalField::new(u, t), NodalField::new(w, t)))
}

/// Pattern of the `2J x 2J` block matrix built from the `J x J` P1 pattern.
/// Row `i < J` holds the `uu` entries then the `uw` entries; row `J + i`
/// holds `wu` then `ww`.
#[derive(Debug)]
pub struct BlockLayout {
    base: Arc<SparsityPattern>,
    block: Arc<SparsityPattern>,
}

impl BlockLayout {
    pub fn new(base: Arc<SparsityPattern>) -> Self {
        let n = base.nrows();
        let mut offsets = Vec::with_capacity(2 * n + 1);
        let mut cols = Vec::with_capacity(4 * base.nnz());
        offsets.push(0);
        for _ in 0..2 {
            for i in 0..n {
                cols.extend_from_slice(base.row(i));
                cols.extend(base.row(i).iter().map(|c| c + n));
                offsets.push(cols.len());
            }
        }
        let block = SparsityPattern::try_new(2 * n, 2 * n, offsets, cols)
            .expect("block pattern inherits sorted unique columns");
        Self {
            base,
            block: Arc::new(block),
        }
    }

    /// Assembles `[[uu, uw], [wu, ww]]`; all four blocks share the base
    /// pattern.
    pub fn assemble(&self, blocks: [[&[f64]; 2]; 2]) -> CsrMatrix {
        let n = self.base.nrows();
        let offsets = self.base.row_offsets();
        let mut values = vec![0.0; self.block.nnz()];
        let mut pos = 0;
        for row_blocks in blocks {
            for i in 0..n {
                let (lo, hi) = (offsets[i], offsets[i + 1]);
                for block in row_blocks {
                    values[pos..pos + hi - lo].copy_from_slice(&block[lo..hi]);
                    pos += hi - lo;
                }
            }
        }
        CsrMatrix::with_values(Arc::clone(&self.block), values).expect("block values are finite")
    }
}

/// One linearised backward-Euler step of the coupled system.
///
/// Both fields use the operators of `ctx` with their own diffusivity in the
/// stiffness and streamline terms.
pub fn rds_step(
    ctx: &StepContext,
    layout: &BlockLayout,
    params: &SchnakenbergParams,
    u_prev: &NodalField,
    w_prev: &NodalField,
    solver: &SolverOptions,
) -> Result<(NodalField, NodalField, SolveStats), RdsError> {
    let n = ctx.curr().mesh().vertex_count();
    for field in [u_prev, w_prev] {
        if field.len() != n {
            return Err(EsfemError::FieldLength {
                expected: n,
                found: field.len(),
            }
            .into());
        }
    }
    let tau = ctx.tau();
    let mass = ctx.curr().mass();
    let (up, wp) = (u_prev.values(), w_prev.values());

    let mut fu = vec![0.0; n];
    let mut fw = vec![0.0; n];
    let mut gu = vec![0.0; n];
    let mut gw = vec![0.0; n];
    // Constant parts of the linearised kinetics: f(prev) − f_u u_prev − f_w w_prev.
    let mut f0 = vec![0.0; n];
    let mut g0 = vec![0.0; n];
    for j in 0..n {
        let [[a, b], [c, d]] = params.jacobian(up[j], wp[j]);
        fu[j] = a;
        fw[j] = b;
        gu[j] = c;
        gw[j] = d;
        f0[j] = params.f(up[j], wp[j]) - a * up[j] - b * wp[j];
        g0[j] = params.g(up[j], wp[j]) - c * up[j] - d * wp[j];
    }

    // τ M diag(k) has the entries τ M_ij k_j.
    let weighted = |k: &[f64]| -> Vec<f64> {
        let pattern = mass.pattern();
        let cols = pattern.col_indices();
        mass.values().iter().zip(cols).map(|(m, &c)| tau * m * k[c]).collect()
    };

    let mut uu = mass.clone();
    ctx.add_transport(&mut uu, params.d_u)?;
    let mut ww = mass.clone();
    ctx.add_transport(&mut ww, params.d_w)?;
    for (v, r) in uu.values_mut().iter_mut().zip(weighted(&fu)) {
        *v -= r;
    }
    for (v, r) in ww.values_mut().iter_mut().zip(weighted(&gw)) {
        *v -= r;
    }
    let uw: Vec<f64> = weighted(&fw).into_iter().map(|v| -v).collect();
    let wu: Vec<f64> = weighted(&gu).into_iter().map(|v| -v).collect();
    let system = layout.assemble([[uu.values(), &uw], [&wu, ww.values()]]);

    let prev_mass = ctx.prev().mass();
    let rhs_u = prev_mass.spmv(up).map_err(EsfemError::from)?;
    let rhs_w = prev_mass.spmv(wp).map_err(EsfemError::from)?;
    let src_u = mass.spmv(&f0).map_err(EsfemError::from)?;
    let src_w = mass.spmv(&g0).map_err(EsfemError::from)?;
    let mut rhs = Vec::with_capacity(2 * n);
    rhs.extend(rhs_u.iter().zip(&src_u).map(|(r, s)| r + tau * s));
    rhs.extend(rhs_w.iter().zip(&src_w).map(|(r, s)| r + tau * s));
    let mut x0 = Vec::with_capacity(2 * n);
    x0.extend_from_slice(up);
    x0.extend_from_slice(wp);

    let (x, stats) = bicgstab(&system, &rhs, &x0, solver).map_err(|source| RdsError::Solve {
        step: 0,
        time: ctx.time(),
        source,
    })?;
    let (u, w) = x.split_at(n);
    Ok((
        NodalField::new(u.to_vec(), ctx.time()),
        NodalField::new(w.to_vec(), ctx.time()),
        stats,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdsConfig {
    pub params: SchnakenbergParams,
    pub dt: f64,
    /// Model time between consecutive frames of an evolving sequence.
    pub swap_interval: f64,
    pub t_end: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Model time between snapshots.
    pub snapshot_every: f64,
}

impl Default for RdsConfig {
    fn default() -> Self {
        Self {
            params: SchnakenbergParams::default(),
            dt: 1e-4,
            swap_interval: 1.0,
            t_end: 70.0,
            amplitude: 0.1,
            seed: 42,
            snapshot_every: 10.0,
        }
    }
}

impl RdsConfig {
    pub fn validate(&self) -> Result<(), RdsError> {
        self.params.validate()?;
        for (name, v) in [("dt", self.dt), ("swap_interval", self.swap_interval), ("snapshot_every", self.snapshot_every)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(RdsError::InvalidParameters(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(RdsError::InvalidParameters(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if self.swap_interval < self.dt {
            return Err(RdsError::InvalidParameters(format!(
                "swap interval {} is shorter than the time step {}",
                self.swap_interval, self.dt
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub mean: f64,
    /// Population standard deviation of the nodal values.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// `∫ field`.
    pub mass: f64,
}

impl FieldStats {
    pub fn of(values: &[f64], lumped_mass: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mass: values.iter().zip(lumped_mass).map(|(v, m)| v * m).sum(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RdsSnapshot {
    pub step: usize,
    pub time: f64,
    pub mesh: SurfaceMesh,
    pub u: NodalField,
    pub w: NodalField,
    pub u_stats: FieldStats,
    pub w_stats: FieldStats,
}

#[derive(Debug, Clone)]
pub struct RdsRun {
    pub snapshots: Vec<RdsSnapshot>,
    pub steps: usize,
    pub max_iterations: usize,
    /// Smallest value of either field over every step.
    pub min_value: f64,
}

/// Runs the pattern experiment on `seq`. A one-frame sequence is a still
/// surface; otherwise frame `k` is placed at model time `k * swap_interval`
/// and positions are interpolated linearly in between.
pub fn run_rds(seq: &MeshSequence, cfg: &RdsConfig, solver: &SolverOptions) -> Result<RdsRun, RdsError> {
    cfg.validate()?;
    let seq = if seq.is_static() {
        seq.starting_at(0)?
    } else {
        seq.with_uniform_times(cfg.swap_interval)?
    };
    let mut marcher = Marcher::new(&seq, cfg.dt, cfg.t_end, SubstepPolicy::Interpolate)?;
    let layout = BlockLayout::new(Arc::clone(marcher.assembler().pattern()));
    let (mut u, mut w) = perturbed_initial(seq.first(), &cfg.params, cfg.amplitude, cfg.seed)?;

    let steps = marcher.steps();
    let mut snapshot_steps: Vec<usize> = (0..)
        .map(|j| (j as f64 * cfg.snapshot_every / cfg.dt).round() as usize)
        .take_while(|&k| k <= steps)
        .collect();
    if snapshot_steps.last() != Some(&steps) {
        snapshot_steps.push(steps);
    }
    snapshot_steps.dedup();

    let snapshot = |step: usize, time: f64, mesh: &SurfaceMesh, lumped: &[f64], u: &NodalField, w: &NodalField| {
        let mut mesh = mesh.clone();
        mesh.set_frame_time(time);
        RdsSnapshot {
            step,
            time,
            mesh,
            u: u.clone(),
            w: w.clone(),
            u_stats: FieldStats::of(u.values(), lumped),
            w_stats: FieldStats::of(w.values(), lumped),
        }
    };

    let mut snapshots = Vec::with_capacity(snapshot_steps.len());
    let mut next_snapshot = snapshot_steps.iter().peekable();
    if next_snapshot.peek() == Some(&&0) {
        let frame = marcher.current();
        snapshots.push(snapshot(0, marcher.time(), frame.mesh(), frame.lumped_mass(), &u, &w));
        next_snapshot.next();
    }
    let mut max_iterations = 0;
    let mut min_value = u.min().min(w.min());
    while let Some(ctx) = marcher.advance()? {
        let step = marcher.taken();
        let (un, wn, stats) = rds_step(&ctx, &layout, &cfg.params, &u, &w, solver).map_err(|e| match e {
            RdsError::Solve { time, source, .. } => RdsError::Solve { step, time, source },
            other => other,
        })?;
        if !un.is_finite() || !wn.is_finite() {
            return Err(RdsError::NonFinite { step, time: ctx.time() });
        }
        u = un;
        w = wn;
        max_iterations = max_iterations.max(stats.iterations);
        min_value = min_value.min(u.min()).min(w.min());
        if next_snapshot.peek() == Some(&&step) {
            let frame = ctx.curr();
            snapshots.push(snapshot(step, ctx.time(), frame.mesh(), frame.lumped_mass(), &u, &w));
            next_snapshot.next();
            log::info!(
                "t = {:.4}: u mean {:.6} std {:.6}",
                ctx.time(),
                snapshots.last().map_or(0.0, |s| s.u_stats.mean),
                snapshots.last().map_or(0.0, |s| s.u_stats.std)
            );
        }
    }
    Ok(RdsRun {
        snapshots,
        steps,
        max_iterations,
        min_value,
    })
}
