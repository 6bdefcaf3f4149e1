use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::FitError;

/// A scalar model `f(params, t)` with analytic partial derivatives.
pub trait CurveModel {
    fn parameter_count(&self) -> usize;

    fn value(&self, params: &[f64], t: f64) -> f64;

    /// Writes `∂f/∂params` at `t` into `grad`.
    fn gradient(&self, params: &[f64], t: f64, grad: &mut [f64]);

    /// Parameters outside the model's domain are never accepted as a step.
    fn is_admissible(&self, _params: &[f64]) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmOptions {
    pub initial_damping: f64,
    /// Damping is multiplied by this on a rejected step and divided on an
    /// accepted one.
    pub damping_factor: f64,
    /// Converged once `‖Δp‖ <= parameter_tolerance · ‖p‖`.
    pub parameter_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_factor: 10.0,
            parameter_tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

/// Damping beyond which no step can lower the residual any more.
const DAMPING_CEILING: f64 = 1e20;

/// Below this reciprocal condition number of the correlation matrix the
/// parameters are reported as not identifiable.
const DEGENERACY_RCOND: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// One standard deviation per parameter from `s² (JᵀJ)⁻¹` with
    /// `s² = SSR / (m - n)`; infinite when not identifiable.
    pub std_devs: Vec<f64>,
    /// Residual sum of squares.
    pub ssr: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The normal matrix at the solution is (numerically) singular, so at
    /// least one parameter is not determined by the data.
    pub degenerate: bool,
    /// SSR at the start and after every accepted step.
    #[serde(skip)]
    pub ssr_history: Vec<f64>,
}

struct Normal {
    jtj: DMatrix<f64>,
    jtr: DVector<f64>,
}

fn residual_ssr(model: &dyn CurveModel, p: &[f64], times: &[f64], obs: &[f64]) -> f64 {
    times
        .iter()
        .zip(obs)
        .map(|(&t, &y)| {
            let r = y - model.value(p, t);
            r * r
        })
        .sum()
}

fn normal_equations(model: &dyn CurveModel, p: &[f64], times: &[f64], obs: &[f64]) -> Normal {
    let n = p.len();
    let mut jtj = DMatrix::zeros(n, n);
    let mut jtr = DVector::zeros(n);
    let mut g = vec![0.0; n];
    for (&t, &y) in times.iter().zip(obs) {
        model.gradient(p, t, &mut g);
        let r = y - model.value(p, t);
        for i in 0..n {
            jtr[i] += g[i] * r;
            for j in 0..n {
                jtj[(i, j)] += g[i] * g[j];
            }
        }
    }
    Normal { jtj, jtr }
}

fn is_degenerate(jtj: &DMatrix<f64>) -> bool {
    let n = jtj.nrows();
    let diag: Vec<f64> = (0..n).map(|i| jtj[(i, i)]).collect();
    let max_diag = diag.iter().cloned().fold(0.0, f64::max);
    if !(max_diag > 0.0) || diag.iter().any(|&d| d <= 1e-14 * max_diag) {
        return true;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (diag[i] * diag[j]).sqrt());
    let eig = SymmetricEigen::new(scaled).eigenvalues;
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
    !(lo > DEGENERACY_RCOND * hi)
}

/// Unweighted nonlinear least squares by the Levenberg-Marquardt method with
/// Marquardt's diagonal scaling of the damping term.
pub fn levenberg_marquardt(
    model: &dyn CurveModel,
    times: &[f64],
    observations: &[f64],
    initial: &[f64],
    opts: &LmOptions,
) -> Result<FitResult, FitError> {
    let n = model.parameter_count();
    let m = times.len();
    if observations.len() != m {
        return Err(FitError::LengthMismatch {
            times: m,
            observations: observations.len(),
        });
    }
    if initial.len() != n {
        return Err(FitError::ParameterCount {
            expected: n,
            found: initial.len(),
        });
    }
    if m < n.max(2) {
        return Err(FitError::TooFewObservations { found: m, needed: n.max(2) });
    }
    if times.iter().chain(observations).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    if !model.is_admissible(initial) {
        return Err(FitError::InadmissibleStart(initial.to_vec()));
    }

    let mut p = initial.to_vec();
    let mut ssr = residual_ssr(model, &p, times, observations);
    if !ssr.is_finite() {
        return Err(FitError::NonFinite);
    }
    let mut ssr_history = vec![ssr];
    let mut damping = opts.initial_damping;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        if ssr == 0.0 {
            converged = true;
            break;
        }
        let Normal { jtj, jtr } = normal_equations(model, &p, times, observations);
        if jtj.iter().chain(jtr.iter()).any(|v| !v.is_finite()) {
            return Err(FitError::SingularNormalEquations);
        }
        let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let floor = if max_diag > 0.0 { 1e-12 * max_diag } else { 1.0 };

        loop {
            let mut lhs = jtj.clone();
            for i in 0..n {
                lhs[(i, i)] += damping * jtj[(i, i)].max(floor);
            }
            let step = match lhs.cholesky() {
                Some(ch) => ch.solve(&jtr),
                None => {
                    damping *= opts.damping_factor;
                    if damping > DAMPING_CEILING {
                        return Err(FitError::SingularNormalEquations);
                    }
                    continue;
                }
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
            let trial_ssr = if model.is_admissible(&trial) {
                residual_ssr(model, &trial, times, observations)
            } else {
                f64::INFINITY
            };
            if trial_ssr.is_finite() && trial_ssr <= ssr {
                let step_norm = step.norm();
                let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                p = trial;
                ssr = trial_ssr;
                ssr_history.push(ssr);
                damping = (damping / opts.damping_factor).max(f64::MIN_POSITIVE);
                if step_norm <= opts.parameter_tolerance * p_norm.max(f64::MIN_POSITIVE) {
                    converged = true;
                }
                break;
            }
            damping *= opts.damping_factor;
            if damping > DAMPING_CEILING {
                // No damped step lowers the residual: stationary point.
                converged = true;
                break;
            }
        }
    }

    if !converged {
        return Err(FitError::NotConverged { iterations, ssr });
    }

    let Normal { jtj, .. } = normal_equations(model, &p, times, observations);
    let degenerate = is_degenerate(&jtj);
    let dof = m.saturating_sub(n);
    let std_devs = match (degenerate, jtj.clone().try_inverse()) {
        (false, Some(inv)) if dof > 0 => {
            let s2 = ssr / dof as f64;
            (0..n).map(|i| (s2 * inv[(i, i)]).max(0.0).sqrt()).collect()
        }
        _ => vec![f64::INFINITY; n],
    };
    Ok(FitResult {
        params: p,
        std_devs,
        ssr,
        iterations,
        converged,
        degenerate,
        ssr_history,
    })
}
