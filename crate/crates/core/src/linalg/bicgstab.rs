//! Stabilised bi-conjugate gradient solver (van der Vorst, 1992) with
//! optional Jacobi right-preconditioning.
//!
//! Convergence is always confirmed on the true residual `b - A x`; when the
//! recursively updated residual claims convergence but the true one does not,
//! the iteration restarts from the true residual.

use serde::{Deserialize, Serialize};

use super::{CsrMatrix, LinalgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop once `‖b - A x‖ <= tolerance · ‖b‖`.
    pub tolerance: f64,
    /// Defaults to ten times the system size.
    pub max_iterations: Option<usize>,
    pub preconditioner: Preconditioner,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: None,
            preconditioner: Preconditioner::Jacobi,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), LinalgError> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(LinalgError::InvalidOptions(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(LinalgError::InvalidOptions("max_iterations must be at least 1".into()));
        }
        Ok(())
    }

    pub fn iteration_limit(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖b - A x‖ / ‖b‖` of the returned solution (absolute when `b = 0`).
    pub relative_residual: f64,
    pub restarts: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> Result<f64, LinalgError> {
    a.spmv_into(x, r)?;
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    Ok(norm(r))
}

/// Solves `A x = b` starting from `x0`.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: &[f64],
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveStats), LinalgError> {
    opts.validate()?;
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    for len in [b.len(), x0.len()] {
        if len != n {
            return Err(LinalgError::DimensionMismatch { expected: n, found: len });
        }
    }
    if let Some(k) = b.iter().chain(x0).position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite(format!("input vector entry {}", k % n.max(1))));
    }

    let inv_diag: Option<Vec<f64>> = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => Some(
            a.diagonal()
                .into_iter()
                .map(|d| if d != 0.0 && d.is_finite() { 1.0 / d } else { 1.0 })
                .collect(),
        ),
    };
    let precondition = |src: &[f64], dst: &mut [f64]| match &inv_diag {
        Some(m) => dst.iter_mut().zip(src.iter().zip(m)).for_each(|(d, (s, mi))| *d = s * mi),
        None => dst.copy_from_slice(src),
    };

    let b_norm = norm(b);
    let mut x = x0.to_vec();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: 0.0,
                restarts: 0,
            },
        ));
    }
    let target = opts.tolerance * b_norm;
    let max_iter = opts.iteration_limit(n);

    let mut r = vec![0.0; n];
    let mut r_norm = true_residual(a, b, &x, &mut r)?;
    if r_norm <= target {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                relative_residual: r_norm / b_norm,
                restarts: 0,
            },
        ));
    }

    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut fresh = true;
    let mut restarts = 0;
    // Consecutive restarts without an intervening successful iteration.
    let mut stalled_restarts = 0;

    let restart = |r: &[f64], r_hat: &mut Vec<f64>, fresh: &mut bool| {
        r_hat.copy_from_slice(r);
        *fresh = true;
    };

    for iteration in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() <= f64::EPSILON * f64::EPSILON * norm(&r_hat) * r_norm {
            if stalled_restarts > 0 {
                return Err(LinalgError::Breakdown {
                    iteration,
                    quantity: "rho",
                });
            }
            restart(&r, &mut r_hat, &mut fresh);
            restarts += 1;
            stalled_restarts += 1;
            continue;
        }
        if fresh {
            p.copy_from_slice(&r);
            fresh = false;
        } else {
            let beta = (rho_new / rho) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        rho = rho_new;

        precondition(&p, &mut p_hat);
        a.spmv_into(&p_hat, &mut v)?;
        let r_hat_v = dot(&r_hat, &v);
        if r_hat_v.abs() <= f64::EPSILON * f64::EPSILON * norm(&r_hat) * norm(&v) || !r_hat_v.is_finite() {
            if stalled_restarts > 0 {
                return Err(LinalgError::Breakdown {
                    iteration,
                    quantity: "r_hat . v",
                });
            }
            restart(&r, &mut r_hat, &mut fresh);
            restarts += 1;
            stalled_restarts += 1;
            continue;
        }
        alpha = rho / r_hat_v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }

        if norm(&s) <= target {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            r_norm = true_residual(a, b, &x, &mut r)?;
            if r_norm <= target {
                return Ok((
                    x,
                    SolveStats {
                        iterations: iteration,
                        relative_residual: r_norm / b_norm,
                        restarts,
                    },
                ));
            }
            restart(&r, &mut r_hat, &mut fresh);
            restarts += 1;
            continue;
        }

        precondition(&s, &mut s_hat);
        a.spmv_into(&s_hat, &mut t)?;
        let tt = dot(&t, &t);
        if tt == 0.0 || !tt.is_finite() {
            return Err(LinalgError::Breakdown {
                iteration,
                quantity: "t . t",
            });
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        r_norm = norm(&r);
        if !r_norm.is_finite() {
            return Err(LinalgError::NonFinite(format!("residual at iteration {iteration}")));
        }
        stalled_restarts = 0;

        if r_norm <= target {
            r_norm = true_residual(a, b, &x, &mut r)?;
            if r_norm <= target {
                return Ok((
                    x,
                    SolveStats {
                        iterations: iteration,
                        relative_residual: r_norm / b_norm,
                        restarts,
                    },
                ));
            }
            restart(&r, &mut r_hat, &mut fresh);
            restarts += 1;
            continue;
        }
        if omega == 0.0 {
            return Err(LinalgError::Breakdown {
                iteration,
                quantity: "omega",
            });
        }
    }

    let r_norm = true_residual(a, b, &x, &mut r)?;
    Err(LinalgError::NotConverged {
        iterations: max_iter,
        relative_residual: r_norm / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense Gaussian elimination with partial pivoting.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, piv);
            b.swap(k, piv);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
            x[i] = (b[i] - s) / a[i][i];
        }
        x
    }

    /// Sparse, non-symmetric, diagonally dominant system.
    pub(crate) fn random_system(n: usize, seed: u64) -> (CsrMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut off = 0.0;
            for j in 0..n {
                if i != j && rng.random_bool(0.15) {
                    dense[i][j] = rng.random_range(-1.0..1.0);
                    off += f64::abs(dense[i][j]);
                }
            }
            dense[i][i] = off + rng.random_range(0.5..2.0);
        }
        let b = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (CsrMatrix::from_dense(&dense), b)
    }

    #[test]
    fn identity_converges_immediately() {
        let b = vec![1.0, -2.0, 0.5, 4.0];
        let (x, stats) = bicgstab(&CsrMatrix::identity(4), &b, &[0.0; 4], &SolverOptions::default()).unwrap();
        assert!(stats.iterations <= 1);
        for (xi, bi) in x.iter().zip(&b) {
            assert!((xi - bi).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_system() {
        let a = CsrMatrix::from_triplets(5, 5, &(0..5).map(|i| (i, i, (i + 1) as f64)).collect::<Vec<_>>());
        for precond in [Preconditioner::None, Preconditioner::Jacobi] {
            let opts = SolverOptions {
                preconditioner: precond,
                ..Default::default()
            };
            let (x, _) = bicgstab(&a, &[1.0; 5], &[0.0; 5], &opts).unwrap();
            for (i, xi) in x.iter().enumerate() {
                assert!((xi - 1.0 / (i + 1) as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn random_system_matches_dense_solve() {
        let (a, b) = random_system(50, 7);
        let expect = dense_solve(a.to_dense(), b.clone());
        let (x, stats) = bicgstab(&a, &b, &vec![0.0; 50], &SolverOptions::default()).unwrap();
        assert!(stats.relative_residual <= 1e-10);
        for (xi, ei) in x.iter().zip(&expect) {
            assert!((xi - ei).abs() < 1e-8);
        }
    }

    #[test]
    fn reported_success_satisfies_the_residual_contract() {
        for seed in 0..20 {
            let (a, b) = random_system(30, seed);
            let opts = SolverOptions {
                tolerance: 1e-9,
                ..Default::default()
            };
            let (x, _) = bicgstab(&a, &b, &vec![0.0; 30], &opts).unwrap();
            let ax = a.spmv(&x).unwrap();
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            assert!(norm(&r) <= 1e-9 * norm(&b));
        }
    }

    #[test]
    fn symmetric_permutation_permutes_the_solution() {
        let n = 25;
        let (a, b) = random_system(n, 11);
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        let dense = a.to_dense();
        let mut pa = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                pa[i][j] = dense[perm[i]][perm[j]];
            }
        }
        let pb: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        let opts = SolverOptions::default();
        let (x, _) = bicgstab(&a, &b, &vec![0.0; n], &opts).unwrap();
        let (px, _) = bicgstab(&CsrMatrix::from_dense(&pa), &pb, &vec![0.0; n], &opts).unwrap();
        for i in 0..n {
            assert!((px[i] - x[perm[i]]).abs() < 1e-8);
        }
    }

    #[test]
    fn jacobi_changes_iterations_not_the_solution() {
        let n = 40;
        let (mut a, b) = random_system(n, 3);
        // Badly scaled rows make the preconditioner matter.
        let offsets = a.pattern().row_offsets().to_vec();
        for i in 0..n {
            let s = 10f64.powi((i % 3) as i32);
            for k in offsets[i]..offsets[i + 1] {
                a.values_mut()[k] *= s;
            }
        }
        let plain = SolverOptions {
            preconditioner: Preconditioner::None,
            tolerance: 1e-11,
            max_iterations: Some(2000),
        };
        let jacobi = SolverOptions {
            preconditioner: Preconditioner::Jacobi,
            tolerance: 1e-11,
            max_iterations: Some(2000),
        };
        let (x1, s1) = bicgstab(&a, &b, &vec![0.0; n], &plain).unwrap();
        let (x2, s2) = bicgstab(&a, &b, &vec![0.0; n], &jacobi).unwrap();
        for (u, v) in x1.iter().zip(&x2) {
            assert!((u - v).abs() < 1e-8);
        }
        assert!(s2.iterations <= s1.iterations, "{s2:?} vs {s1:?}");
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let (a, _) = random_system(10, 1);
        let (x, stats) = bicgstab(&a, &[0.0; 10], &[1.0; 10], &SolverOptions::default()).unwrap();
        assert_eq!(x, vec![0.0; 10]);
        assert_eq!(stats.iterations, 0);
    }

    #[test]
    fn breakdown_is_reported() {
        // r_hat . A r = 0 for the swap matrix and b = e_0, and stays zero after a restart.
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let opts = SolverOptions {
            preconditioner: Preconditioner::None,
            ..Default::default()
        };
        let err = bicgstab(&a, &[1.0, 0.0], &[0.0, 0.0], &opts).unwrap_err();
        assert!(matches!(err, LinalgError::Breakdown { .. }), "{err:?}");
    }

    #[test]
    fn iteration_limit_is_reported() {
        let (a, b) = random_system(60, 5);
        let opts = SolverOptions {
            max_iterations: Some(1),
            tolerance: 1e-14,
            ..Default::default()
        };
        let err = bicgstab(&a, &b, &vec![0.0; 60], &opts).unwrap_err();
        assert!(matches!(err, LinalgError::NotConverged { iterations: 1, .. }), "{err:?}");
    }

    #[test]
    fn bad_options_and_shapes_are_rejected() {
        let a = CsrMatrix::identity(2);
        let bad = SolverOptions {
            tolerance: 0.0,
            ..Default::default()
        };
        assert!(matches!(bicgstab(&a, &[1.0, 1.0], &[0.0, 0.0], &bad), Err(LinalgError::InvalidOptions(_))));
        assert!(matches!(
            bicgstab(&a, &[1.0], &[0.0, 0.0], &SolverOptions::default()),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        let rect = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]);
        assert!(matches!(
            bicgstab(&rect, &[1.0, 1.0], &[0.0, 0.0], &SolverOptions::default()),
            Err(LinalgError::NotSquare { .. })
        ));
    }
}
