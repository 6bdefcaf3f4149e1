//! Sparse matrices, the BiCGStab iterative solver and Levenberg-Marquardt
//! curve fitting.

mod bicgstab;
mod csr;
mod lm;

pub use bicgstab::{bicgstab, Preconditioner, SolveStats, SolverOptions};
pub use csr::{CsrMatrix, SparsityPattern};
pub use lm::{levenberg_marquardt, CurveModel, FitResult, LmOptions};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("invalid sparsity pattern: {0}")]
    InvalidPattern(String),
    #[error("entry ({row}, {col}) is not part of the sparsity pattern")]
    OutsidePattern { row: usize, col: usize },
    #[error("matrices do not share a sparsity pattern")]
    PatternMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("BiCGStab breakdown at iteration {iteration}: {quantity} vanished")]
    Breakdown { iteration: usize, quantity: &'static str },
    #[error("BiCGStab did not converge in {iterations} iterations (relative residual {relative_residual:e})")]
    NotConverged { iterations: usize, relative_residual: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{times} sample times but {observations} observations")]
    LengthMismatch { times: usize, observations: usize },
    #[error("expected {expected} initial parameters, found {found}")]
    ParameterCount { expected: usize, found: usize },
    #[error("need at least {needed} observations, found {found}")]
    TooFewObservations { found: usize, needed: usize },
    #[error("non-finite data or model values")]
    NonFinite,
    #[error("initial parameters {0:?} are outside the model domain")]
    InadmissibleStart(Vec<f64>),
    #[error("normal equations are singular")]
    SingularNormalEquations,
    #[error("no convergence after {iterations} iterations (SSR {ssr:e})")]
    NotConverged { iterations: usize, ssr: f64 },
}
