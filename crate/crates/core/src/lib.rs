//! Evolving surface finite elements on time series of triangulated surfaces.
//!
//! The crate solves scalar advection-diffusion and two-species
//! reaction-diffusion problems on closed, genus-zero triangulated surfaces
//! whose vertex positions move in time while the connectivity stays fixed.
//! Vertices move with an arbitrary (possibly unphysical) velocity; the
//! material velocity is taken to be the normal part of that motion, and the
//! tangential remainder enters the scheme as an ALE advection term.
//!
//! Layout:
//!
//! * [`geometry`]: surface frames, element geometry, frame sequences and
//!   synthetic test geometries.
//! * [`linalg`]: compressed-row matrices, BiCGStab and Levenberg-Marquardt.
//! * [`fem`]: P1 assembly and the backward-Euler evolving-surface step.
//! * [`frap`]: photobleaching recovery simulations and curve fitting.
//! * [`pattern`]: activator / depleted-substrate pattern formation.
//! * [`io`]: mesh frames, manifests, VTK, CSV and JSON records.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod fem;
pub mod frap;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod pattern;

mod error;

pub use error::{Error, ErrorCategory};

/// Three-component vector used for positions, velocities and normals.
pub type Vec3 = nalgebra::Vector3<f64>;
