//! Homogenized energy densities of periodic Lagrangians and mechanical checks
//! of the algebraic identities behind non-approximability of anisotropic
//! energies by Riemannian (Dirichlet-type) energies.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: small dense matrices, uniform cube grids, nodal fields,
//!   cell gradients and midpoint quadrature.
//! * [`models`]: the energy densities (Lagrangians, Cartan integrands,
//!   dominance functions, the spherical bump construction).
//! * [`cell`]: discretization and minimization of the cell energy on `(0,t)^m`.
//! * [`homogenize`]: `t`-schedules, extrapolation of `f_hom`, quasiconvexity
//!   and rank-one probes, column-permutation symmetry and epsilon sweeps.
//! * [`tiling`]: exact integer construction of the box partition used to
//!   compare `g_s` with `g_t`, the patched comparison field and the
//!   subadditivity chain.
//! * [`verify`]: checks of the explicit counterexample identities.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cell;
pub mod error;
pub mod homogenize;
pub mod models;
pub mod numerics;
pub mod report;
pub mod tiling;
pub mod verify;

pub use error::{Error, Result};
pub use numerics::{Grid, GridField, Matrix};
pub use report::{Clause, VerificationReport};
