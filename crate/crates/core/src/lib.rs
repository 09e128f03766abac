//! Vortex-particle kernels and simulator for axisymmetric, swirl-free Euler
//! flow in dimension `d >= 3` with odd ("anti-parallel") vorticity.
//!
//! Only the upper half-plane `{r > 0, z >= 0}` is stored; every kernel folds
//! in the mirror image across `z = 0` with the opposite sign. The crate is
//! organised bottom-up:
//!
//! * [`specfun`]: the kernel family `F`, `F'`, `F''`, `F*`, stable power
//!   differences, and the interpolation table used on the hot path.
//! * [`state`]: particles, initial data and checkpoints.
//! * [`biot_savart`]: stream function, velocities and the pairwise kernels.
//! * [`integrate`]: Runge-Kutta time stepping.
//! * [`diagnostics`]: moments, energy and kernel-form time derivatives.
//! * [`harness`]: experiments, exponent fits, verdicts and the property suite.
//! * [`config`]: the JSON run description.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biot_savart;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod integrate;
pub mod io;
pub mod specfun;
pub mod state;
mod sum;

pub use error::{Error, Result};
pub use specfun::Dimension;
