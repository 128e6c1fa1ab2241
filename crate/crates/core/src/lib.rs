//! Numerical laboratory for radial ground states of general Choquard
//! equations -Δu + εu = (I_α∗F(u))F'(u) with F(u) = |u|^p + G(u).
//!
//! The crate solves the rescaled ground-state problem on radial grids,
//! cross-checks the analytic constant chain (Riesz normalization, sharp
//! HLS constant, critical Choquard constant, limit energy), and measures
//! the large-frequency scaling laws of the solution family against their
//! predicted exponents.
//!
//! Module map:
//! - [`problem`]: problem instances and growth-hypothesis validation
//! - [`radial_core`]: grids, quadrature, radial operators, norms
//! - [`riesz`]: the Riesz potential as a dense radial convolution operator
//! - [`closed_forms`]: analytic constants and extremal profiles
//! - [`functionals`]: energies, constraint residuals, fibering projections
//! - [`solver`]: preconditioned Nehari descent for ground states
//! - [`asymptotics`]: exponent algebra, rate fitting, expansion tables
//! - [`harness`]: sweep orchestration, persistence, reporting

pub mod asymptotics;
pub mod closed_forms;
pub mod functionals;
pub mod problem;
mod quad;
pub mod radial_core;
pub mod riesz;
pub mod solver;
pub mod harness;
