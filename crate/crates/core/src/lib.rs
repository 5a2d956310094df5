//! Optimal drift control of a diffusion reflected on `[0, b]`.
//!
//! The crate solves the Neumann-boundary HJB equation of the control
//! problem, extracts the feedback minimizer, simulates the controlled
//! reflected SDE with local-time boundary costs, and checks numerically that
//! the solved field is the value function. Random (W-adapted) coefficients
//! are handled by a binomial Wiener-tree solver for the backward SPDE.
//!
//! Module map:
//!
//! - [`model`]: grids, scenarios, control sets, assumption checks, boundary lift
//! - [`skorokhod`]: discrete two-sided reflection with local-time bookkeeping
//! - [`hamiltonian`]: pointwise Hamiltonian and minimizer, policy tables
//! - [`hjb`]: backward finite-difference HJB solver and residual diagnostics
//! - [`bspde`]: Wiener-tree solvers for linear and semilinear backward SPDEs
//! - [`rsde`]: reflected Euler-Maruyama simulation and pathwise costs
//! - [`harness`]: value-function verification, Itô-Kunita-Wentzell residual,
//!   self-test suite and the command-line entry point

pub mod bspde;
pub mod config;
pub mod error;
pub mod hamiltonian;
pub mod harness;
pub mod hjb;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod rsde;
pub mod skorokhod;

pub use error::{Error, Result};
pub use model::{BoundaryLift, CoefficientMode, ControlSet, Grid, Scenario, ValidationReport};
