//! End-to-end checks of the solved field and the command-line front end.
//!
//! - [`verify`]: Monte Carlo test that the solved field is the value function
//! - [`ikw`]: pathwise Itô-Kunita-Wentzell expansion residual
//! - [`selftest`]: quick invariant suite behind the `selftest` subcommand
//! - [`cli`]: argument parsing and subcommands

pub mod cli;
pub mod ikw;
pub mod selftest;
pub mod verify;

pub use cli::run_cli;
pub use ikw::{ikw_residual, ikw_residual_on_path, AnalyticField, SmoothField, SplineField};
pub use verify::{
    calibrate_tol_disc, check_verification_hypothesis, Calibration, perturbed_feedback, shipped_challengers, verify_value, ChallengerResult,
    McConfig, VerifyReport,
};
