//! Pathwise residual of the Itô-Kunita-Wentzell expansion of `u(t, X_t)`.
//!
//! Along a simulated path, each step's increment
//! `u(t_{k+1}, X_{k+1}) - u(t_k, X_k)` is compared with
//!
//! ```text
//! [u(t_{k+1}, X_k) - u(t_k, X_k)] + Du (beta dt + rho dW + rho_bar dB) + Du (dL - dU)
//!     + 1/2 D^2u (rho dW + rho_bar dB)^2,
//! ```
//!
//! spatial derivatives taken at `(t_{k+1}, X_k)`. The quadratic term uses
//! the realized square of the martingale increment, so the expansion is
//! exact for fields quadratic in `x` on interior paths.

use crate::error::Result;
use crate::hjb::ValueField;
use crate::linalg::CubicSpline;
use crate::model::{Grid, Scenario};
use crate::rsde::{simulate_paths, Control, PathRecord};

/// Field with first and second spatial derivatives at time layer `k`.
pub trait SmoothField {
    fn value(&self, k: usize, x: f64) -> f64;
    fn dx(&self, k: usize, x: f64) -> f64;
    fn dxx(&self, k: usize, x: f64) -> f64;
}

/// Clamped cubic splines of a solved field, one per time layer, with end
/// slopes from the field's boundary gradient.
#[derive(Debug, Clone)]
pub struct SplineField {
    layers: Vec<CubicSpline>,
}

impl SplineField {
    pub fn new(v: &ValueField) -> Result<Self> {
        let n = v.grid.nx();
        let layers = v
            .u
            .iter()
            .zip(&v.du)
            .map(|(u, du)| CubicSpline::clamped(v.grid.dx(), u, du[0], du[n]))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }
}

impl SmoothField for SplineField {
    fn value(&self, k: usize, x: f64) -> f64 {
        self.layers[k].value(x)
    }
    fn dx(&self, k: usize, x: f64) -> f64 {
        self.layers[k].derivative(x)
    }
    fn dxx(&self, k: usize, x: f64) -> f64 {
        self.layers[k].second_derivative(x)
    }
}

/// Field given by closed forms `f(t, x)`, `f_x`, `f_xx` on a time grid.
pub struct AnalyticField<F, D, D2> {
    pub grid: Grid,
    pub f: F,
    pub fx: D,
    pub fxx: D2,
}

impl<F, D, D2> SmoothField for AnalyticField<F, D, D2>
where
    F: Fn(f64, f64) -> f64,
    D: Fn(f64, f64) -> f64,
    D2: Fn(f64, f64) -> f64,
{
    fn value(&self, k: usize, x: f64) -> f64 {
        (self.f)(self.grid.t(k), x)
    }
    fn dx(&self, k: usize, x: f64) -> f64 {
        (self.fx)(self.grid.t(k), x)
    }
    fn dxx(&self, k: usize, x: f64) -> f64 {
        (self.fxx)(self.grid.t(k), x)
    }
}

/// `|u(T, X_N) - u(0, x0) - sum of expansion terms|` along one recorded path.
pub fn ikw_residual_on_path(field: &dyn SmoothField, s: &Scenario, rec: &PathRecord, grid: &Grid) -> f64 {
    let dt = grid.dt();
    let x = &rec.path.states;
    let nt = grid.nt();
    let mut expansion = 0.0;
    for k in 0..nt {
        let (t, xk) = (grid.t(k), x[k]);
        let w = rec.w[k];
        let martingale = (s.sigma)(t, xk, w) * rec.dw[k] + (s.sigma_bar)(t, xk, w) * rec.db[k];
        let drift = (s.beta)(t, xk, rec.theta[k], w) * dt;
        let push = rec.path.d_lower[k + 1] - rec.path.d_upper[k + 1];
        expansion += field.value(k + 1, xk) - field.value(k, xk)
            + field.dx(k + 1, xk) * (drift + martingale + push)
            + 0.5 * field.dxx(k + 1, xk) * martingale * martingale;
    }
    (field.value(nt, x[nt]) - field.value(0, x[0]) - expansion).abs()
}

/// Simulates one path under the field's feedback policy (stream 0 of
/// `path_seed`) and returns its expansion residual.
pub fn ikw_residual(v: &ValueField, s: &Scenario, path_seed: u64, grid: &Grid, x0: f64) -> Result<f64> {
    let field = SplineField::new(v)?;
    let batch = simulate_paths(s, &Control::Feedback(v.policy.clone()), x0, path_seed, grid, 1)?;
    Ok(ikw_residual_on_path(&field, s, &batch.paths[0], grid))
}
