//! Backward finite-difference solver for the Neumann HJB equation
//!
//! ```text
//! -u_t = 1/2 (sigma^2 + sigma_bar^2) D^2 u + H(t, x, Du),
//! Du(t, 0) = g0(t),  Du(t, b) = gb(t),  u(T, .) = G,
//! ```
//!
//! which is the value-function equation of the control problem when the
//! coefficients are deterministic (the martingale term vanishes).
//!
//! Each step from `t_{k+1}` to `t_k` applies the Hamiltonian explicitly to
//! `u_{k+1}` with one-sided differences chosen by the sign of each
//! candidate's drift, then solves the implicit diffusion step. Neumann data
//! enter through second-order ghost nodes `u_{-1} = u_1 - 2 dx g0` and
//! `u_{nx+1} = u_{nx-1} + 2 dx gb`. Under `dt max|beta| / dx <= 1` the step
//! is monotone, so the scheme is exactly the dynamic-programming recursion
//! of a controlled Markov chain on the grid.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::{minimize_unchecked, minimize_upwind, policy_field, upwind_term, PolicyField};
use crate::linalg::solve_tridiagonal;
use crate::model::{lift_boundary, BoundaryLift, Grid, Scenario};

#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    /// Solve even when the explicit Hamiltonian step violates the CFL bound.
    pub override_cfl: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeInfo {
    pub upwind: bool,
    pub policy_evaluations_per_step: usize,
    pub cfl_ratio: f64,
    pub cfl_overridden: bool,
    /// Solved through the homogeneous problem for `u - ghat`.
    pub lifted: bool,
    /// Control chosen by the upwind step at `[k][i]`, `k = 0..nt`.
    pub step_controls: Vec<Vec<f64>>,
}

/// Discrete value function `u[k][i]` with its gradient and feedback policy.
///
/// `du` is centered at interior nodes and equals the imposed Neumann data at
/// the two boundary nodes. `policy` is the Hamiltonian minimizer at `du`.
#[derive(Debug, Clone)]
pub struct ValueField {
    pub grid: Grid,
    pub u: Vec<Vec<f64>>,
    pub du: Vec<Vec<f64>>,
    pub policy: PolicyField,
    pub scheme: SchemeInfo,
}

impl ValueField {
    /// Linear interpolation of layer `k` at `x`.
    pub fn value_at(&self, k: usize, x: f64) -> f64 {
        interpolate(&self.u[k], self.grid.dx(), x)
    }

    /// `u(0, x0)`.
    pub fn u0(&self, x0: f64) -> f64 {
        self.value_at(0, x0)
    }
}

pub(crate) fn interpolate(row: &[f64], dx: f64, x: f64) -> f64 {
    let n = row.len() - 1;
    let s = (x / dx).max(0.0);
    let i = (s.floor() as usize).min(n - 1);
    let frac = (s - i as f64).clamp(0.0, 1.0);
    row[i] + frac * (row[i + 1] - row[i])
}

/// Gradient table: centered differences inside, Neumann data at the ends.
pub(crate) fn gradient_table(u: &[Vec<f64>], grid: &Grid, s: &Scenario) -> Vec<Vec<f64>> {
    let dx = grid.dx();
    let n = grid.nx();
    u.iter()
        .enumerate()
        .map(|(k, row)| {
            let t = grid.t(k);
            (0..=n)
                .map(|i| {
                    if i == 0 {
                        (s.g0)(t, 0.0)
                    } else if i == n {
                        (s.gb)(t, 0.0)
                    } else {
                        (row[i + 1] - row[i - 1]) / (2.0 * dx)
                    }
                })
                .collect()
        })
        .collect()
}

type Table = Vec<Vec<f64>>;

enum Controls<'a> {
    Optimize,
    Fixed(&'a [Vec<f64>]),
}

struct Problem<'a> {
    s: &'a Scenario,
    grid: Grid,
    terminal: Vec<f64>,
    /// Ghost-node data; zero when `lift` is set.
    homogeneous: bool,
    lift: Option<&'a BoundaryLift>,
    controls: Controls<'a>,
}

impl Problem<'_> {
    fn neumann(&self, t: f64) -> (f64, f64) {
        if self.homogeneous {
            (0.0, 0.0)
        } else {
            ((self.s.g0)(t, 0.0), (self.s.gb)(t, 0.0))
        }
    }

    /// Returns the value layers and the controls chosen at each step.
    fn run(&self) -> Result<(Table, Table)> {
        let grid = &self.grid;
        let s = self.s;
        let (n, nt) = (grid.nx(), grid.nt());
        let (dx, dt) = (grid.dx(), grid.dt());
        let thetas = s.controls.candidates();
        let xs = grid.xs();

        let mut u = vec![Vec::new(); nt + 1];
        let mut chosen = vec![Vec::new(); nt];
        u[nt] = self.terminal.clone();

        let mut lower = vec![0.0; n + 1];
        let mut diag = vec![0.0; n + 1];
        let mut upper = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n + 1];
        let mut row_controls = vec![0.0; n + 1];

        for k in (0..nt).rev() {
            let t = grid.t(k);
            let t_next = grid.t(k + 1);
            let (g0n, gbn) = self.neumann(t_next);
            let (g0, gb) = self.neumann(t);
            let next = &u[k + 1];

            for i in 0..=n {
                let x = xs[i];
                let left = if i == 0 { next[1] - 2.0 * dx * g0n } else { next[i - 1] };
                let right = if i == n { next[n - 1] + 2.0 * dx * gbn } else { next[i + 1] };
                let mut v_back = (next[i] - left) / dx;
                let mut v_fwd = (right - next[i]) / dx;
                let a = s.diffusion(t, x, 0.0);
                let mut source = 0.0;
                if let Some(l) = self.lift {
                    v_back += (l.ghat(t_next, x) - l.ghat(t_next, x - dx)) / dx;
                    v_fwd += (l.ghat(t_next, x + dx) - l.ghat(t_next, x)) / dx;
                    source = 0.5 * a * l.dg_dx(t) + l.dghat_dt(t, x);
                }
                let (h, theta) = match self.controls {
                    Controls::Optimize => minimize_upwind(t, x, v_back, v_fwd, 0.0, s, &thetas),
                    Controls::Fixed(table) => {
                        let th = table[k][i];
                        (upwind_term(t, x, th, v_back, v_fwd, 0.0, s), th)
                    }
                };
                row_controls[i] = theta;

                let r = dt * a / (2.0 * dx * dx);
                diag[i] = 1.0 + 2.0 * r;
                rhs[i] = next[i] + dt * (h + source);
                if i == 0 {
                    lower[i] = 0.0;
                    upper[i] = -2.0 * r;
                    rhs[i] -= 2.0 * r * dx * g0;
                } else if i == n {
                    lower[i] = -2.0 * r;
                    upper[i] = 0.0;
                    rhs[i] += 2.0 * r * dx * gb;
                } else {
                    lower[i] = -r;
                    upper[i] = -r;
                }
            }
            u[k] = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
            if u[k].iter().any(|v| !v.is_finite()) {
                return Err(Error::Parameter(format!("non-finite value at time layer {k}")));
            }
            chosen[k] = row_controls.clone();
        }
        Ok((u, chosen))
    }
}

fn check_solvable(s: &Scenario, grid: &Grid) -> Result<()> {
    if !s.is_deterministic() {
        return Err(Error::Parameter(format!(
            "scenario '{}' has W-dependent coefficients; use the tree solver",
            s.name
        )));
    }
    s.check_grid(grid)?;
    if !(s.kappa > 0.0) {
        return Err(Error::Hypothesis(format!("super-parabolicity floor kappa = {} must be > 0", s.kappa)));
    }
    for k in 0..=grid.nt() {
        for i in 0..=grid.nx() {
            let sb = (s.sigma_bar)(grid.t(k), grid.x(i), 0.0);
            if sb * sb < s.kappa {
                return Err(Error::Hypothesis(format!(
                    "sigma_bar^2 = {} < kappa = {} at (t, x) = ({}, {})",
                    sb * sb,
                    s.kappa,
                    grid.t(k),
                    grid.x(i)
                )));
            }
        }
    }
    Ok(())
}

/// `dt * max|beta| / dx` over the grid and the control candidates.
pub fn cfl_ratio(s: &Scenario, grid: &Grid) -> f64 {
    grid.dt() * s.max_drift_on(grid) / grid.dx()
}

fn check_cfl(s: &Scenario, grid: &Grid, opts: SolveOptions) -> Result<f64> {
    let ratio = cfl_ratio(s, grid);
    if ratio > 1.0 && !opts.override_cfl {
        return Err(Error::Cfl { ratio });
    }
    Ok(ratio)
}

fn assemble(s: &Scenario, grid: Grid, u: Vec<Vec<f64>>, chosen: Vec<Vec<f64>>, ratio: f64, opts: SolveOptions, lifted: bool) -> Result<ValueField> {
    let du = gradient_table(&u, &grid, s);
    let policy = policy_field(&du, s, &grid)?;
    Ok(ValueField {
        grid,
        u,
        du,
        policy,
        scheme: SchemeInfo {
            upwind: true,
            policy_evaluations_per_step: 1,
            cfl_ratio: ratio,
            cfl_overridden: ratio > 1.0 && opts.override_cfl,
            lifted,
            step_controls: chosen,
        },
    })
}

/// Solves the Neumann HJB equation with default options.
pub fn solve_hjb(s: &Scenario, grid: &Grid) -> Result<ValueField> {
    solve_hjb_with(s, grid, SolveOptions::default())
}

pub fn solve_hjb_with(s: &Scenario, grid: &Grid, opts: SolveOptions) -> Result<ValueField> {
    check_solvable(s, grid)?;
    let ratio = check_cfl(s, grid, opts)?;
    let terminal = grid.xs().iter().map(|&x| (s.terminal)(x, 0.0)).collect();
    let problem = Problem {
        s,
        grid: *grid,
        terminal,
        homogeneous: false,
        lift: None,
        controls: Controls::Optimize,
    };
    let (u, chosen) = problem.run()?;
    assemble(s, *grid, u, chosen, ratio, opts, false)
}

/// Solves for `u - ghat` with zero Neumann data, the Hamiltonian evaluated
/// at the shifted gradient and the source `1/2 a Dg + d ghat / dt`, then adds
/// `ghat` back. Agrees with [`solve_hjb`] up to the time discretization of
/// `d ghat / dt` (exactly, up to rounding, for time-independent traces).
pub fn solve_hjb_lifted(s: &Scenario, grid: &Grid, opts: SolveOptions) -> Result<ValueField> {
    check_solvable(s, grid)?;
    let ratio = check_cfl(s, grid, opts)?;
    let lift = lift_boundary(s.g0.clone(), s.gb.clone(), grid);
    let horizon = grid.horizon();
    let terminal = grid.xs().iter().map(|&x| (s.terminal)(x, 0.0) - lift.ghat(horizon, x)).collect();
    let problem = Problem {
        s,
        grid: *grid,
        terminal,
        homogeneous: true,
        lift: Some(&lift),
        controls: Controls::Optimize,
    };
    let (mut u, chosen) = problem.run()?;
    for (k, row) in u.iter_mut().enumerate() {
        let t = grid.t(k);
        for (i, v) in row.iter_mut().enumerate() {
            *v += lift.ghat(t, grid.x(i));
        }
    }
    assemble(s, *grid, u, chosen, ratio, opts, true)
}

/// Cost-to-go of a fixed Markov policy table `table[k][i]`, `k = 0..nt`, on
/// the same discrete chain the solver optimizes over.
pub fn evaluate_markov_policy(s: &Scenario, grid: &Grid, table: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_solvable(s, grid)?;
    if table.len() < grid.nt() || table.iter().take(grid.nt()).any(|r| r.len() != grid.nx() + 1) {
        return Err(Error::Dimension(format!(
            "policy table must have at least {} rows of {} controls",
            grid.nt(),
            grid.nx() + 1
        )));
    }
    if let Some(th) = table.iter().take(grid.nt()).flatten().find(|&&th| !s.controls.contains(th)) {
        return Err(Error::Parameter(format!("control {th} is not in the control set")));
    }
    let terminal = grid.xs().iter().map(|&x| (s.terminal)(x, 0.0)).collect();
    let problem = Problem {
        s,
        grid: *grid,
        terminal,
        homogeneous: false,
        lift: None,
        controls: Controls::Fixed(table),
    };
    Ok(problem.run()?.0)
}

/// Largest deviation of the one-sided second-order boundary derivative from
/// the Neumann data, over all time layers: `(at 0, at b)`.
pub fn neumann_residual(v: &ValueField, s: &Scenario) -> (f64, f64) {
    let grid = &v.grid;
    let n = grid.nx();
    let dx = grid.dx();
    let mut r0 = 0.0_f64;
    let mut rb = 0.0_f64;
    for (k, row) in v.u.iter().enumerate() {
        let t = grid.t(k);
        let d0 = (-3.0 * row[0] + 4.0 * row[1] - row[2]) / (2.0 * dx);
        let db = (3.0 * row[n] - 4.0 * row[n - 1] + row[n - 2]) / (2.0 * dx);
        r0 = r0.max((d0 - (s.g0)(t, 0.0)).abs());
        rb = rb.max((db - (s.gb)(t, 0.0)).abs());
    }
    (r0, rb)
}

/// Drift `F = 1/2 a D^2 u + H(Du)` of layer `k` at the grid nodes, with
/// ghost-node second differences and the centered gradient table.
fn drift_layer(v: &ValueField, s: &Scenario, k: usize) -> Vec<f64> {
    let grid = &v.grid;
    let (n, dx) = (grid.nx(), grid.dx());
    let t = grid.t(k);
    let row = &v.u[k];
    let (g0, gb) = ((s.g0)(t, 0.0), (s.gb)(t, 0.0));
    (0..=n)
        .map(|i| {
            let x = grid.x(i);
            let left = if i == 0 { row[1] - 2.0 * dx * g0 } else { row[i - 1] };
            let right = if i == n { row[n - 1] + 2.0 * dx * gb } else { row[i + 1] };
            let d2 = (left - 2.0 * row[i] + right) / (dx * dx);
            0.5 * s.diffusion(t, x, 0.0) * d2 + minimize_unchecked(t, x, v.du[k][i], 0.0, s).value
        })
        .collect()
}

pub(crate) fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len() - 1;
    h * (0.5 * (f[0] + f[n]) + f[1..n].iter().sum::<f64>())
}

/// Sine bump `sin^2` supported on `[lo, hi]`.
fn bump(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo || x >= hi {
        0.0
    } else {
        let s = (std::f64::consts::PI * (x - lo) / (hi - lo)).sin();
        s * s
    }
}

/// Weak-form residual at `t = 0`:
/// `max over phi of |<phi, u_0> - <phi, G> - int_0^T <phi, F_s> ds| / ||phi||`
/// with `n_test` sine bumps on interior subintervals, trapezoid quadrature
/// in space and time.
pub fn weak_residual(v: &ValueField, s: &Scenario, n_test: usize) -> f64 {
    let grid = &v.grid;
    let (dx, dt) = (grid.dx(), grid.dt());
    let xs = grid.xs();
    let nt = grid.nt();
    let drifts: Vec<Vec<f64>> = (0..=nt).into_par_iter().map(|k| drift_layer(v, s, k)).collect();
    let terminal: Vec<f64> = xs.iter().map(|&x| (s.terminal)(x, 0.0)).collect();
    let width = grid.barrier() / (n_test.max(1) + 2) as f64;

    (0..n_test.max(1))
        .map(|m| {
            let lo = (m as f64 + 0.5) * width;
            let hi = (m as f64 + 2.5) * width;
            let phi: Vec<f64> = xs.iter().map(|&x| bump(x, lo, hi)).collect();
            let inner = |f: &[f64]| {
                let prod: Vec<f64> = phi.iter().zip(f).map(|(a, b)| a * b).collect();
                trapezoid(&prod, dx)
            };
            let norm = inner(&phi).sqrt();
            let layer: Vec<f64> = drifts.iter().map(|f| inner(f)).collect();
            let integral = trapezoid(&layer, dt);
            (inner(&v.u[0]) - inner(&terminal) - integral).abs() / norm
        })
        .fold(0.0, f64::max)
}
