//! Backward SPDE solvers on a recombining binomial Wiener tree.
//!
//! Layer `k` of the tree carries the nodes `j = -k, -k+2, .., k` with
//! `W = j sqrt(dt)`; node `(k, j)` has children `(k+1, j-1)` and
//! `(k+1, j+1)` with probability one half each. At every node the
//! conditional mean of the children gives `u_bar` and their half difference
//! over `sqrt(dt)` gives the martingale density `psi`. The spatial step
//!
//! ```text
//! u = u_bar + dt (c D^2 u + lambda sigma D psi + h),   c = lambda a / 2 + (1 - lambda) / 2,
//! ```
//!
//! with `a = sigma^2 + sigma_bar^2` and zero Neumann ghosts is implicit in
//! `u`; `lambda = 1` is the equation itself, other values interpolate
//! towards the plain heat operator.
//!
//! Nodes are stored by `m = (j + k) / 2`, so `u[k][m][i]` is layer `k`,
//! node `j = 2m - k`, state `x_i`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::minimize_unchecked;
use crate::hjb::trapezoid;
use crate::linalg::solve_tridiagonal;
use crate::model::{lift_boundary, BoundaryLift, Grid, Scenario};

/// Source term `h(t, x, w)`.
pub type SourceFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

#[derive(Debug, Clone)]
pub struct TreeSolution {
    pub grid: Grid,
    pub u: Vec<Vec<Vec<f64>>>,
    /// Zero on the terminal layer.
    pub psi: Vec<Vec<Vec<f64>>>,
    /// Source used at every non-terminal node (for semilinear solves, the
    /// generator evaluated at the converged iterate).
    pub source: Vec<Vec<Vec<f64>>>,
    pub lambda: f64,
    pub iterations: usize,
    /// Max-norm change of `(u, psi)` per Picard iteration.
    pub distances: Vec<f64>,
}

impl TreeSolution {
    pub fn depth(&self) -> usize {
        self.grid.nt()
    }

    /// Wiener value at layer `k`, storage index `m`.
    pub fn w(&self, k: usize, m: usize) -> f64 {
        node_w(&self.grid, k, m)
    }

    /// Storage index of node `j` on layer `k`, if it exists.
    pub fn index(k: usize, j: i64) -> Option<usize> {
        let k = k as i64;
        if j.abs() > k || (j + k) % 2 != 0 {
            None
        } else {
            Some(((j + k) / 2) as usize)
        }
    }

    pub fn node_u(&self, k: usize, j: i64) -> Option<&[f64]> {
        Self::index(k, j).map(|m| self.u[k][m].as_slice())
    }

    pub fn node_psi(&self, k: usize, j: i64) -> Option<&[f64]> {
        Self::index(k, j).map(|m| self.psi[k][m].as_slice())
    }

    /// Largest `|psi|` over all nodes.
    pub fn max_abs_psi(&self) -> f64 {
        self.psi.iter().flatten().flatten().fold(0.0, |a, &v| a.max(v.abs()))
    }
}

fn node_w(grid: &Grid, k: usize, m: usize) -> f64 {
    (2 * m as i64 - k as i64) as f64 * grid.dt().sqrt()
}

/// Local state handed to a semilinear generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeState {
    pub t: f64,
    pub x: f64,
    pub w: f64,
    pub u: f64,
    pub du: f64,
    pub d2u: f64,
    pub psi: f64,
    pub dpsi: f64,
}

/// Generator `Gamma(t, x, u, Du, D^2u, psi, D psi, w)` with its declared
/// Lipschitz constants: `mu` on the `D^2u`, `D psi` arguments and
/// `lipschitz` on the lower-order ones.
#[derive(Clone)]
pub struct SemilinearSpec {
    pub gamma: Arc<dyn Fn(&NodeState) -> f64 + Send + Sync>,
    pub mu: f64,
    pub lipschitz: f64,
}

impl std::fmt::Debug for SemilinearSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemilinearSpec").field("mu", &self.mu).field("lipschitz", &self.lipschitz).finish_non_exhaustive()
    }
}

impl SemilinearSpec {
    pub fn new(mu: f64, lipschitz: f64, gamma: impl Fn(&NodeState) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(mu >= 0.0 && lipschitz >= 0.0) {
            return Err(Error::Parameter(format!("Lipschitz constants must be >= 0, got mu = {mu}, L = {lipschitz}")));
        }
        Ok(Self { gamma: Arc::new(gamma), mu, lipschitz })
    }

    pub fn zero() -> Self {
        Self { gamma: Arc::new(|_| 0.0), mu: 0.0, lipschitz: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { lambda: 1.0, tol: 1e-10, max_iter: 100 }
    }
}

fn check_tree(s: &Scenario, grid: &Grid, lambda: f64) -> Result<()> {
    s.check_grid(grid)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Parameter(format!("lambda = {lambda} outside [0, 1]")));
    }
    if !(s.kappa > 0.0) {
        return Err(Error::Hypothesis(format!("super-parabolicity floor kappa = {} must be > 0", s.kappa)));
    }
    Ok(())
}

fn centered(row: &[f64], dx: f64) -> Vec<f64> {
    let n = row.len() - 1;
    (0..=n)
        .map(|i| if i == 0 || i == n { 0.0 } else { (row[i + 1] - row[i - 1]) / (2.0 * dx) })
        .collect()
}

/// Second difference with zero-Neumann ghost nodes.
fn laplacian(row: &[f64], dx: f64) -> Vec<f64> {
    let n = row.len() - 1;
    (0..=n)
        .map(|i| {
            let left = if i == 0 { row[1] } else { row[i - 1] };
            let right = if i == n { row[n - 1] } else { row[i + 1] };
            (left - 2.0 * row[i] + right) / (dx * dx)
        })
        .collect()
}

fn operator_coefficient(s: &Scenario, lambda: f64, t: f64, x: f64, w: f64) -> f64 {
    0.5 * lambda * s.diffusion(t, x, w) + 0.5 * (1.0 - lambda)
}

/// One node: conditional mean and martingale density from the children,
/// then the implicit spatial step.
#[allow(clippy::too_many_arguments)]
fn node_step(
    s: &Scenario,
    grid: &Grid,
    lambda: f64,
    k: usize,
    w: f64,
    down: &[f64],
    up: &[f64],
    source: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.nx();
    let (dx, dt) = (grid.dx(), grid.dt());
    let sq = dt.sqrt();
    let t = grid.t(k);
    let ubar: Vec<f64> = up.iter().zip(down).map(|(a, b)| 0.5 * (a + b)).collect();
    let psi: Vec<f64> = up.iter().zip(down).map(|(a, b)| (a - b) / (2.0 * sq)).collect();
    let dpsi = centered(&psi, dx);

    let mut lower = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut upper = vec![0.0; n + 1];
    let mut rhs = vec![0.0; n + 1];
    for i in 0..=n {
        let x = grid.x(i);
        let c = operator_coefficient(s, lambda, t, x, w);
        let r = dt * c / (dx * dx);
        diag[i] = 1.0 + 2.0 * r;
        rhs[i] = ubar[i] + dt * (lambda * (s.sigma)(t, x, w) * dpsi[i] + source[i]);
        if i == 0 {
            upper[i] = -2.0 * r;
        } else if i == n {
            lower[i] = -2.0 * r;
        } else {
            lower[i] = -r;
            upper[i] = -r;
        }
    }
    Ok((solve_tridiagonal(&lower, &diag, &upper, &rhs)?, psi))
}

type Layered = Vec<Vec<Vec<f64>>>;

/// Backward induction with a fully tabulated source `source[k][m][i]`.
fn induct(s: &Scenario, grid: &Grid, lambda: f64, source: Layered) -> Result<TreeSolution> {
    let nt = grid.nt();
    let xs = grid.xs();
    let mut u: Layered = vec![Vec::new(); nt + 1];
    let mut psi: Layered = vec![Vec::new(); nt + 1];
    u[nt] = (0..=nt)
        .map(|m| {
            let w = node_w(grid, nt, m);
            xs.iter().map(|&x| (s.terminal)(x, w)).collect()
        })
        .collect();
    psi[nt] = vec![vec![0.0; xs.len()]; nt + 1];

    for k in (0..nt).rev() {
        let next = &u[k + 1];
        let layer: Vec<(Vec<f64>, Vec<f64>)> = (0..=k)
            .into_par_iter()
            .map(|m| node_step(s, grid, lambda, k, node_w(grid, k, m), &next[m], &next[m + 1], &source[k][m]))
            .collect::<Result<_>>()?;
        let (uk, pk): (Vec<_>, Vec<_>) = layer.into_iter().unzip();
        u[k] = uk;
        psi[k] = pk;
    }
    Ok(TreeSolution { grid: *grid, u, psi, source, lambda, iterations: 1, distances: Vec::new() })
}

fn tabulate(grid: &Grid, f: impl Fn(usize, usize, usize) -> f64 + Sync) -> Layered {
    (0..grid.nt())
        .into_par_iter()
        .map(|k| (0..=k).map(|m| (0..=grid.nx()).map(|i| f(k, m, i)).collect()).collect())
        .collect()
}

/// Linear backward SPDE with zero Neumann data and source `h(t, x, w)`.
pub fn solve_linear_tree(s: &Scenario, h: &SourceFn, grid: &Grid) -> Result<TreeSolution> {
    solve_linear_tree_with(s, h, grid, 1.0)
}

/// [`solve_linear_tree`] with the operator interpolation knob `lambda`.
pub fn solve_linear_tree_with(s: &Scenario, h: &SourceFn, grid: &Grid, lambda: f64) -> Result<TreeSolution> {
    check_tree(s, grid, lambda)?;
    let source = tabulate(grid, |k, m, i| h(grid.t(k), grid.x(i), node_w(grid, k, m)));
    induct(s, grid, lambda, source)
}

fn max_change(a: &Layered, b: &Layered) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .flat_map(|(x, y)| x.iter().zip(y))
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

fn generator_table(ts: &TreeSolution, spec: &SemilinearSpec) -> Layered {
    let grid = &ts.grid;
    let dx = grid.dx();
    (0..grid.nt())
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            (0..=k)
                .map(|m| {
                    let w = node_w(grid, k, m);
                    let (u, psi) = (&ts.u[k][m], &ts.psi[k][m]);
                    let (du, d2u, dpsi) = (centered(u, dx), laplacian(u, dx), centered(psi, dx));
                    (0..=grid.nx())
                        .map(|i| {
                            (spec.gamma)(&NodeState {
                                t,
                                x: grid.x(i),
                                w,
                                u: u[i],
                                du: du[i],
                                d2u: d2u[i],
                                psi: psi[i],
                                dpsi: dpsi[i],
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn zero_solution(grid: &Grid, lambda: f64) -> TreeSolution {
    let n = grid.nx() + 1;
    let zeros: Layered = (0..=grid.nt()).map(|k| vec![vec![0.0; n]; k + 1]).collect();
    TreeSolution {
        grid: *grid,
        u: zeros.clone(),
        psi: zeros.clone(),
        source: zeros[..grid.nt()].to_vec(),
        lambda,
        iterations: 0,
        distances: Vec::new(),
    }
}

/// Semilinear backward SPDE by Picard iteration with default options.
pub fn solve_semilinear_tree(
    s: &Scenario,
    spec: &SemilinearSpec,
    grid: &Grid,
    tol: f64,
    max_iter: usize,
) -> Result<TreeSolution> {
    solve_semilinear_tree_with(s, spec, grid, TreeOptions { tol, max_iter, ..TreeOptions::default() })
}

/// Picard iteration: the generator is frozen at the previous iterate
/// (starting from zero fields) and the linear tree problem is re-solved
/// until the max-norm change of `(u, psi)` drops below `tol`, or until the
/// frozen source stops changing.
pub fn solve_semilinear_tree_with(s: &Scenario, spec: &SemilinearSpec, grid: &Grid, opts: TreeOptions) -> Result<TreeSolution> {
    check_tree(s, grid, opts.lambda)?;
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Parameter(format!("need tol > 0 and max_iter >= 1, got {} and {}", opts.tol, opts.max_iter)));
    }
    let mut current = zero_solution(grid, opts.lambda);
    let mut source = generator_table(&current, spec);
    let mut distances = Vec::new();
    for iter in 1..=opts.max_iter {
        let next = induct(s, grid, opts.lambda, source)?;
        let d = max_change(&next.u, &current.u).max(max_change(&next.psi, &current.psi));
        distances.push(d);
        let next_source = generator_table(&next, spec);
        let stalled = next_source == next.source;
        current = next;
        if d < opts.tol || stalled {
            current.iterations = iter;
            current.distances = distances;
            return Ok(current);
        }
        source = next_source;
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: *distances.last().unwrap_or(&f64::NAN) })
}

/// Tree solution of the Neumann HJB equation.
///
/// Runs the Picard tree solver on the lifted problem of
/// [`lifted_hjb_problem`] and adds `ghat` back. Coefficients are read at
/// each node's `w`.
pub fn solve_hjb_tree(s: &Scenario, grid: &Grid, opts: TreeOptions) -> Result<TreeSolution> {
    let (lifted, spec, lift) = lifted_hjb_problem(s, grid);
    let mut ts = solve_semilinear_tree_with(&lifted, &spec, grid, opts)?;
    for (k, layer) in ts.u.iter_mut().enumerate() {
        let t = grid.t(k);
        for row in layer.iter_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v += lift.ghat(t, grid.x(i));
            }
        }
    }
    Ok(ts)
}

/// Homogeneous problem for `u - ghat`: zero boundary traces, terminal value
/// `G - ghat(T)` and generator `H(Du + g) + 1/2 a Dg + d ghat / dt`.
pub fn lifted_hjb_problem(s: &Scenario, grid: &Grid) -> (Scenario, SemilinearSpec, BoundaryLift) {
    let lift = lift_boundary(s.g0.clone(), s.gb.clone(), grid);
    let horizon = s.horizon;
    let (terminal, l1) = (s.terminal.clone(), lift.clone());
    let lifted = s
        .clone()
        .with_boundary(|_, _| 0.0, |_, _| 0.0)
        .with_terminal(move |x, w| terminal(x, w) - l1.ghat(horizon, x));
    let (base, l2) = (s.clone(), lift.clone());
    let spec = SemilinearSpec {
        gamma: Arc::new(move |n: &NodeState| {
            let v = n.du + l2.g(n.t, n.x);
            minimize_unchecked(n.t, n.x, v, n.w, &base).value
                + 0.5 * base.diffusion(n.t, n.x, n.w) * l2.dg_dx(n.t)
                + l2.dghat_dt(n.t, n.x)
        }),
        mu: 0.0,
        lipschitz: s.max_drift_on(grid),
    };
    (lifted, spec, lift)
}

/// Per-layer residual of the discrete square-norm identity
///
/// ```text
/// E ||u_k||^2 + sum_{l >= k} dt E ||psi_l||^2 - E ||G||^2 - sum_{l >= k} 2 dt E <F_l, u_l>
/// ```
///
/// where `F` is the drift of the solved equation (operator, `sigma D psi`
/// coupling and the recorded source), norms are trapezoid quadrature and
/// `E` averages over the binomial node weights. Entry `k` is the absolute
/// residual at layer `k`; entry `nt` is zero.
pub fn energy_identity_residual(ts: &TreeSolution, s: &Scenario) -> Vec<f64> {
    let grid = &ts.grid;
    let (nt, dx, dt) = (grid.nt(), grid.dx(), grid.dt());
    let xs = grid.xs();

    let mut weights = vec![vec![1.0]];
    for k in 0..nt {
        let prev = &weights[k];
        weights.push((0..=k + 1).map(|m| 0.5 * (if m > 0 { prev[m - 1] } else { 0.0 } + prev.get(m).copied().unwrap_or(0.0))).collect());
    }

    let inner = |a: &[f64], b: &[f64]| {
        let p: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
        trapezoid(&p, dx)
    };

    let stats: Vec<(f64, f64, f64)> = (0..=nt)
        .into_par_iter()
        .map(|k| {
            let t = grid.t(k);
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for m in 0..=k {
                let p = weights[k][m];
                let u = &ts.u[k][m];
                a += p * inner(u, u);
                if k < nt {
                    let psi = &ts.psi[k][m];
                    b += p * inner(psi, psi);
                    let w = node_w(grid, k, m);
                    let (d2u, dpsi) = (laplacian(u, dx), centered(psi, dx));
                    let drift: Vec<f64> = (0..xs.len())
                        .map(|i| {
                            let x = xs[i];
                            operator_coefficient(s, ts.lambda, t, x, w) * d2u[i]
                                + ts.lambda * (s.sigma)(t, x, w) * dpsi[i]
                                + ts.source[k][m][i]
                        })
                        .collect();
                    c += p * inner(&drift, u);
                }
            }
            (a, b, c)
        })
        .collect();

    let terminal = stats[nt].0;
    let mut out = vec![0.0; nt + 1];
    let mut tail = 0.0;
    for k in (0..nt).rev() {
        tail += dt * (stats[k].1 - 2.0 * stats[k].2);
        out[k] = (stats[k].0 + tail - terminal).abs();
    }
    out
}
