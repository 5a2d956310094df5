//! Reflected Euler-Maruyama simulation of the controlled state and its
//! pathwise cost.
//!
//! Step `k` draws `dW_k`, `dB_k` from the keyed stream of the path, reads
//! `theta_k` from the control, forms
//! `dz = beta dt + sigma dW + sigma_bar dB` at `(t_k, X_k, W_k)` and
//! projects onto `[0, b]`. The cost uses left-endpoint quadrature:
//!
//! ```text
//! J = sum f(t_k, X_k, theta_k, W_k) dt - sum g0(t_k) dL_k + sum gb(t_k) dU_k + G(X_N, W_N).
//! ```
//!
//! The lower-boundary term carries a minus sign: with the outward normal at
//! 0 pointing left, `Du(0) = g0` enters the expansion of `u(X)` as
//! `+g0 dL`, so the cost it prices is `-g0 dL`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::PolicyField;
use crate::model::{Grid, Scenario};
use crate::rng::PathStream;
use crate::skorokhod::{reflect_step, ReflectStep, ReflectedPath};

/// Admissible controls supported by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Control {
    Constant(f64),
    /// Open-loop value per time step, `len = nt`.
    Sequence(Vec<f64>),
    /// Nearest-node lookup in a policy table.
    Feedback(PolicyField),
}

impl Control {
    pub fn describe(&self) -> String {
        match self {
            Control::Constant(th) => format!("constant {th}"),
            Control::Sequence(seq) => {
                let mut pieces: Vec<String> = Vec::new();
                let mut start = 0;
                for k in 1..=seq.len() {
                    if k == seq.len() || seq[k] != seq[start] {
                        pieces.push(format!("[{start},{k}):{}", seq[start]));
                        start = k;
                    }
                }
                format!("piecewise {}", pieces.join(" "))
            }
            Control::Feedback(p) => format!("feedback from {}", p.source),
        }
    }

    fn check(&self, s: &Scenario, grid: &Grid) -> Result<()> {
        match self {
            Control::Constant(th) => check_member(s, *th),
            Control::Sequence(seq) => {
                if seq.len() != grid.nt() {
                    return Err(Error::Dimension(format!("control sequence has {} steps, grid has {}", seq.len(), grid.nt())));
                }
                seq.iter().try_for_each(|&th| check_member(s, th))
            }
            Control::Feedback(p) => {
                if !p.matches(grid) {
                    return Err(Error::Dimension(format!(
                        "policy table does not match the {}x{} grid",
                        grid.nt() + 1,
                        grid.nx() + 1
                    )));
                }
                Ok(())
            }
        }
    }

    fn theta(&self, grid: &Grid, k: usize, x: f64) -> f64 {
        match self {
            Control::Constant(th) => *th,
            Control::Sequence(seq) => seq[k],
            Control::Feedback(p) => p.lookup(grid, k, x),
        }
    }
}

fn check_member(s: &Scenario, th: f64) -> Result<()> {
    if s.controls.contains(th) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("control {th} is not in the control set")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimOptions {
    /// Negate every Gaussian draw.
    pub antithetic: bool,
}

/// One simulated path with its realized noise and controls.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path: ReflectedPath,
    /// `dw[k]`, `db[k]`, `theta[k]` drive step `k -> k+1`.
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
    pub theta: Vec<f64>,
    /// Discrete `W_k`, `len = nt + 1`.
    pub w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBatch {
    pub scenario: String,
    pub barrier: f64,
    pub horizon: f64,
    pub grid: Grid,
    pub seed: u64,
    pub x0: f64,
    pub control: String,
    pub antithetic: bool,
    pub paths: Vec<PathRecord>,
}

impl SimBatch {
    pub fn npaths(&self) -> usize {
        self.paths.len()
    }

    /// Largest number of oversized steps on any path.
    pub fn oversized_steps(&self) -> usize {
        self.paths.iter().map(|p| p.path.oversized_steps).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostSample {
    pub running: f64,
    pub lower_boundary: f64,
    pub upper_boundary: f64,
    pub terminal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostSummary {
    pub samples: Vec<CostSample>,
    /// Componentwise sample means.
    pub mean: CostSample,
    /// Standard error of the mean total cost.
    pub stderr: f64,
}

impl CostSummary {
    pub fn from_samples(samples: Vec<CostSample>) -> Self {
        let n = samples.len().max(1) as f64;
        let mut mean = CostSample::default();
        for c in &samples {
            mean.running += c.running;
            mean.lower_boundary += c.lower_boundary;
            mean.upper_boundary += c.upper_boundary;
            mean.terminal += c.terminal;
            mean.total += c.total;
        }
        mean.running /= n;
        mean.lower_boundary /= n;
        mean.upper_boundary /= n;
        mean.terminal /= n;
        mean.total /= n;
        let stderr = if samples.len() > 1 {
            let var = samples.iter().map(|c| (c.total - mean.total).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { samples, mean, stderr }
    }
}

#[derive(Default)]
struct CostAccumulator {
    running: f64,
    lower: f64,
    upper: f64,
}

impl CostAccumulator {
    #[allow(clippy::too_many_arguments)]
    fn add(&mut self, s: &Scenario, t: f64, x: f64, theta: f64, w: f64, dl: f64, du: f64, dt: f64) {
        self.running += (s.running_cost)(t, x, theta, w) * dt;
        if dl != 0.0 {
            self.lower -= (s.g0)(t, w) * dl;
        }
        if du != 0.0 {
            self.upper += (s.gb)(t, w) * du;
        }
    }

    fn finish(self, s: &Scenario, x: f64, w: f64) -> CostSample {
        let terminal = (s.terminal)(x, w);
        CostSample {
            running: self.running,
            lower_boundary: self.lower,
            upper_boundary: self.upper,
            terminal,
            total: self.running + self.lower + self.upper + terminal,
        }
    }
}

/// Runs one path; `on_step(k, x_k, theta_k, w_k, dw, db, dz, step)` sees every step.
#[allow(clippy::too_many_arguments)]
fn run_path(
    s: &Scenario,
    control: &Control,
    x0: f64,
    seed: u64,
    index: u64,
    grid: &Grid,
    opts: SimOptions,
    on_step: impl FnMut(usize, f64, f64, f64, f64, f64, f64, ReflectStep),
) -> Result<(f64, f64)> {
    let mut stream = if opts.antithetic { PathStream::antithetic(seed, index) } else { PathStream::new(seed, index) };
    let dt = grid.dt();
    run_path_with_noise(s, control, x0, grid, |k| stream.increments(k as u64, dt), on_step)
}

fn run_path_with_noise(
    s: &Scenario,
    control: &Control,
    x0: f64,
    grid: &Grid,
    mut noise: impl FnMut(usize) -> (f64, f64),
    mut on_step: impl FnMut(usize, f64, f64, f64, f64, f64, f64, ReflectStep),
) -> Result<(f64, f64)> {
    let b = grid.barrier();
    let dt = grid.dt();
    let mut x = x0;
    let mut w = 0.0;
    for k in 0..grid.nt() {
        let t = grid.t(k);
        let (dw, db) = noise(k);
        let theta = control.theta(grid, k, x);
        let dz = (s.beta)(t, x, theta, w) * dt + (s.sigma)(t, x, w) * dw + (s.sigma_bar)(t, x, w) * db;
        let step = reflect_step(x, dz, b)?;
        on_step(k, x, theta, w, dw, db, dz, step);
        x = step.state;
        w += dw;
    }
    Ok((x, w))
}

fn check_inputs(s: &Scenario, control: &Control, x0: f64, grid: &Grid) -> Result<()> {
    s.check_grid(grid)?;
    if !(0.0..=grid.barrier()).contains(&x0) {
        return Err(Error::Domain { x: x0, barrier: grid.barrier() });
    }
    control.check(s, grid)
}

pub fn simulate_paths(s: &Scenario, control: &Control, x0: f64, seed: u64, grid: &Grid, npaths: usize) -> Result<SimBatch> {
    simulate_paths_with(s, control, x0, seed, grid, npaths, SimOptions::default())
}

/// Simulates `npaths` independent paths; path `p` uses stream `p` of `seed`.
pub fn simulate_paths_with(
    s: &Scenario,
    control: &Control,
    x0: f64,
    seed: u64,
    grid: &Grid,
    npaths: usize,
    opts: SimOptions,
) -> Result<SimBatch> {
    check_inputs(s, control, x0, grid)?;
    let nt = grid.nt();
    let paths = (0..npaths as u64)
        .into_par_iter()
        .map(|p| {
            let mut path = ReflectedPath::start(x0, grid.barrier(), nt + 1)?;
            let mut dws = Vec::with_capacity(nt);
            let mut dbs = Vec::with_capacity(nt);
            let mut thetas = Vec::with_capacity(nt);
            let mut ws = Vec::with_capacity(nt + 1);
            ws.push(0.0);
            run_path(s, control, x0, seed, p, grid, opts, |k, _x, th, w, dw, db, dz, step| {
                dws.push(dw);
                dbs.push(db);
                thetas.push(th);
                ws.push(w + dw);
                path.record(grid.t(k + 1), step, dz, grid.barrier());
            })?;
            Ok(PathRecord { path, dw: dws, db: dbs, theta: thetas, w: ws })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimBatch {
        scenario: s.name.clone(),
        barrier: grid.barrier(),
        horizon: grid.horizon(),
        grid: *grid,
        seed,
        x0,
        control: control.describe(),
        antithetic: opts.antithetic,
        paths,
    })
}

/// Pathwise costs of a batch with their mean and standard error.
pub fn evaluate_cost(batch: &SimBatch, s: &Scenario) -> Result<CostSummary> {
    if batch.scenario != s.name || batch.barrier != s.barrier || batch.horizon != s.horizon {
        return Err(Error::ScenarioMismatch(format!(
            "batch was simulated for '{}' on [0,{}] up to {}, not '{}' on [0,{}] up to {}",
            batch.scenario, batch.barrier, batch.horizon, s.name, s.barrier, s.horizon
        )));
    }
    let grid = &batch.grid;
    let dt = grid.dt();
    let samples = batch
        .paths
        .par_iter()
        .map(|rec| {
            let mut acc = CostAccumulator::default();
            let states = &rec.path.states;
            for k in 0..grid.nt() {
                acc.add(s, grid.t(k), states[k], rec.theta[k], rec.w[k], rec.path.d_lower[k + 1], rec.path.d_upper[k + 1], dt);
            }
            acc.finish(s, states[grid.nt()], rec.w[grid.nt()])
        })
        .collect();
    Ok(CostSummary::from_samples(samples))
}

/// Costs only, without storing the paths. Identical to evaluating the
/// batch from [`simulate_paths_with`] on the same inputs.
pub fn simulate_costs(
    s: &Scenario,
    control: &Control,
    x0: f64,
    seed: u64,
    grid: &Grid,
    npaths: usize,
    opts: SimOptions,
) -> Result<CostSummary> {
    check_inputs(s, control, x0, grid)?;
    let dt = grid.dt();
    let samples = (0..npaths as u64)
        .into_par_iter()
        .map(|p| {
            let mut acc = CostAccumulator::default();
            let (x, w) = run_path(s, control, x0, seed, p, grid, opts, |k, x, th, w, _dw, _db, _dz, step| {
                acc.add(s, grid.t(k), x, th, w, step.d_lower, step.d_upper, dt);
            })?;
            Ok(acc.finish(s, x, w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CostSummary::from_samples(samples))
}

/// Costs on a coarse grid and on a grid `factor` times finer in time,
/// driven by the same Brownian paths: each coarse increment is the sum of
/// `factor` consecutive fine increments of the keyed stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledCosts {
    pub coarse: CostSummary,
    pub fine: CostSummary,
    /// Mean of `coarse - fine` total cost per path.
    pub mean_difference: f64,
    pub stderr_difference: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_costs_coupled(
    s: &Scenario,
    coarse_control: &Control,
    coarse: &Grid,
    fine_control: &Control,
    fine: &Grid,
    x0: f64,
    seed: u64,
    npaths: usize,
) -> Result<CoupledCosts> {
    check_inputs(s, coarse_control, x0, coarse)?;
    check_inputs(s, fine_control, x0, fine)?;
    if !fine.nt().is_multiple_of(coarse.nt()) {
        return Err(Error::Dimension(format!("fine steps {} are not a multiple of coarse steps {}", fine.nt(), coarse.nt())));
    }
    let factor = fine.nt() / coarse.nt();
    let dt = fine.dt();
    let pairs = (0..npaths as u64)
        .into_par_iter()
        .map(|p| {
            let cost = |grid: &Grid, control: &Control, agg: usize| -> Result<CostSample> {
                let mut stream = PathStream::new(seed, p);
                let mut acc = CostAccumulator::default();
                let noise = |k: usize| {
                    (0..agg).fold((0.0, 0.0), |(a, b), r| {
                        let (dw, db) = stream.increments((k * agg + r) as u64, dt);
                        (a + dw, b + db)
                    })
                };
                let (x, w) = run_path_with_noise(s, control, x0, grid, noise, |k, x, th, w, _dw, _db, _dz, step| {
                    acc.add(s, grid.t(k), x, th, w, step.d_lower, step.d_upper, grid.dt());
                })?;
                Ok(acc.finish(s, x, w))
            };
            Ok((cost(coarse, coarse_control, factor)?, cost(fine, fine_control, 1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<CostSample> = pairs
        .iter()
        .map(|(c, f)| CostSample { total: c.total - f.total, ..CostSample::default() })
        .collect();
    let d = CostSummary::from_samples(diffs);
    let (c, f): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(CoupledCosts {
        coarse: CostSummary::from_samples(c),
        fine: CostSummary::from_samples(f),
        mean_difference: d.mean.total,
        stderr_difference: d.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ControlSet;

    fn still() -> Scenario {
        Scenario::new("still", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0]).unwrap())
            .with_beta(|_, _, th, _| th)
            .with_sigma_bar(|_, _, _| 0.0)
    }

    #[test]
    fn degenerate_dynamics_stay_put() {
        let s = still();
        let grid = s.grid(10, 50).unwrap();
        let batch = simulate_paths(&s, &Control::Constant(0.0), 0.4, 1, &grid, 5).unwrap();
        for rec in &batch.paths {
            assert!(rec.path.states.iter().all(|&x| x == 0.4));
            assert!(rec.path.lower.iter().chain(&rec.path.upper).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn drift_into_barrier_accumulates_local_time() {
        let s = still();
        let grid = s.grid(10, 1000).unwrap();
        let batch = simulate_paths(&s, &Control::Constant(-1.0), 0.3, 1, &grid, 1).unwrap();
        let p = &batch.paths[0].path;
        assert!((p.lower[1000] - 0.7).abs() <= grid.dt() + 1e-12);
        assert_eq!(p.upper[1000], 0.0);
        let hit = p.states.iter().position(|&x| x == 0.0).unwrap();
        assert!((grid.t(hit) - 0.3).abs() <= grid.dt() + 1e-12);
    }

    #[test]
    fn constant_terminal_cost_has_zero_stderr() {
        let s = Scenario::new("c", 1.0, 1.0, ControlSet::single(0.0)).with_terminal(|_, _| 2.5);
        let grid = s.grid(10, 20).unwrap();
        let batch = simulate_paths(&s, &Control::Constant(0.0), 0.5, 3, &grid, 50).unwrap();
        let c = evaluate_cost(&batch, &s).unwrap();
        assert!(c.samples.iter().all(|x| x.total == 2.5));
        assert_eq!(c.stderr, 0.0);
    }

    #[test]
    fn streaming_costs_match_batch_costs() {
        let s = Scenario::new("m", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0, 1.0]).unwrap())
            .with_beta(|_, _, th, _| th)
            .with_sigma(|_, x, _| 0.3 * x * (1.0 - x))
            .with_sigma_bar(|_, _, w| 0.5 + 0.1 * w.tanh())
            .with_running_cost(|_, x, th, w| th.abs() + x + 0.1 * w)
            .with_boundary(|_, _| 0.3, |t, _| 1.0 + t)
            .with_terminal(|x, w| x * x + w);
        let grid = s.grid(10, 100).unwrap();
        let policy = PolicyField::constant(&grid, 1.0, "test");
        for control in [Control::Constant(-1.0), Control::Feedback(policy)] {
            let batch = simulate_paths(&s, &control, 0.2, 9, &grid, 64).unwrap();
            let a = evaluate_cost(&batch, &s).unwrap();
            let b = simulate_costs(&s, &control, 0.2, 9, &grid, 64, SimOptions::default()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn feedback_reads_the_nearest_node() {
        let s = still();
        let grid = s.grid(10, 10).unwrap();
        let mut policy = PolicyField::constant(&grid, 0.0, "test");
        policy.table[0][4] = -1.0;
        let batch = simulate_paths(&s, &Control::Feedback(policy), 0.41, 0, &grid, 1).unwrap();
        assert_eq!(batch.paths[0].theta[0], -1.0);
        assert_eq!(batch.paths[0].theta[1], 0.0);
    }

    #[test]
    fn rejects_mismatches() {
        let s = still();
        let grid = s.grid(10, 10).unwrap();
        let bad = PolicyField::constant(&s.grid(5, 10).unwrap(), 0.0, "x");
        assert!(matches!(simulate_paths(&s, &Control::Feedback(bad), 0.5, 0, &grid, 1), Err(Error::Dimension(_))));
        assert!(matches!(simulate_paths(&s, &Control::Sequence(vec![0.0; 3]), 0.5, 0, &grid, 1), Err(Error::Dimension(_))));
        assert!(matches!(simulate_paths(&s, &Control::Constant(0.5), 0.5, 0, &grid, 1), Err(Error::Parameter(_))));
        assert!(matches!(simulate_paths(&s, &Control::Constant(0.0), 1.5, 0, &grid, 1), Err(Error::Domain { .. })));
        let batch = simulate_paths(&s, &Control::Constant(0.0), 0.5, 0, &grid, 1).unwrap();
        let mut other = s.clone();
        other.name = "other".into();
        assert!(matches!(evaluate_cost(&batch, &other), Err(Error::ScenarioMismatch(_))));
    }

    #[test]
    fn coupled_fine_leg_matches_plain_simulation() {
        let s = Scenario::new("m", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0]).unwrap())
            .with_beta(|_, _, th, _| th)
            .with_sigma_bar(|_, _, _| 0.5)
            .with_boundary(|_, _| 0.0, |_, _| 1.0);
        let (coarse, fine) = (s.grid(10, 20).unwrap(), s.grid(10, 80).unwrap());
        let c = Control::Constant(-1.0);
        let r = simulate_costs_coupled(&s, &c, &coarse, &c, &fine, 0.5, 3, 50).unwrap();
        let plain = simulate_costs(&s, &c, 0.5, 3, &fine, 50, SimOptions::default()).unwrap();
        assert_eq!(r.fine, plain);
        let same = simulate_costs_coupled(&s, &c, &fine, &c, &fine, 0.5, 3, 50).unwrap();
        assert_eq!(same.mean_difference, 0.0);
        assert!(matches!(simulate_costs_coupled(&s, &c, &s.grid(10, 30).unwrap(), &c, &fine, 0.5, 3, 5), Err(Error::Dimension(_))));
    }

    #[test]
    fn describes_piecewise_sequences() {
        let c = Control::Sequence(vec![0.0, 0.0, -1.0, -1.0, -1.0]);
        assert_eq!(c.describe(), "piecewise [0,2):0 [2,5):-1");
    }
}
