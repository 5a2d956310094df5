//! Statistical verification that a solved field is the value function.
//!
//! Every challenger cost must dominate `u(0, x0)` and the feedback policy
//! read from the field must attain it, both up to three standard errors
//! plus a discretization allowance `tol_disc`. All simulations share one
//! seed, so the comparisons use common random numbers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hamiltonian::PolicyField;
use crate::hjb::{solve_hjb, ValueField};
use crate::io::num;
use crate::model::{Grid, Scenario};
use crate::rsde::{simulate_costs, simulate_costs_coupled, Control, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McConfig {
    pub npaths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChallengerResult {
    pub description: String,
    pub mean: f64,
    pub stderr: f64,
    /// `mean - u0`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub u0: f64,
    pub x0: f64,
    pub challengers: Vec<ChallengerResult>,
    pub optimal_mean: f64,
    pub optimal_stderr: f64,
    /// `|u0 - optimal_mean|`.
    pub gap: f64,
    pub tol_disc: f64,
    pub pass_inequality: bool,
    pub pass_equality: bool,
    /// Feedback mean within `6 * combined stderr` below every challenger.
    pub feedback_dominates: bool,
    pub npaths: usize,
    pub seed: u64,
    pub nx: usize,
    pub nt: usize,
}

impl VerifyReport {
    pub fn passes(&self) -> bool {
        self.pass_inequality && self.pass_equality
    }

    /// `key=value` lines with one block per challenger.
    pub fn summary_pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<(String, String)> = vec![
            ("u0".into(), num(self.u0)),
            ("x0".into(), num(self.x0)),
            ("optimal_mean".into(), num(self.optimal_mean)),
            ("optimal_stderr".into(), num(self.optimal_stderr)),
            ("gap".into(), num(self.gap)),
            ("tol_disc".into(), num(self.tol_disc)),
            ("pass_inequality".into(), self.pass_inequality.to_string()),
            ("pass_equality".into(), self.pass_equality.to_string()),
            ("feedback_dominates".into(), self.feedback_dominates.to_string()),
            ("npaths".into(), self.npaths.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("nx".into(), self.nx.to_string()),
            ("nt".into(), self.nt.to_string()),
            ("challengers".into(), self.challengers.len().to_string()),
        ];
        for (n, c) in self.challengers.iter().enumerate() {
            v.push((format!("challenger.{n}.control"), c.description.clone()));
            v.push((format!("challenger.{n}.mean"), num(c.mean)));
            v.push((format!("challenger.{n}.stderr"), num(c.stderr)));
            v.push((format!("challenger.{n}.margin"), num(c.margin)));
        }
        v
    }

    pub fn challenger_csv(&self) -> String {
        let mut out = String::from("index,control,mean,stderr,margin\n");
        for (n, c) in self.challengers.iter().enumerate() {
            out.push_str(&format!("{n},{},{},{},{}\n", c.description, num(c.mean), num(c.stderr), num(c.margin)));
        }
        out
    }
}

/// Requires `sigma = 0` at both barriers over the time grid.
pub fn check_verification_hypothesis(s: &Scenario, grid: &Grid) -> Result<()> {
    if !s.is_deterministic() {
        return Err(Error::Hypothesis("verification needs deterministic coefficients".into()));
    }
    for k in 0..=grid.nt() {
        let t = grid.t(k);
        for x in [0.0, s.barrier] {
            let v = (s.sigma)(t, x, 0.0);
            if v != 0.0 {
                return Err(Error::Hypothesis(format!("sigma({t}, {x}) = {v} must vanish at the barriers")));
            }
        }
    }
    Ok(())
}

pub fn verify_value(
    v: &ValueField,
    s: &Scenario,
    x0: f64,
    challengers: &[Control],
    mc: McConfig,
    tol_disc: f64,
) -> Result<VerifyReport> {
    let grid = &v.grid;
    check_verification_hypothesis(s, grid)?;
    s.check_grid(grid)?;
    if !(0.0..=grid.barrier()).contains(&x0) {
        return Err(Error::Domain { x: x0, barrier: grid.barrier() });
    }
    let u0 = v.u0(x0);
    let run = |c: &Control| simulate_costs(s, c, x0, mc.seed, grid, mc.npaths, SimOptions::default());

    let optimal = run(&Control::Feedback(v.policy.clone()))?;
    let results = challengers.par_iter().map(|c| run(c).map(|r| (c.describe(), r))).collect::<Result<Vec<_>>>()?;

    let challengers: Vec<ChallengerResult> = results
        .into_iter()
        .map(|(description, r)| ChallengerResult { description, mean: r.mean.total, stderr: r.stderr, margin: r.mean.total - u0 })
        .collect();
    let pass_inequality = challengers.iter().all(|c| c.margin >= -3.0 * c.stderr - tol_disc);
    let gap = (u0 - optimal.mean.total).abs();
    let pass_equality = gap <= 3.0 * optimal.stderr + tol_disc;
    let feedback_dominates = challengers
        .iter()
        .all(|c| optimal.mean.total <= c.mean + 6.0 * (c.stderr.powi(2) + optimal.stderr.powi(2)).sqrt());

    Ok(VerifyReport {
        u0,
        x0,
        challengers,
        optimal_mean: optimal.mean.total,
        optimal_stderr: optimal.stderr,
        gap,
        tol_disc,
        pass_inequality,
        pass_equality,
        feedback_dominates,
        npaths: mc.npaths,
        seed: mc.seed,
        nx: grid.nx(),
        nt: grid.nt(),
    })
}

/// Constant controls at both ends of the control set plus five random
/// piecewise-constant open-loop controls with two to five pieces.
pub fn shipped_challengers(s: &Scenario, grid: &Grid, seed: u64) -> Vec<Control> {
    let thetas = s.controls.candidates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![Control::Constant(s.controls.max()), Control::Constant(s.controls.min())];
    let nt = grid.nt();
    for _ in 0..5 {
        let pieces = 2 + (rng.next_u32() % 4) as usize;
        let mut cuts: Vec<usize> = (1..pieces).map(|_| 1 + (rng.next_u64() as usize) % (nt.max(2) - 1)).collect();
        cuts.sort_unstable();
        cuts.push(nt);
        let mut seq = Vec::with_capacity(nt);
        for cut in cuts {
            let th = thetas[(rng.next_u32() as usize) % thetas.len()];
            while seq.len() < cut {
                seq.push(th);
            }
        }
        out.push(Control::Sequence(seq));
    }
    out
}

/// The field's feedback policy with each entry replaced, with probability
/// `flip`, by a uniformly drawn control candidate.
pub fn perturbed_feedback(v: &ValueField, s: &Scenario, flip: f64, seed: u64) -> Control {
    let thetas = s.controls.candidates();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = v.policy.table.clone();
    for th in table.iter_mut().flatten() {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let pick = thetas[(rng.next_u32() as usize) % thetas.len()];
        if u < flip {
            *th = pick;
        }
    }
    Control::Feedback(PolicyField { table, source: format!("{} perturbed {flip}", v.policy.source) })
}

/// Twice the change in `u(0, x0)` between solves on `(nx, nt)` and `(2nx, 4nt)`.
pub fn calibrate_tol_disc(s: &Scenario, nx: usize, nt: usize, x0: f64) -> Result<f64> {
    Ok(Calibration::solver_only(s, nx, nt, x0)?.tol_disc())
}

/// Discretization allowance with its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    /// `u(0, x0)` on `(nx, nt)` minus the same on `(2nx, 4nt)`.
    pub solver_change: f64,
    /// Mean feedback cost simulated on `nt` steps minus the same on `4nt`
    /// steps along coupled Brownian paths; zero when not measured.
    pub simulation_change: f64,
    pub simulation_stderr: f64,
}

impl Calibration {
    pub fn solver_only(s: &Scenario, nx: usize, nt: usize, x0: f64) -> Result<Self> {
        let coarse = solve_hjb(s, &s.grid(nx, nt)?)?;
        let fine = solve_hjb(s, &s.grid(2 * nx, 4 * nt)?)?;
        Ok(Self { solver_change: coarse.u0(x0) - fine.u0(x0), simulation_change: 0.0, simulation_stderr: 0.0 })
    }

    /// Adds the time-refinement change of the simulated feedback cost, so
    /// the allowance also covers the reflected Euler scheme's bias.
    pub fn with_simulation(s: &Scenario, nx: usize, nt: usize, x0: f64, mc: McConfig) -> Result<Self> {
        let (cg, fg) = (s.grid(nx, nt)?, s.grid(2 * nx, 4 * nt)?);
        let (coarse, fine) = (solve_hjb(s, &cg)?, solve_hjb(s, &fg)?);
        let sim = simulate_costs_coupled(
            s,
            &Control::Feedback(coarse.policy.clone()),
            &cg,
            &Control::Feedback(fine.policy.clone()),
            &fg,
            x0,
            mc.seed,
            mc.npaths,
        )?;
        Ok(Self {
            solver_change: coarse.u0(x0) - fine.u0(x0),
            simulation_change: sim.mean_difference,
            simulation_stderr: sim.stderr_difference,
        })
    }

    /// `2 (|solver change| + |simulation change|)`.
    pub fn tol_disc(&self) -> f64 {
        2.0 * (self.solver_change.abs() + self.simulation_change.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ControlSet;

    #[test]
    fn zero_scenario_passes_trivially() {
        let s = Scenario::new("zero", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0, 1.0]).unwrap()).with_beta(|_, _, th, _| th);
        let grid = s.grid(10, 20).unwrap();
        let v = solve_hjb(&s, &grid).unwrap();
        let ch = shipped_challengers(&s, &grid, 1);
        assert_eq!(ch.len(), 7);
        let r = verify_value(&v, &s, 0.5, &ch, McConfig { npaths: 200, seed: 3 }, 0.0).unwrap();
        assert_eq!(r.u0, 0.0);
        assert!(r.challengers.iter().all(|c| c.mean == 0.0 && c.stderr == 0.0));
        assert!(r.passes() && r.feedback_dominates);
    }

    #[test]
    fn hypothesis_is_enforced() {
        let s = Scenario::new("bad", 1.0, 1.0, ControlSet::single(0.0)).with_sigma(|_, _, _| 0.1);
        let grid = s.grid(10, 10).unwrap();
        let v = solve_hjb(&s, &grid).unwrap();
        assert!(matches!(verify_value(&v, &s, 0.5, &[], McConfig { npaths: 10, seed: 0 }, 0.0), Err(Error::Hypothesis(_))));
    }

    #[test]
    fn challengers_are_admissible_and_seeded() {
        let s = Scenario::new("c", 1.0, 1.0, ControlSet::interval(-1.0, 0.0, 11).unwrap());
        let grid = s.grid(10, 40).unwrap();
        let a = shipped_challengers(&s, &grid, 5);
        assert_eq!(a, shipped_challengers(&s, &grid, 5));
        for c in &a {
            if let Control::Sequence(seq) = c {
                assert_eq!(seq.len(), 40);
                assert!(seq.iter().all(|&th| s.controls.contains(th)));
            }
        }
    }
}
