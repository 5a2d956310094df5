//! Quick invariant suite run by the `selftest` subcommand. Each check
//! prints one `PASS` or `FAIL` line.

use std::f64::consts::PI;
use std::io::Write;

use crate::bspde::{solve_linear_tree, TreeOptions};
use crate::config::load_scenario;
use crate::harness::ikw::{ikw_residual_on_path, AnalyticField};
use crate::hjb::{neumann_residual, solve_hjb, solve_hjb_lifted, SolveOptions};
use crate::model::{validate_scenario, CoefficientMode, ControlSet, Scenario};
use crate::rng::{keyed_normal, CHANNEL_W};
use crate::rsde::{evaluate_cost, simulate_costs, simulate_paths, Control, SimOptions};
use crate::skorokhod::reflect_path;

type Check = fn() -> std::result::Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: crate::Error) -> String {
    e.to_string()
}

fn skorokhod_invariants() -> std::result::Result<(), String> {
    for p in 0..200u64 {
        let dz: Vec<f64> = (0..500).map(|k| 0.05 * keyed_normal(17, p, k, CHANNEL_W)).collect();
        let path = reflect_path(0.5, &dz, 1.0).map_err(err)?;
        ensure(path.states.iter().all(|&x| (0.0..=1.0).contains(&x)), || format!("path {p} left [0, 1]"))?;
        ensure(path.lower_complementarity() == 0.0 && path.upper_complementarity(1.0) == 0.0, || {
            format!("path {p} breaks complementarity")
        })?;
        ensure(path.lower.windows(2).all(|w| w[0] <= w[1]) && path.upper.windows(2).all(|w| w[0] <= w[1]), || {
            format!("path {p} has decreasing local time")
        })?;
    }
    Ok(())
}

fn heat_oracle() -> std::result::Result<(), String> {
    let s = load_scenario("heat_eigen").map_err(err)?.scenario;
    let grid = s.grid(50, 100).map_err(err)?;
    let v = solve_hjb(&s, &grid).map_err(err)?;
    let mut e = 0.0_f64;
    for k in 0..=grid.nt() {
        for i in 0..=grid.nx() {
            let exact = (-PI * PI * (0.5 - grid.t(k)) / 2.0).exp() * (PI * grid.x(i)).cos();
            e = e.max((v.u[k][i] - exact).abs());
        }
    }
    ensure(e < 2e-2, || format!("max error {e:.3e}"))?;
    let (r0, rb) = neumann_residual(&v, &s);
    ensure(r0.max(rb) < 1e-2, || format!("Neumann residual {r0:.3e}/{rb:.3e}"))
}

fn zero_scenario() -> std::result::Result<(), String> {
    let s = load_scenario("zero").map_err(err)?.scenario;
    let v = solve_hjb(&s, &s.grid(10, 20).map_err(err)?).map_err(err)?;
    ensure(v.u.iter().flatten().all(|&x| x == 0.0), || "nonzero value".into())
}

fn lift_consistency() -> std::result::Result<(), String> {
    let s = load_scenario("example21").map_err(err)?.scenario;
    let grid = s.grid(40, 160).map_err(err)?;
    let a = solve_hjb(&s, &grid).map_err(err)?;
    let b = solve_hjb_lifted(&s, &grid, SolveOptions::default()).map_err(err)?;
    let d = a.u.iter().flatten().zip(b.u.iter().flatten()).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    ensure(d < 1e-10, || format!("direct and lifted solves differ by {d:.3e}"))
}

fn example21_policy() -> std::result::Result<(), String> {
    let s = load_scenario("example21").map_err(err)?.scenario;
    let v = solve_hjb(&s, &s.grid(40, 160).map_err(err)?).map_err(err)?;
    for (row, drow) in v.policy.table.iter().zip(&v.du) {
        for (&th, &du) in row.iter().zip(drow) {
            // Exact ties at Du = mu go to the smallest control.
            let expected = if du >= 0.3 { -1.0 } else { 0.0 };
            ensure(th == expected, || format!("policy {th} at Du = {du}"))?;
        }
    }
    Ok(())
}

fn comparison() -> std::result::Result<(), String> {
    let base = Scenario::new("cmp", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0, 1.0]).map_err(err)?)
        .with_beta(|_, _, th, _| th)
        .with_sigma_bar(|_, _, _| 0.5)
        .with_boundary(|_, _| 0.0, |_, _| 0.5)
        .with_terminal(|x, _| x);
    let lo = base.clone().with_running_cost(|_, x, th, _| x * th.abs());
    let hi = base.with_running_cost(|_, x, th, _| x * th.abs() + 0.1 * x);
    let grid = lo.grid(20, 40).map_err(err)?;
    let (a, b) = (solve_hjb(&lo, &grid).map_err(err)?, solve_hjb(&hi, &grid).map_err(err)?);
    let ok = a.u.iter().flatten().zip(b.u.iter().flatten()).all(|(x, y)| x <= y);
    ensure(ok, || "comparison violated".into())?;
    ensure(a.u.iter().flatten().all(|&x| x >= 0.0), || "positivity violated".into())
}

fn tree_martingale() -> std::result::Result<(), String> {
    let s = Scenario::new("mart", 1.0, 1.0, ControlSet::single(0.0))
        .with_terminal(|_, w| w * w)
        .with_mode(CoefficientMode::WMarkovian);
    let grid = s.grid(4, 8).map_err(err)?;
    let ts = solve_linear_tree(&s, &|_, _, _| 0.0, &grid).map_err(err)?;
    for k in 0..=8 {
        for m in 0..=k {
            let w = ts.w(k, m);
            let exact = w * w + (1.0 - grid.t(k));
            let e = ts.u[k][m].iter().fold(0.0_f64, |a, &u| a.max((u - exact).abs()));
            ensure(e <= 1e-12, || format!("node ({k}, {m}) off by {e:.3e}"))?;
        }
    }
    Ok(())
}

fn tree_collapse() -> std::result::Result<(), String> {
    let s = load_scenario("heat_eigen").map_err(err)?.scenario;
    let grid = s.grid(20, 40).map_err(err)?;
    let ts = crate::bspde::solve_hjb_tree(&s, &grid, TreeOptions::default()).map_err(err)?;
    let v = solve_hjb(&s, &grid).map_err(err)?;
    ensure(ts.max_abs_psi() <= 1e-12, || format!("max |psi| = {:.3e}", ts.max_abs_psi()))?;
    let d = ts.u[0][0].iter().zip(&v.u[0]).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    ensure(d <= 2e-3, || format!("tree and HJB differ by {d:.3e}"))
}

fn simulation_consistency() -> std::result::Result<(), String> {
    let s = load_scenario("example21").map_err(err)?.scenario;
    let grid = s.grid(20, 80).map_err(err)?;
    let control = Control::Constant(-1.0);
    let a = simulate_paths(&s, &control, 0.5, 5, &grid, 100).map_err(err)?;
    let b = simulate_paths(&s, &control, 0.5, 5, &grid, 100).map_err(err)?;
    ensure(a == b, || "batches differ between runs".into())?;
    let c = evaluate_cost(&a, &s).map_err(err)?;
    let d = simulate_costs(&s, &control, 0.5, 5, &grid, 100, SimOptions::default()).map_err(err)?;
    ensure(c == d, || "streaming and batch costs differ".into())
}

fn ikw_quadratic() -> std::result::Result<(), String> {
    let s = Scenario::new("q", 1.0, 1.0, ControlSet::single(0.0)).with_sigma_bar(|_, _, _| 0.05);
    let grid = s.grid(10, 200).map_err(err)?;
    let f = AnalyticField { grid, f: |_, x: f64| x * x, fx: |_, x| 2.0 * x, fxx: |_, _| 2.0 };
    let batch = simulate_paths(&s, &Control::Constant(0.0), 0.5, 2, &grid, 10).map_err(err)?;
    let r = batch.paths.iter().map(|p| ikw_residual_on_path(&f, &s, p, &grid)).fold(0.0, f64::max);
    ensure(r <= 1e-8, || format!("residual {r:.3e}"))
}

fn assumptions() -> std::result::Result<(), String> {
    let s = load_scenario("example21").map_err(err)?.scenario;
    let r = validate_scenario(&s, 2000, 1);
    ensure(r.passes(), || format!("{r:?}"))
}

const CHECKS: [(&str, Check); 11] = [
    ("skorokhod invariants", skorokhod_invariants),
    ("heat eigenfunction oracle", heat_oracle),
    ("zero scenario", zero_scenario),
    ("boundary lift consistency", lift_consistency),
    ("bang-bang policy", example21_policy),
    ("comparison and positivity", comparison),
    ("tree martingale exactness", tree_martingale),
    ("tree deterministic collapse", tree_collapse),
    ("simulation reproducibility", simulation_consistency),
    ("quadratic expansion residual", ikw_quadratic),
    ("example assumptions", assumptions),
];

/// Runs every check, writing one line each; true when all pass.
pub fn run_selftest(out: &mut impl Write) -> bool {
    let mut all = true;
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => {
                let _ = writeln!(out, "PASS {name}");
            }
            Err(msg) => {
                all = false;
                let _ = writeln!(out, "FAIL {name}: {msg}");
            }
        }
    }
    all
}
