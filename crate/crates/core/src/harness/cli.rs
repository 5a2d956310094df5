//! Command-line entry point.
//!
//! Exit codes: 0 on success, 1 when a verification or self-test fails or a
//! solve breaks down numerically, 2 for bad arguments, unreadable scenarios
//! and refused inputs (CFL, hypothesis, parameter errors).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bspde::{energy_identity_residual, lifted_hjb_problem, solve_semilinear_tree_with, TreeOptions};
use crate::config::{load_scenario, LoadedScenario};
use crate::error::{Error, Result};
use crate::harness::selftest::run_selftest;
use crate::harness::verify::{shipped_challengers, verify_value, Calibration, McConfig};
use crate::hjb::{solve_hjb_with, SolveOptions, ValueField};
use crate::io::{batch_csv, cost_csv, key_values, num, read_value_csv, tree_csv, write_value_csv};
use crate::model::Grid;
use crate::rsde::{evaluate_cost, simulate_paths, Control};

#[derive(Debug, Parser)]
#[command(name = "reflected-hjb", version, about = "Neumann HJB and backward SPDE solvers for controlled reflected diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Built-in scenario name (zero, heat_eigen, example21, example21_w) or a scenario file
    #[arg(long, default_value = "example21")]
    scenario: String,
    /// Spatial cells (defaults to the scenario's grid)
    #[arg(long)]
    nx: Option<usize>,
    /// Time steps (defaults to the scenario's grid)
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Initial state (defaults to the middle of the interval)
    #[arg(long)]
    x0: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Solve even when the explicit step violates the CFL bound
    #[arg(long)]
    override_cfl: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the HJB equation and write value.csv
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate paths and write batch.csv and costs.csv
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        /// "feedback" (solved policy) or a constant control value
        #[arg(long, default_value = "feedback", allow_hyphen_values = true)]
        control: String,
    },
    /// Solve the backward SPDE on a Wiener tree; write tree.csv and summary.txt
    Bspde {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
    },
    /// Monte Carlo verification; write verify.txt and challengers.csv
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Value-field CSV from `solve` (otherwise solved in process)
        #[arg(long)]
        value: Option<PathBuf>,
        /// Discretization allowance (otherwise calibrated by a refined solve)
        #[arg(long)]
        tol_disc: Option<f64>,
        /// Widen the calibrated allowance by the simulated cost's change
        /// under time refinement along coupled paths
        #[arg(long)]
        calibrate_simulation: bool,
    },
    /// Run the invariant suite
    Selftest,
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Singular { .. } | Error::NonConvergence { .. } => 1,
        _ => 2,
    }
}

struct Setup {
    loaded: LoadedScenario,
    grid: Grid,
    x0: f64,
}

fn setup(c: &Common) -> Result<Setup> {
    let loaded = load_scenario(&c.scenario)?;
    let s = &loaded.scenario;
    let grid = s.grid(c.nx.unwrap_or(loaded.grid.nx), c.nt.unwrap_or(loaded.grid.nt))?;
    let x0 = c.x0.unwrap_or(0.5 * s.barrier);
    if !(0.0..=s.barrier).contains(&x0) {
        return Err(Error::Domain { x: x0, barrier: s.barrier });
    }
    Ok(Setup { loaded, grid, x0 })
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

fn solve(c: &Common, st: &Setup) -> Result<ValueField> {
    solve_hjb_with(&st.loaded.scenario, &st.grid, SolveOptions { override_cfl: c.override_cfl })
}

fn cmd_solve(c: &Common) -> Result<i32> {
    let st = setup(c)?;
    let v = solve(c, &st)?;
    prepare_out(&c.out)?;
    let path = c.out.join("value.csv");
    write_value_csv(&path, &v)?;
    println!("u0={}", num(v.u0(st.x0)));
    println!("cfl_ratio={}", num(v.scheme.cfl_ratio));
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_simulate(c: &Common, paths: usize, control: &str) -> Result<i32> {
    let st = setup(c)?;
    let s = &st.loaded.scenario;
    let control = if control == "feedback" {
        Control::Feedback(solve(c, &st)?.policy)
    } else {
        let th: f64 = control.parse().map_err(|_| Error::Parameter(format!("control must be 'feedback' or a number, got '{control}'")))?;
        Control::Constant(th)
    };
    let batch = simulate_paths(s, &control, st.x0, c.seed, &st.grid, paths)?;
    let costs = evaluate_cost(&batch, s)?;
    prepare_out(&c.out)?;
    fs::write(c.out.join("batch.csv"), batch_csv(&batch))?;
    fs::write(c.out.join("costs.csv"), cost_csv(&costs))?;
    println!("mean_cost={}", num(costs.mean.total));
    println!("stderr={}", num(costs.stderr));
    println!("oversized_steps={}", batch.oversized_steps());
    Ok(0)
}

fn cmd_bspde(c: &Common, tol: f64, max_iter: usize) -> Result<i32> {
    let st = setup(c)?;
    let (lifted, spec, lift) = lifted_hjb_problem(&st.loaded.scenario, &st.grid);
    let opts = TreeOptions { tol, max_iter, ..TreeOptions::default() };
    let mut ts = solve_semilinear_tree_with(&lifted, &spec, &st.grid, opts)?;
    let energy = energy_identity_residual(&ts, &lifted);
    for (k, layer) in ts.u.iter_mut().enumerate() {
        let t = st.grid.t(k);
        for row in layer.iter_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v += lift.ghat(t, st.grid.x(i));
            }
        }
    }
    prepare_out(&c.out)?;
    fs::write(c.out.join("tree.csv"), tree_csv(&ts))?;
    let u0 = crate::hjb::interpolate(&ts.u[0][0], st.grid.dx(), st.x0);
    let mut pairs = vec![
        ("scenario".to_string(), st.loaded.scenario.name.clone()),
        ("nx".into(), st.grid.nx().to_string()),
        ("nt".into(), st.grid.nt().to_string()),
        ("u0".into(), num(u0)),
        ("iterations".into(), ts.iterations.to_string()),
        ("final_distance".into(), num(*ts.distances.last().unwrap_or(&0.0))),
        ("max_abs_psi".into(), num(ts.max_abs_psi())),
        ("energy_residual_max".into(), num(energy.iter().cloned().fold(0.0, f64::max))),
    ];
    for (n, d) in ts.distances.iter().enumerate() {
        pairs.push((format!("distance.{}", n + 1), num(*d)));
    }
    for (k, r) in energy.iter().enumerate() {
        pairs.push((format!("energy_residual.{k}"), num(*r)));
    }
    fs::write(c.out.join("summary.txt"), key_values(&pairs))?;
    println!("u0={}", num(u0));
    println!("iterations={}", ts.iterations);
    Ok(0)
}

fn cmd_verify(c: &Common, paths: usize, value: Option<&Path>, tol_disc: Option<f64>, with_sim: bool) -> Result<i32> {
    let st = setup(c)?;
    let s = &st.loaded.scenario;
    let v = match value {
        Some(p) => {
            let v = read_value_csv(p)?;
            s.check_grid(&v.grid)?;
            v
        }
        None => solve(c, &st)?,
    };
    let mc = McConfig { npaths: paths, seed: c.seed };
    let (nx, nt) = (v.grid.nx(), v.grid.nt());
    let calibration = match tol_disc {
        Some(_) => None,
        None if with_sim => Some(Calibration::with_simulation(s, nx, nt, st.x0, mc)?),
        None => Some(Calibration::solver_only(s, nx, nt, st.x0)?),
    };
    let tol = tol_disc.unwrap_or_else(|| calibration.map_or(0.0, |c| c.tol_disc()));
    let challengers = shipped_challengers(s, &v.grid, c.seed);
    let report = verify_value(&v, s, st.x0, &challengers, mc, tol)?;
    prepare_out(&c.out)?;
    let mut pairs = report.summary_pairs();
    if let Some(cal) = calibration {
        pairs.push(("calibration.solver_change".into(), num(cal.solver_change)));
        pairs.push(("calibration.simulation_change".into(), num(cal.simulation_change)));
        pairs.push(("calibration.simulation_stderr".into(), num(cal.simulation_stderr)));
    }
    let summary = key_values(&pairs);
    fs::write(c.out.join("verify.txt"), &summary)?;
    fs::write(c.out.join("challengers.csv"), report.challenger_csv())?;
    print!("{summary}");
    Ok(if report.passes() { 0 } else { 1 })
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Solve { common } => cmd_solve(common),
        Command::Simulate { common, paths, control } => cmd_simulate(common, *paths, control),
        Command::Bspde { common, tol, max_iter } => cmd_bspde(common, *tol, *max_iter),
        Command::Verify { common, paths, value, tol_disc, calibrate_simulation } => {
            cmd_verify(common, *paths, value.as_deref(), *tol_disc, *calibrate_simulation)
        }
        Command::Selftest => {
            let ok = run_selftest(&mut std::io::stdout());
            Ok(if ok { 0 } else { 1 })
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
