use proptest::prelude::*;
use reflected_hjb::config::load_scenario;
use reflected_hjb::hjb::solve_hjb;
use reflected_hjb::rsde::{evaluate_cost, simulate_costs, simulate_paths, simulate_paths_with, Control, SimOptions};
use reflected_hjb::{ControlSet, Scenario};

fn still(beta: f64) -> Scenario {
    Scenario::new("still", 1.0, 1.0, ControlSet::single(0.0)).with_beta(move |_, _, _, _| beta).with_sigma_bar(|_, _, _| 0.0)
}

#[test]
fn degenerate_dynamics() {
    let s = still(0.0);
    let grid = s.grid(10, 50).unwrap();
    let b = simulate_paths(&s, &Control::Constant(0.0), 0.4, 1, &grid, 5).unwrap();
    for p in &b.paths {
        assert!(p.path.states.iter().all(|&x| x == 0.4));
        assert!(p.path.lower.iter().chain(&p.path.upper).all(|&v| v == 0.0));
    }
}

#[test]
fn drift_into_lower_barrier() {
    let s = still(-1.0);
    let grid = s.grid(10, 1000).unwrap();
    let b = simulate_paths(&s, &Control::Constant(0.0), 0.3, 1, &grid, 1).unwrap();
    let p = &b.paths[0].path;
    let hit = p.states.iter().position(|&x| x == 0.0).unwrap();
    assert!((grid.t(hit) - 0.3).abs() <= grid.dt() + 1e-12);
    assert!(p.states[hit..].iter().all(|&x| x == 0.0));
    assert!((p.lower.last().unwrap() - 0.7).abs() <= grid.dt() + 1e-12);
    assert_eq!(*p.upper.last().unwrap(), 0.0);
}

fn terminal_mean(s: &Scenario, nt: usize) -> (f64, f64, f64) {
    let grid = s.grid(100, nt).unwrap();
    let c = simulate_costs(s, &Control::Constant(0.0), 0.5, 11, &grid, 100_000, SimOptions::default()).unwrap();
    assert_eq!((c.mean.running, c.mean.lower_boundary), (0.0, 0.0));
    let t: Vec<f64> = c.samples.iter().map(|x| x.terminal).collect();
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let se = (t.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    (mean, se, c.mean.terminal)
}

/// Projected Euler has an O(sqrt(dt)) weak bias at reflecting barriers, so
/// the check is on the bias rate and on the sqrt(dt)-extrapolated mean.
#[test]
fn uncontrolled_terminal_mean_matches_backward_equation() {
    let ex = load_scenario("example21").unwrap().scenario;
    // Expected terminal cost from the Kolmogorov equation with reflecting (zero Neumann) ends.
    let kolmogorov = ex.clone().with_boundary(|_, _| 0.0, |_, _| 0.0).with_running_cost(|_, _, _, _| 0.0).with_beta(|_, _, _, _| 0.0);
    let oracle = solve_hjb(&kolmogorov, &kolmogorov.grid(400, 3200).unwrap()).unwrap().u0(0.5);
    let (coarse, se_c, summary) = terminal_mean(&ex, 100);
    let (fine, se_f, _) = terminal_mean(&ex, 400);
    assert!((summary - coarse).abs() < 1e-14);
    let extrapolated = 2.0 * fine - coarse;
    let se = (4.0 * se_f * se_f + se_c * se_c).sqrt();
    assert!((extrapolated - oracle).abs() <= 3.0 * se, "{extrapolated} +- {se} vs {oracle}");
    let ratio = (coarse - oracle) / (fine - oracle);
    assert!((1.4..=2.8).contains(&ratio), "bias ratio {ratio}");
}

#[test]
fn constant_terminal_costs() {
    let s = Scenario::new("c", 1.0, 1.0, ControlSet::single(0.0)).with_terminal(|_, _| 2.5);
    let grid = s.grid(10, 40).unwrap();
    let c = simulate_costs(&s, &Control::Constant(0.0), 0.5, 2, &grid, 50, SimOptions::default()).unwrap();
    assert!(c.samples.iter().all(|x| x.total == 2.5) && c.stderr == 0.0);
}

#[test]
fn component_means_add_up() {
    let ex = load_scenario("example21").unwrap().scenario;
    let grid = ex.grid(20, 80).unwrap();
    let batch = simulate_paths(&ex, &Control::Constant(-1.0), 0.5, 3, &grid, 500).unwrap();
    let c = evaluate_cost(&batch, &ex).unwrap();
    let m = c.mean;
    assert!((m.total - (m.running + m.lower_boundary + m.upper_boundary + m.terminal)).abs() < 1e-14);
    for (s, rec) in c.samples.iter().zip(&batch.paths) {
        let upper: f64 = rec.path.d_upper.iter().sum();
        assert!((s.upper_boundary - upper).abs() < 1e-12);
        let x = *rec.path.states.last().unwrap();
        assert_eq!(s.terminal, x * x / 2.0);
    }
}

#[test]
fn antithetic_pairs_reduce_variance() {
    let ex = load_scenario("example21").unwrap().scenario;
    let grid = ex.grid(20, 40).unwrap();
    let control = Control::Constant(0.0);
    let (mut plain, mut paired) = (Vec::new(), Vec::new());
    for rep in 0..40u64 {
        let a = simulate_costs(&ex, &control, 0.5, rep, &grid, 200, SimOptions::default()).unwrap();
        let b = simulate_costs(&ex, &control, 0.5, rep, &grid, 200, SimOptions { antithetic: true }).unwrap();
        plain.push(a.mean.total);
        paired.push(0.5 * (a.mean.total + b.mean.total));
    }
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    assert!(var(&paired) <= var(&plain), "{} vs {}", var(&paired), var(&plain));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reproducible_and_inside(seed in 0u64..10_000, x0 in 0.0..1.0f64, th in -1.0..0.0f64) {
        let ex = load_scenario("example21").unwrap().scenario;
        let grid = ex.grid(10, 30).unwrap();
        let c = Control::Constant(th);
        let a = simulate_paths(&ex, &c, x0, seed, &grid, 20).unwrap();
        prop_assert_eq!(&a, &simulate_paths(&ex, &c, x0, seed, &grid, 20).unwrap());
        prop_assert!(a.paths.iter().all(|p| p.path.states.iter().all(|&x| (0.0..=1.0).contains(&x))));
        let anti = simulate_paths_with(&ex, &c, x0, seed, &grid, 20, SimOptions { antithetic: true }).unwrap();
        for (p, q) in a.paths.iter().zip(&anti.paths) {
            prop_assert!(p.dw.iter().zip(&q.dw).all(|(u, v)| *u == -v));
        }
    }
}
