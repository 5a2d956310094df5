use proptest::prelude::*;
use reflected_hjb::config::load_scenario;
use reflected_hjb::model::{build_grid, lift_boundary, validate_scenario, TraceFn};
use reflected_hjb::{CoefficientMode, ControlSet, Error, Scenario};
use std::sync::Arc;

fn trace(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> TraceFn {
    Arc::new(f)
}

#[test]
fn grid_examples() {
    let g = build_grid(1.0, 4, 1.0, 2).unwrap();
    assert_eq!(g.xs(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(g.ts(), vec![0.0, 0.5, 1.0]);
    let g = build_grid(2.0, 2, 1.0, 1).unwrap();
    assert_eq!((g.dx(), g.dt()), (1.0, 1.0));
    assert!(matches!(build_grid(1.0, 1, 1.0, 1), Err(Error::Parameter(_))));
}

#[test]
fn validation_examples() {
    let s = Scenario::new("c", 1.0, 1.0, ControlSet::single(0.0)).with_sigma_bar(|_, _, _| 0.5).with_bounds(0.25, 1.0, 0.0);
    let r = validate_scenario(&s, 500, 3);
    assert!((r.kappa_hat - 0.25).abs() < 1e-15 && r.pass_super_parabolic);
    let s = Scenario::new("v", 1.0, 1.0, ControlSet::single(0.0)).with_sigma_bar(|_, x, _| x).with_bounds(0.01, 1.0, 0.0);
    let r = validate_scenario(&s, 500, 3);
    assert!(r.kappa_hat < 1e-3 && !r.pass_super_parabolic);
    let ex = load_scenario("example21").unwrap().scenario;
    assert!(validate_scenario(&ex, 2000, 1).passes());
}

#[test]
fn lift_examples() {
    let g = build_grid(2.0, 10, 1.0, 10).unwrap();
    let zero = lift_boundary(trace(|_, _| 0.0), trace(|_, _| 0.0), &g);
    assert_eq!((zero.g(0.3, 1.1), zero.ghat(0.3, 1.1)), (0.0, 0.0));
    let p = 1.5;
    let ex = lift_boundary(trace(|_, _| 0.0), trace(move |_, _| p), &g);
    for x in [0.0, 0.7, 2.0] {
        assert!((ex.g(0.5, x) - p * x / 2.0).abs() < 1e-15);
        assert!((ex.ghat(0.5, x) - p * x * x / 4.0).abs() < 1e-15);
    }
    let one = lift_boundary(trace(|_, _| 1.0), trace(|_, _| 1.0), &g);
    assert_eq!((one.g(0.2, 0.4), one.ghat(0.2, 0.4)), (1.0, 0.4));
}

#[test]
fn example_terminal_is_the_lift() {
    let s = load_scenario("example21").unwrap().scenario;
    let g = s.grid(20, 20).unwrap();
    let lift = lift_boundary(s.g0.clone(), s.gb.clone(), &g);
    for x in g.xs() {
        assert!(((s.terminal)(x, 0.0) - lift.ghat(1.0, x)).abs() < 1e-15);
    }
}

proptest! {
    #[test]
    fn lift_differences_reproduce_traces(a in -2.0..2.0f64, c in -2.0..2.0f64, drift in -1.0..1.0f64, nx in 4usize..40) {
        let g = build_grid(1.5, nx, 1.0, 10).unwrap();
        let lift = lift_boundary(trace(move |t, _| a + drift * t), trace(move |t, _| c - drift * t * t), &g);
        for k in 0..=10 {
            let t = g.t(k);
            for i in 1..nx {
                let x = g.x(i);
                let fd = (lift.ghat(t, x + g.dx()) - lift.ghat(t, x - g.dx())) / (2.0 * g.dx());
                prop_assert!((fd - lift.g(t, x)).abs() <= 1e-12 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn validation_is_pure(seed in 0u64..1000, n in 1usize..300) {
        let s = load_scenario("example21_w").unwrap().scenario;
        prop_assert_eq!(validate_scenario(&s, n, seed), validate_scenario(&s, n, seed));
    }

    #[test]
    fn deterministic_builtins_ignore_w(t in 0.0..1.0f64, x in 0.0..1.0f64, w1 in -5.0..5.0f64, w2 in -5.0..5.0f64, th in -1.0..0.0f64) {
        for name in ["zero", "heat_eigen", "example21"] {
            let s = load_scenario(name).unwrap().scenario;
            prop_assert_eq!(s.mode, CoefficientMode::Deterministic);
            prop_assert_eq!((s.beta)(t, x, th, w1), (s.beta)(t, x, th, w2));
            prop_assert_eq!((s.sigma)(t, x, w1), (s.sigma)(t, x, w2));
            prop_assert_eq!((s.sigma_bar)(t, x, w1), (s.sigma_bar)(t, x, w2));
            prop_assert_eq!((s.running_cost)(t, x, th, w1), (s.running_cost)(t, x, th, w2));
            prop_assert_eq!((s.g0)(t, w1), (s.g0)(t, w2));
            prop_assert_eq!((s.gb)(t, w1), (s.gb)(t, w2));
            prop_assert_eq!((s.terminal)(x, w1), (s.terminal)(x, w2));
        }
    }
}
