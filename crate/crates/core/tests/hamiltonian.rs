use proptest::prelude::*;
use reflected_hjb::config::load_scenario;
use reflected_hjb::hamiltonian::{minimize_hamiltonian, policy_field};
use reflected_hjb::{ControlSet, Scenario};

#[test]
fn example_formula_points() {
    let s = load_scenario("example21").unwrap().scenario;
    let h = minimize_hamiltonian(0.0, 0.5, 1.0, 0.0, &s).unwrap();
    assert!((h.value + 0.7).abs() < 1e-15 && h.argmin == -1.0);
    let h = minimize_hamiltonian(0.0, 0.5, 0.2, 0.0, &s).unwrap();
    assert_eq!((h.value, h.argmin), (0.0, 0.0));
}

#[test]
fn finite_linear_set() {
    let s = Scenario::new("f", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0, 1.0]).unwrap()).with_beta(|_, _, th, _| th);
    let h = minimize_hamiltonian(0.0, 0.3, 0.5, 0.0, &s).unwrap();
    assert_eq!((h.value, h.argmin), (-0.5, -1.0));
}

#[test]
fn policy_tables() {
    let s = load_scenario("example21").unwrap().scenario;
    let grid = s.grid(10, 5).unwrap();
    let table = |v: f64| vec![vec![v; 11]; 6];
    assert!(policy_field(&table(0.0), &s, &grid).unwrap().table.iter().flatten().all(|&t| t == 0.0));
    assert!(policy_field(&table(1.0), &s, &grid).unwrap().table.iter().flatten().all(|&t| t == -1.0));
    let single = Scenario::new("one", 1.0, 1.0, ControlSet::single(0.4)).with_beta(|_, _, th, _| th);
    assert!(policy_field(&table(3.0), &single, &grid).unwrap().table.iter().flatten().all(|&t| t == 0.4));
}

fn quadratic_cost(c: f64) -> Scenario {
    Scenario::new("q", 1.0, 1.0, ControlSet::interval(-1.0, 1.0, 9).unwrap())
        .with_beta(move |_, x, th, _| c * (th + 0.3 * x))
        .with_running_cost(move |t, x, th, _| c * (th * th * (1.0 + x) + t * th))
}

proptest! {
    #[test]
    fn scaling_keeps_argmin(c in 0.1..10.0f64, v in -3.0..3.0f64, x in 0.0..1.0f64, t in 0.0..1.0f64) {
        let (a, b) = (minimize_hamiltonian(t, x, v, 0.0, &quadratic_cost(1.0)).unwrap(), minimize_hamiltonian(t, x, v, 0.0, &quadratic_cost(c)).unwrap());
        prop_assert!((b.value - c * a.value).abs() <= 1e-12 * (1.0 + b.value.abs()));
        prop_assert_eq!(a.argmin, b.argmin);
    }

    #[test]
    fn concave_in_gradient(v1 in -3.0..3.0f64, v2 in -3.0..3.0f64, x in 0.0..1.0f64) {
        let s = Scenario::new("c", 1.0, 1.0, ControlSet::interval(-1.0, 1.0, 21).unwrap())
            .with_beta(|_, _, th, _| th * th * th)
            .with_running_cost(|_, x, th, _| (th - x).powi(2));
        let h = |v: f64| minimize_hamiltonian(0.0, x, v, 0.0, &s).unwrap().value;
        prop_assert!(h(0.5 * (v1 + v2)) >= 0.5 * (h(v1) + h(v2)) - 1e-14);
    }

    #[test]
    fn example_closed_form(v in -5.0..5.0f64, x in 0.0..1.0f64) {
        let s = load_scenario("example21").unwrap().scenario;
        let h = minimize_hamiltonian(0.0, x, v, 0.0, &s).unwrap();
        prop_assert!((h.value + (v - 0.3).max(0.0)).abs() <= 1e-15 * (1.0 + v.abs()));
    }
}
