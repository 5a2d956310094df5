//! Pointwise Hamiltonian `min over theta of beta * v + f` and its minimizer.

use crate::error::{Error, Result};
use crate::model::{Grid, Scenario};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianValue {
    pub value: f64,
    pub argmin: f64,
    /// The minimum is attained on the evaluated candidate set. Always true
    /// here since interval sets are gridded.
    pub attained: bool,
}

/// Exhaustive minimum of `beta(t,x,theta,w) v + f(t,x,theta,w)` over the
/// control candidates. Ties go to the smallest control.
pub fn minimize_hamiltonian(t: f64, x: f64, v: f64, w: f64, s: &Scenario) -> Result<HamiltonianValue> {
    if !(0.0..=s.barrier).contains(&x) {
        return Err(Error::Domain { x, barrier: s.barrier });
    }
    Ok(minimize_unchecked(t, x, v, w, s))
}

pub(crate) fn minimize_unchecked(t: f64, x: f64, v: f64, w: f64, s: &Scenario) -> HamiltonianValue {
    let mut best = HamiltonianValue { value: f64::INFINITY, argmin: f64::NAN, attained: true };
    for theta in s.controls.candidates() {
        let h = (s.beta)(t, x, theta, w) * v + (s.running_cost)(t, x, theta, w);
        if h < best.value {
            best.value = h;
            best.argmin = theta;
        }
    }
    best
}

/// Upwind Hamiltonian: each candidate's drift picks the one-sided gradient
/// in its own direction (`v_fwd` for `beta > 0`, `v_back` for `beta < 0`).
/// This is the monotone form used by the backward scheme.
pub(crate) fn minimize_upwind(
    t: f64,
    x: f64,
    v_back: f64,
    v_fwd: f64,
    w: f64,
    s: &Scenario,
    thetas: &[f64],
) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::NAN);
    for &theta in thetas {
        let h = upwind_term(t, x, theta, v_back, v_fwd, w, s);
        if h < best.0 {
            best = (h, theta);
        }
    }
    best
}

pub(crate) fn upwind_term(t: f64, x: f64, theta: f64, v_back: f64, v_fwd: f64, w: f64, s: &Scenario) -> f64 {
    let beta = (s.beta)(t, x, theta, w);
    let transport = if beta > 0.0 {
        beta * v_fwd
    } else if beta < 0.0 {
        beta * v_back
    } else {
        0.0
    };
    transport + (s.running_cost)(t, x, theta, w)
}

/// Feedback control table `theta*[k][i]` over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyField {
    pub table: Vec<Vec<f64>>,
    /// Which value field produced the table.
    pub source: String,
}

impl PolicyField {
    pub fn constant(grid: &Grid, theta: f64, source: impl Into<String>) -> Self {
        Self { table: vec![vec![theta; grid.nx() + 1]; grid.nt() + 1], source: source.into() }
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.table.len() == grid.nt() + 1 && self.table.iter().all(|r| r.len() == grid.nx() + 1)
    }

    /// Nearest-node lookup at time layer `k`.
    pub fn lookup(&self, grid: &Grid, k: usize, x: f64) -> f64 {
        self.table[k][grid.nearest_node(x)]
    }
}

/// Applies [`minimize_hamiltonian`] at every grid node with the gradient
/// table `du[k][i]`. Coefficients are evaluated at `w = 0`.
pub fn policy_field(du: &[Vec<f64>], s: &Scenario, grid: &Grid) -> Result<PolicyField> {
    if du.len() != grid.nt() + 1 || du.iter().any(|r| r.len() != grid.nx() + 1) {
        return Err(Error::Dimension(format!(
            "gradient table must be {}x{}",
            grid.nt() + 1,
            grid.nx() + 1
        )));
    }
    let table = du
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let t = grid.t(k);
            row.iter()
                .enumerate()
                .map(|(i, &v)| minimize_unchecked(t, grid.x(i), v, 0.0, s).argmin)
                .collect()
        })
        .collect();
    Ok(PolicyField { table, source: s.name.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ControlSet;
    use proptest::prelude::*;

    fn example21(mu: f64, h: f64) -> Scenario {
        Scenario::new("ex21", 1.0, 1.0, ControlSet::interval(-1.0, 0.0, 11).unwrap())
            .with_beta(|_, _, th, _| th)
            .with_running_cost(move |_, _, th, _| mu * th.abs() + h)
    }

    #[test]
    fn example21_closed_form() {
        let s = example21(0.3, 0.0);
        let r = minimize_hamiltonian(0.0, 0.5, 1.0, 0.0, &s).unwrap();
        assert!((r.value + 0.7).abs() < 1e-15);
        assert_eq!(r.argmin, -1.0);
        let r = minimize_hamiltonian(0.0, 0.5, 0.2, 0.0, &s).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.argmin, 0.0);
    }

    #[test]
    fn finite_set_linear_in_theta() {
        let s = Scenario::new("f", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0, 1.0]).unwrap())
            .with_beta(|_, _, th, _| th);
        let r = minimize_hamiltonian(0.0, 0.1, 0.5, 0.0, &s).unwrap();
        assert_eq!(r.value, -0.5);
        assert_eq!(r.argmin, -1.0);
        assert!(r.attained);
    }

    #[test]
    fn rejects_state_outside_interval() {
        let s = example21(0.3, 0.0);
        assert!(matches!(minimize_hamiltonian(0.0, 1.5, 1.0, 0.0, &s), Err(Error::Domain { .. })));
    }

    #[test]
    fn ties_take_smallest_control() {
        let s = Scenario::new("z", 1.0, 1.0, ControlSet::finite(vec![-1.0, 0.0, 1.0]).unwrap())
            .with_beta(|_, _, th, _| th);
        assert_eq!(minimize_hamiltonian(0.0, 0.5, 0.0, 0.0, &s).unwrap().argmin, -1.0);
    }

    #[test]
    fn policy_field_examples() {
        let s = example21(0.3, 0.0);
        let grid = s.grid(4, 3).unwrap();
        let zeros = vec![vec![0.0; 5]; 4];
        let p = policy_field(&zeros, &s, &grid).unwrap();
        assert!(p.table.iter().flatten().all(|&th| th == 0.0));
        let ones = vec![vec![1.0; 5]; 4];
        let p = policy_field(&ones, &s, &grid).unwrap();
        assert!(p.table.iter().flatten().all(|&th| th == -1.0));

        let single = Scenario::new("one", 1.0, 1.0, ControlSet::single(0.25)).with_beta(|_, _, th, _| th);
        let p = policy_field(&ones, &single, &grid).unwrap();
        assert!(p.table.iter().flatten().all(|&th| th == 0.25));
        assert!(p.table.iter().flatten().all(|&th| single.controls.contains(th)));
    }

    #[test]
    fn policy_field_rejects_bad_shape() {
        let s = example21(0.3, 0.0);
        let grid = s.grid(4, 3).unwrap();
        assert!(matches!(policy_field(&vec![vec![0.0; 5]; 3], &s, &grid), Err(Error::Dimension(_))));
        assert!(matches!(policy_field(&vec![vec![0.0; 4]; 4], &s, &grid), Err(Error::Dimension(_))));
    }

    proptest! {
        #[test]
        fn example21_matches_formula(v in -3.0f64..3.0, mu in 0.0f64..1.0, h in -1.0f64..1.0) {
            let s = example21(mu, h);
            let r = minimize_hamiltonian(0.2, 0.3, v, 0.0, &s).unwrap();
            let expected = -(v - mu).max(0.0) + h;
            prop_assert!((r.value - expected).abs() <= 1e-14 * (1.0 + expected.abs()));
            if v > mu + 1e-12 { prop_assert_eq!(r.argmin, -1.0); }
            if v < mu - 1e-12 { prop_assert_eq!(r.argmin, 0.0); }
        }

        #[test]
        fn scaling_invariance(v in -2.0f64..2.0, c in 0.1f64..10.0, x in 0.0f64..1.0) {
            let thetas = vec![-1.0, -0.3, 0.4, 1.0];
            let base = Scenario::new("s", 1.0, 1.0, ControlSet::finite(thetas.clone()).unwrap())
                .with_beta(|_, x, th, _| th * (1.0 + x))
                .with_running_cost(|_, x, th, _| th * th + 0.1 * x);
            let scaled = base.clone()
                .with_beta(move |_, x, th, _| c * th * (1.0 + x))
                .with_running_cost(move |_, x, th, _| c * (th * th + 0.1 * x));
            let a = minimize_hamiltonian(0.0, x, v, 0.0, &base).unwrap();
            let b = minimize_hamiltonian(0.0, x, v, 0.0, &scaled).unwrap();
            prop_assert!((b.value - c * a.value).abs() <= 1e-12 * (1.0 + b.value.abs()));
            // Candidate values within rounding of each other may swap order.
            let gap = thetas.iter()
                .map(|&th| (th * (1.0 + x) * v + th * th + 0.1 * x) - a.value)
                .filter(|g| *g > 0.0)
                .fold(f64::INFINITY, f64::min);
            if gap > 1e-12 { prop_assert_eq!(a.argmin, b.argmin); }
        }

        #[test]
        fn concave_in_gradient(v1 in -3.0f64..3.0, v2 in -3.0f64..3.0) {
            let s = Scenario::new("c", 1.0, 1.0, ControlSet::finite(vec![-1.0, -0.2, 0.5, 2.0]).unwrap())
                .with_beta(|_, _, th, _| th)
                .with_running_cost(|_, _, th, _| th * th);
            let h = |v: f64| minimize_hamiltonian(0.0, 0.5, v, 0.0, &s).unwrap().value;
            let mid = h(0.5 * (v1 + v2));
            prop_assert!(mid >= 0.5 * (h(v1) + h(v2)) - 1e-12);
        }

        #[test]
        fn value_is_a_lower_bound(v in -3.0f64..3.0, x in 0.0f64..1.0) {
            let s = example21(0.4, 0.1);
            let r = minimize_hamiltonian(0.0, x, v, 0.0, &s).unwrap();
            for th in s.controls.candidates() {
                prop_assert!(r.value <= th * v + 0.4 * th.abs() + 0.1 + 1e-15);
            }
            prop_assert!((r.value - (r.argmin * v + 0.4 * r.argmin.abs() + 0.1)).abs() <= 1e-15 * (1.0 + v.abs()));
        }
    }
}
