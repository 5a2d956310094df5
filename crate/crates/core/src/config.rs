//! Built-in scenarios and TOML scenario files.
//!
//! A scenario file has four sections:
//!
//! ```toml
//! [grid]
//! b = 1.0          # barrier
//! T = 1.0          # horizon
//! nx = 100
//! nt = 400
//!
//! [coefficients]
//! builtin = "example21"   # zero | heat_eigen | example21 | example21_w
//! mu = 0.3
//! p = 1.0
//!
//! [control_set]           # optional; defaults to the built-in's set
//! kind = "interval"       # or "finite" with values = [..]
//! lower = -1.0
//! upper = 0.0
//! n = 11
//!
//! [bounds]                # optional
//! kappa = 0.2
//! K = 1.0
//! Lambda = 0.0
//! ```
//!
//! Numeric parameters accepted in `[coefficients]`, by built-in:
//!
//! - `zero`: none
//! - `heat_eigen`: `a` (constant `sigma_bar`, default 1)
//! - `example21`: `mu` (0.3), `p` (1), `h` (0), `sigma_scale` (0.2), `sigma_bar` (0.5)
//! - `example21_w`: as `example21` plus `w_loading` (0.5), the strength of
//!   the `tanh(W)` modulation of `sigma`

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{CoefficientMode, ControlSet, Scenario};

pub const BUILTINS: [&str; 4] = ["zero", "heat_eigen", "example21", "example21_w"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridDefaults {
    pub nx: usize,
    pub nt: usize,
}

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub grid: GridDefaults,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    grid: GridSection,
    coefficients: CoefficientSection,
    control_set: Option<ControlSection>,
    bounds: Option<BoundsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    b: Option<f64>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    nx: Option<usize>,
    nt: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct CoefficientSection {
    builtin: String,
    #[serde(flatten)]
    params: BTreeMap<String, f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlSection {
    kind: String,
    values: Option<Vec<f64>>,
    lower: Option<f64>,
    upper: Option<f64>,
    n: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsSection {
    kappa: Option<f64>,
    #[serde(rename = "K")]
    k_bound: Option<f64>,
    #[serde(rename = "Lambda")]
    lambda: Option<f64>,
}

struct Params<'a> {
    name: &'a str,
    values: &'a BTreeMap<String, f64>,
    allowed: &'static [&'static str],
}

impl Params<'_> {
    fn check(&self) -> Result<()> {
        match self.values.keys().find(|k| !self.allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown parameter '{k}' for built-in '{}'", self.name))),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.values.get(key).copied().unwrap_or(default)
    }
}

/// Built-in scenario `name` on `[0, b] x [0, T]` with numeric parameters.
pub fn builtin_scenario(name: &str, b: Option<f64>, horizon: Option<f64>, params: &BTreeMap<String, f64>) -> Result<LoadedScenario> {
    let allowed: &'static [&'static str] = match name {
        "zero" => &[],
        "heat_eigen" => &["a"],
        "example21" => &["mu", "p", "h", "sigma_scale", "sigma_bar"],
        "example21_w" => &["mu", "p", "h", "sigma_scale", "sigma_bar", "w_loading"],
        _ => {
            return Err(Error::Config(format!("unknown built-in scenario '{name}' (known: {})", BUILTINS.join(", "))));
        }
    };
    let p = Params { name, values: params, allowed };
    p.check()?;
    let loaded = match name {
        "zero" => {
            let (b, t) = (b.unwrap_or(1.0), horizon.unwrap_or(1.0));
            let s = Scenario::new("zero", b, t, ControlSet::finite(vec![-1.0, 0.0, 1.0])?)
                .with_beta(|_, _, th, _| th)
                .with_bounds(1.0, 1.0, 0.0);
            LoadedScenario { scenario: s, grid: GridDefaults { nx: 10, nt: 20 } }
        }
        "heat_eigen" => {
            let (b, t) = (b.unwrap_or(1.0), horizon.unwrap_or(0.5));
            let a = p.get("a", 1.0);
            let s = Scenario::new("heat_eigen", b, t, ControlSet::single(0.0))
                .with_sigma_bar(move |_, _, _| a)
                .with_terminal(move |x, _| (PI * x / b).cos())
                .with_bounds(a * a, a.abs(), 0.0);
            LoadedScenario { scenario: s, grid: GridDefaults { nx: 200, nt: 400 } }
        }
        _ => {
            let (b, t) = (b.unwrap_or(1.0), horizon.unwrap_or(1.0));
            let (mu, pay, h) = (p.get("mu", 0.3), p.get("p", 1.0), p.get("h", 0.0));
            let (scale, sb) = (p.get("sigma_scale", 0.2), p.get("sigma_bar", 0.5));
            let loading = p.get("w_loading", 0.5);
            let random = name == "example21_w";
            let mut s = Scenario::new(name, b, t, ControlSet::interval(-1.0, 0.0, 11)?)
                .with_beta(|_, _, th, _| th)
                .with_running_cost(move |_, _, th, _| mu * th.abs() + h)
                .with_sigma_bar(move |_, _, _| sb)
                .with_boundary(|_, _| 0.0, move |_, _| pay)
                .with_terminal(move |x, _| pay * x * x / (2.0 * b))
                .with_bounds(0.8 * sb * sb, (scale * b).max(sb).max(1.0), 0.0);
            s = if random {
                s.with_sigma(move |_, x, w| scale * x * (b - x) * (1.0 + loading * w.tanh()))
                    .with_mode(CoefficientMode::WMarkovian)
            } else {
                s.with_sigma(move |_, x, _| scale * x * (b - x))
            };
            LoadedScenario { scenario: s, grid: GridDefaults { nx: 100, nt: 400 } }
        }
    };
    Ok(loaded)
}

fn control_set(c: &ControlSection) -> Result<ControlSet> {
    match c.kind.as_str() {
        "finite" | "finite_list" => {
            let values = c.values.clone().ok_or_else(|| Error::Config("finite control set needs 'values'".into()))?;
            ControlSet::finite(values)
        }
        "interval" => {
            let (lo, hi, n) = match (c.lower, c.upper, c.n) {
                (Some(lo), Some(hi), Some(n)) => (lo, hi, n),
                _ => return Err(Error::Config("interval control set needs 'lower', 'upper' and 'n'".into())),
            };
            ControlSet::interval(lo, hi, n)
        }
        other => Err(Error::Config(format!("unknown control set kind '{other}'"))),
    }
}

/// Parses a scenario document.
pub fn parse_scenario(text: &str) -> Result<LoadedScenario> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut loaded = builtin_scenario(&file.coefficients.builtin, file.grid.b, file.grid.horizon, &file.coefficients.params)?;
    if let Some(nx) = file.grid.nx {
        loaded.grid.nx = nx;
    }
    if let Some(nt) = file.grid.nt {
        loaded.grid.nt = nt;
    }
    if let Some(c) = &file.control_set {
        loaded.scenario.controls = control_set(c)?;
    }
    if let Some(bounds) = &file.bounds {
        let s = &mut loaded.scenario;
        s.kappa = bounds.kappa.unwrap_or(s.kappa);
        s.k_bound = bounds.k_bound.unwrap_or(s.k_bound);
        s.lambda = bounds.lambda.unwrap_or(s.lambda);
    }
    Ok(loaded)
}

/// A built-in name, or a path to a scenario file.
pub fn load_scenario(name_or_path: &str) -> Result<LoadedScenario> {
    if BUILTINS.contains(&name_or_path) {
        return builtin_scenario(name_or_path, None, None, &BTreeMap::new());
    }
    let path = Path::new(name_or_path);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read scenario '{}': {e}", path.display())))?;
    parse_scenario(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load() {
        for name in BUILTINS {
            let l = load_scenario(name).unwrap();
            assert_eq!(l.scenario.name, name);
        }
        assert_eq!(load_scenario("heat_eigen").unwrap().scenario.horizon, 0.5);
    }

    #[test]
    fn example21_defaults() {
        let s = load_scenario("example21").unwrap().scenario;
        assert_eq!((s.g0)(0.3, 0.0), 0.0);
        assert_eq!((s.gb)(0.3, 0.0), 1.0);
        assert!(((s.sigma)(0.0, 0.5, 0.0) - 0.05).abs() < 1e-15);
        assert_eq!((s.sigma)(0.0, 1.0, 0.0), 0.0);
        assert_eq!((s.running_cost)(0.0, 0.5, -1.0, 0.0), 0.3);
        assert_eq!((s.terminal)(1.0, 0.0), 0.5);
        assert_eq!(s.controls.candidates().len(), 11);
    }

    #[test]
    fn parses_full_document() {
        let text = r#"
            [grid]
            b = 2.0
            T = 0.5
            nx = 40
            nt = 80
            [coefficients]
            builtin = "example21"
            mu = 0.1
            p = 2.0
            [control_set]
            kind = "finite"
            values = [-1.0, 0.0]
            [bounds]
            kappa = 0.1
            K = 2.0
            Lambda = 0.0
        "#;
        let l = parse_scenario(text).unwrap();
        assert_eq!(l.grid, GridDefaults { nx: 40, nt: 80 });
        assert_eq!(l.scenario.barrier, 2.0);
        assert_eq!((l.scenario.gb)(0.0, 0.0), 2.0);
        assert_eq!(l.scenario.controls, ControlSet::finite(vec![-1.0, 0.0]).unwrap());
        assert_eq!(l.scenario.kappa, 0.1);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(parse_scenario("[grid]\n[coefficients]\nbuiltin = \"nope\""), Err(Error::Config(_))));
        assert!(matches!(parse_scenario("[grid]\n[coefficients]\nbuiltin = \"zero\"\nmu = 1.0"), Err(Error::Config(_))));
        assert!(matches!(parse_scenario("not toml ["), Err(Error::Config(_))));
        assert!(matches!(load_scenario("/nonexistent/missing.cfg"), Err(Error::Config(_))));
    }
}
