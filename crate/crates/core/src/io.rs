//! CSV and key-value exports. Floats are written with 17 significant
//! digits, which round-trips every `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bspde::TreeSolution;
use crate::error::{Error, Result};
use crate::hamiltonian::PolicyField;
use crate::hjb::{SchemeInfo, ValueField};
use crate::model::Grid;
use crate::rsde::{CostSummary, SimBatch};

pub(crate) fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub const VALUE_HEADER: &str = "t,x,u,du,theta_star";
pub const BATCH_HEADER: &str = "path,k,t,x,dL,dU,theta,w";
pub const COST_HEADER: &str = "path,running,lower,upper,terminal,total";
pub const TREE_HEADER: &str = "k,j,w,x,u,psi";

pub fn value_csv(v: &ValueField) -> String {
    let grid = &v.grid;
    let mut out = String::from(VALUE_HEADER);
    out.push('\n');
    for k in 0..=grid.nt() {
        for i in 0..=grid.nx() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                num(grid.t(k)),
                num(grid.x(i)),
                num(v.u[k][i]),
                num(v.du[k][i]),
                num(v.policy.table[k][i])
            );
        }
    }
    out
}

pub fn write_value_csv(path: &Path, v: &ValueField) -> Result<()> {
    fs::write(path, value_csv(v))?;
    Ok(())
}

fn parse_row(line: &str, width: usize, lineno: usize) -> Result<Vec<f64>> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != width {
        return Err(Error::Config(format!("line {lineno}: expected {width} fields, found {}", cells.len())));
    }
    cells
        .iter()
        .map(|c| c.trim().parse::<f64>().map_err(|e| Error::Config(format!("line {lineno}: '{c}': {e}"))))
        .collect()
}

/// Reads a value-field CSV. The grid is recovered from the distinct node
/// coordinates; scheme metadata is not stored and comes back empty.
pub fn parse_value_csv(text: &str, source: &str) -> Result<ValueField> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == VALUE_HEADER => {}
        _ => return Err(Error::Config(format!("value CSV must start with '{VALUE_HEADER}'"))),
    }
    let rows: Vec<Vec<f64>> = lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_row(l, 5, n + 1))
        .collect::<Result<_>>()?;
    let first_t = rows.first().map(|r| r[0]).ok_or_else(|| Error::Config("value CSV has no rows".into()))?;
    let per_layer = rows.iter().take_while(|r| r[0] == first_t).count();
    if per_layer < 3 || !rows.len().is_multiple_of(per_layer) || rows.len() / per_layer < 2 {
        return Err(Error::Config("value CSV is not a full (t, x) grid".into()));
    }
    let (nx, nt) = (per_layer - 1, rows.len() / per_layer - 1);
    let grid = Grid::new(rows[nx][1], nx, rows[rows.len() - 1][0], nt)?;
    let mut u = vec![vec![0.0; nx + 1]; nt + 1];
    let mut du = u.clone();
    let mut theta = u.clone();
    for (n, r) in rows.iter().enumerate() {
        let (k, i) = (n / per_layer, n % per_layer);
        if r[1] != grid.x(i) || (r[0] - grid.t(k)).abs() > 1e-12 * grid.horizon() {
            return Err(Error::Config(format!("row {} is off the uniform grid", n + 2)));
        }
        u[k][i] = r[2];
        du[k][i] = r[3];
        theta[k][i] = r[4];
    }
    Ok(ValueField {
        grid,
        u,
        du,
        policy: PolicyField { table: theta, source: source.to_string() },
        scheme: SchemeInfo {
            upwind: true,
            policy_evaluations_per_step: 1,
            cfl_ratio: f64::NAN,
            cfl_overridden: false,
            lifted: false,
            step_controls: Vec::new(),
        },
    })
}

pub fn read_value_csv(path: &Path) -> Result<ValueField> {
    let text = fs::read_to_string(path)?;
    parse_value_csv(&text, &path.display().to_string())
}

pub fn batch_csv(batch: &SimBatch) -> String {
    let grid = &batch.grid;
    let mut out = String::from(BATCH_HEADER);
    out.push('\n');
    for (p, rec) in batch.paths.iter().enumerate() {
        for k in 0..=grid.nt() {
            let theta = rec.theta.get(k).map(|&t| num(t)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{p},{k},{},{},{},{},{theta},{}",
                num(grid.t(k)),
                num(rec.path.states[k]),
                num(rec.path.d_lower[k]),
                num(rec.path.d_upper[k]),
                num(rec.w[k])
            );
        }
    }
    out
}

pub fn cost_csv(costs: &CostSummary) -> String {
    let mut out = String::from(COST_HEADER);
    out.push('\n');
    for (p, c) in costs.samples.iter().enumerate() {
        let _ = writeln!(
            out,
            "{p},{},{},{},{},{}",
            num(c.running),
            num(c.lower_boundary),
            num(c.upper_boundary),
            num(c.terminal),
            num(c.total)
        );
    }
    out
}

pub fn tree_csv(ts: &TreeSolution) -> String {
    let grid = &ts.grid;
    let mut out = String::from(TREE_HEADER);
    out.push('\n');
    for k in 0..=grid.nt() {
        for m in 0..=k {
            let j = 2 * m as i64 - k as i64;
            let w = num(ts.w(k, m));
            for i in 0..=grid.nx() {
                let _ = writeln!(out, "{k},{j},{w},{},{},{}", num(grid.x(i)), num(ts.u[k][m][i]), num(ts.psi[k][m][i]));
            }
        }
    }
    out
}

/// Flat `key=value` document, one pair per line.
pub fn key_values(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Parses a `key=value` document; later keys win.
pub fn parse_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
