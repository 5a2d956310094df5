//! Tridiagonal solves and clamped cubic splines on uniform grids.

use crate::error::{Error, Result};

/// Solves `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]` with
/// the Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::Dimension(format!(
            "tridiagonal bands {}/{}/{} and rhs {} must all have length {n}",
            lower.len(),
            diag.len(),
            upper.len(),
            rhs.len()
        )));
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if !pivot.is_finite() || pivot.abs() < f64::MIN_POSITIVE {
        return Err(Error::Singular { row: 0 });
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if !pivot.is_finite() || pivot.abs() < f64::MIN_POSITIVE {
            return Err(Error::Singular { row: i });
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// C2 cubic spline through uniformly spaced samples with prescribed end slopes.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    h: f64,
    y: Vec<f64>,
    /// Second derivatives at the nodes.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Spline on nodes `i * h`, `i = 0..y.len()`, with `s'(0) = slope0` and
    /// `s'(end) = slope1`.
    pub fn clamped(h: f64, y: &[f64], slope0: f64, slope1: f64) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Dimension("spline needs at least two samples".into()));
        }
        let mut lower = vec![h / 6.0; n];
        let mut diag = vec![2.0 * h / 3.0; n];
        let mut upper = vec![h / 6.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = h / 3.0;
        diag[n - 1] = h / 3.0;
        lower[0] = 0.0;
        upper[n - 1] = 0.0;
        rhs[0] = (y[1] - y[0]) / h - slope0;
        rhs[n - 1] = slope1 - (y[n - 1] - y[n - 2]) / h;
        for i in 1..n - 1 {
            rhs[i] = (y[i + 1] - 2.0 * y[i] + y[i - 1]) / h;
        }
        let m = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        Ok(Self { h, y: y.to_vec(), m })
    }

    fn locate(&self, x: f64) -> (usize, f64, f64) {
        let last = self.y.len() - 2;
        let i = ((x / self.h).floor().max(0.0) as usize).min(last);
        let a = (self.h * (i + 1) as f64 - x) / self.h;
        let b = 1.0 - a;
        (i, a, b)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (i, a, b) = self.locate(x);
        let h2 = self.h * self.h / 6.0;
        a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h2
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, a, b) = self.locate(x);
        (self.y[i + 1] - self.y[i]) / self.h
            + self.h / 6.0 * (-(3.0 * a * a - 1.0) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1])
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        let (i, a, b) = self.locate(x);
        a * self.m[i] + b * self.m[i + 1]
    }
}
