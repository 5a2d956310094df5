//! Discrete two-sided Skorokhod reflection on `[0, b]`.
//!
//! Each step adds the free increment and projects once onto the interval.
//! The pushing increments `dL` (at 0) and `dU` (at b) are exactly the
//! amounts removed by the projection, so the discrete complementarity sums
//! `sum X dL` and `sum (b - X) dU` vanish identically.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectStep {
    pub state: f64,
    pub d_lower: f64,
    pub d_upper: f64,
}

/// One projection step from `x_prev` with free increment `dz`.
///
/// `y = x_prev + dz` below 0 is pushed to 0 with `dL = -y`; above `b` to `b`
/// with `dU = y - b`. `y` landing exactly on a barrier is interior.
pub fn reflect_step(x_prev: f64, dz: f64, b: f64) -> Result<ReflectStep> {
    if !(0.0..=b).contains(&x_prev) {
        return Err(Error::Domain { x: x_prev, barrier: b });
    }
    if !dz.is_finite() {
        return Err(Error::Parameter(format!("non-finite increment {dz}")));
    }
    let y = x_prev + dz;
    Ok(if y < 0.0 {
        ReflectStep { state: 0.0, d_lower: -y, d_upper: 0.0 }
    } else if y > b {
        ReflectStep { state: b, d_lower: 0.0, d_upper: y - b }
    } else {
        ReflectStep { state: y, d_lower: 0.0, d_upper: 0.0 }
    })
}

/// State path with its cumulative local times.
///
/// Index 0 is the initial point; `d_lower[0] = d_upper[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub d_lower: Vec<f64>,
    pub d_upper: Vec<f64>,
    /// Steps whose free increment exceeded the interval width in magnitude.
    pub oversized_steps: usize,
}

impl ReflectedPath {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            lower: Vec::with_capacity(n),
            upper: Vec::with_capacity(n),
            d_lower: Vec::with_capacity(n),
            d_upper: Vec::with_capacity(n),
            oversized_steps: 0,
        }
    }

    pub(crate) fn start(x0: f64, b: f64, capacity: usize) -> Result<Self> {
        if !(0.0..=b).contains(&x0) {
            return Err(Error::Domain { x: x0, barrier: b });
        }
        let mut p = Self::with_capacity(capacity);
        p.times.push(0.0);
        p.states.push(x0);
        p.lower.push(0.0);
        p.upper.push(0.0);
        p.d_lower.push(0.0);
        p.d_upper.push(0.0);
        Ok(p)
    }

    pub(crate) fn push(&mut self, t: f64, dz: f64, b: f64) -> Result<ReflectStep> {
        let prev = *self.states.last().expect("path started");
        let step = reflect_step(prev, dz, b)?;
        self.record(t, step, dz, b);
        Ok(step)
    }

    /// Appends a step already computed by [`reflect_step`] from the last state.
    pub(crate) fn record(&mut self, t: f64, step: ReflectStep, dz: f64, b: f64) {
        if dz.abs() > b {
            self.oversized_steps += 1;
        }
        let l = self.lower.last().copied().unwrap_or(0.0) + step.d_lower;
        let u = self.upper.last().copied().unwrap_or(0.0) + step.d_upper;
        self.times.push(t);
        self.states.push(step.state);
        self.lower.push(l);
        self.upper.push(u);
        self.d_lower.push(step.d_lower);
        self.d_upper.push(step.d_upper);
    }

    /// Number of steps (one less than the number of states).
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Relabels the time axis as `t_k = k * dt`.
    pub fn with_uniform_times(mut self, dt: f64) -> Self {
        for (k, t) in self.times.iter_mut().enumerate() {
            *t = k as f64 * dt;
        }
        self
    }

    /// `sum X_k dL_k`; zero for every path produced here.
    pub fn lower_complementarity(&self) -> f64 {
        self.states.iter().zip(&self.d_lower).map(|(x, d)| x * d).sum()
    }

    /// `sum (b - X_k) dU_k`; zero for every path produced here.
    pub fn upper_complementarity(&self, b: f64) -> f64 {
        self.states.iter().zip(&self.d_upper).map(|(x, d)| (b - x) * d).sum()
    }
}

/// Folds [`reflect_step`] over `increments` starting at `x0`. Times are the
/// step indices; see [`ReflectedPath::with_uniform_times`].
pub fn reflect_path(x0: f64, increments: &[f64], b: f64) -> Result<ReflectedPath> {
    let mut path = ReflectedPath::start(x0, b, increments.len() + 1)?;
    for (k, &dz) in increments.iter().enumerate() {
        path.push((k + 1) as f64, dz, b)?;
    }
    Ok(path)
}
