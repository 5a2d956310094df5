//! Problem data: grids, scenarios, control sets, sampled assumption checks
//! and the linear boundary-data lift.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Coefficient depending on `(t, x, w)`.
pub type StateFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;
/// Coefficient depending on `(t, x, theta, w)`.
pub type ControlledFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;
/// Boundary trace depending on `(t, w)`.
pub type TraceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
/// Terminal cost depending on `(x, w)`.
pub type TerminalFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Uniform time-space discretization of `[0, T] x [0, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    barrier: f64,
    nx: usize,
    horizon: f64,
    nt: usize,
}

impl Grid {
    pub fn new(barrier: f64, nx: usize, horizon: f64, nt: usize) -> Result<Self> {
        if !(barrier.is_finite() && barrier > 0.0) {
            return Err(Error::Parameter(format!("barrier b must be > 0, got {barrier}")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Parameter(format!("horizon T must be > 0, got {horizon}")));
        }
        if nx < 2 {
            return Err(Error::Parameter(format!("nx must be >= 2, got {nx}")));
        }
        if nt < 1 {
            return Err(Error::Parameter(format!("nt must be >= 1, got {nt}")));
        }
        Ok(Self { barrier, nx, horizon, nt })
    }

    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of spatial cells; there are `nx + 1` nodes.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of time steps; there are `nt + 1` time layers.
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn dx(&self) -> f64 {
        self.barrier / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Node `x_i`. The last node is exactly `b`.
    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx {
            self.barrier
        } else {
            self.barrier * i as f64 / self.nx as f64
        }
    }

    /// Time layer `t_k`. The last layer is exactly `T`.
    pub fn t(&self, k: usize) -> f64 {
        if k == self.nt {
            self.horizon
        } else {
            self.horizon * k as f64 / self.nt as f64
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..=self.nt).map(|k| self.t(k)).collect()
    }

    /// Index of the node closest to `x`, clamped to the grid.
    pub fn nearest_node(&self, x: f64) -> usize {
        let i = (x / self.dx()).round();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.nx)
        }
    }

    /// Same grid with a different resolution.
    pub fn refined(&self, nx: usize, nt: usize) -> Result<Self> {
        Self::new(self.barrier, nx, self.horizon, nt)
    }
}

/// Spatial and temporal grid construction with parameter checks.
pub fn build_grid(b: f64, nx: usize, horizon: f64, nt: usize) -> Result<Grid> {
    Grid::new(b, nx, horizon, nt)
}

/// Scalar admissible control set.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    /// Finite list of control values.
    Finite(Vec<f64>),
    /// Closed interval minimized over `n` equally spaced points.
    Interval { lo: f64, hi: f64, n: usize },
}

impl ControlSet {
    pub fn finite(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Parameter("control set must be nonempty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("control values must be finite".into()));
        }
        let mut values = values;
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self::Finite(values))
    }

    pub fn interval(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::Parameter(format!("interval control set needs lo <= hi, got [{lo}, {hi}]")));
        }
        if n < 2 {
            return Err(Error::Parameter(format!("interval resolution must be >= 2, got {n}")));
        }
        Ok(Self::Interval { lo, hi, n })
    }

    pub fn single(value: f64) -> Self {
        Self::Finite(vec![value])
    }

    /// Candidate controls in ascending order. The first minimizer in this
    /// order is the tie-break winner.
    pub fn candidates(&self) -> Vec<f64> {
        match self {
            Self::Finite(v) => v.clone(),
            Self::Interval { lo, hi, n } => (0..*n)
                .map(|j| {
                    if j + 1 == *n {
                        *hi
                    } else {
                        lo + (hi - lo) * j as f64 / (*n - 1) as f64
                    }
                })
                .collect(),
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        match self {
            Self::Finite(v) => v.contains(&theta),
            Self::Interval { lo, hi, .. } => *lo <= theta && theta <= *hi,
        }
    }

    pub fn min(&self) -> f64 {
        self.candidates()[0]
    }

    pub fn max(&self) -> f64 {
        *self.candidates().last().expect("nonempty control set")
    }
}

/// Whether coefficients may depend on the current Wiener value `w = W_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientMode {
    Deterministic,
    WMarkovian,
}

/// Full datum of a control problem on `[0, T] x [0, b]`.
///
/// Drift `beta`, volatilities `sigma` (loading on `W`) and `sigma_bar`
/// (loading on `B`), running cost `running_cost`, boundary traces `g0`, `gb`
/// and terminal cost `terminal`. `kappa`, `k_bound`, `lambda` are the
/// declared super-parabolicity floor, coefficient sup bound and Lipschitz
/// bound on the spatial derivative of the drift.
#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub beta: ControlledFn,
    pub sigma: StateFn,
    pub sigma_bar: StateFn,
    pub running_cost: ControlledFn,
    pub g0: TraceFn,
    pub gb: TraceFn,
    pub terminal: TerminalFn,
    pub controls: ControlSet,
    pub kappa: f64,
    pub k_bound: f64,
    pub lambda: f64,
    pub barrier: f64,
    pub horizon: f64,
    pub mode: CoefficientMode,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("controls", &self.controls)
            .field("kappa", &self.kappa)
            .field("k_bound", &self.k_bound)
            .field("lambda", &self.lambda)
            .field("barrier", &self.barrier)
            .field("horizon", &self.horizon)
            .field("mode", &self.mode)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    /// Scenario with all coefficients zero except `sigma_bar = 1`.
    ///
    /// `kappa` defaults to `1e-6`, `k_bound` to 1 and `lambda` to 0.
    pub fn new(name: impl Into<String>, barrier: f64, horizon: f64, controls: ControlSet) -> Self {
        Self {
            name: name.into(),
            beta: Arc::new(|_, _, _, _| 0.0),
            sigma: Arc::new(|_, _, _| 0.0),
            sigma_bar: Arc::new(|_, _, _| 1.0),
            running_cost: Arc::new(|_, _, _, _| 0.0),
            g0: Arc::new(|_, _| 0.0),
            gb: Arc::new(|_, _| 0.0),
            terminal: Arc::new(|_, _| 0.0),
            controls,
            kappa: 1e-6,
            k_bound: 1.0,
            lambda: 0.0,
            barrier,
            horizon,
            mode: CoefficientMode::Deterministic,
        }
    }

    pub fn with_beta(mut self, f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.beta = Arc::new(f);
        self
    }

    pub fn with_sigma(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.sigma = Arc::new(f);
        self
    }

    pub fn with_sigma_bar(mut self, f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.sigma_bar = Arc::new(f);
        self
    }

    pub fn with_running_cost(
        mut self,
        f: impl Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.running_cost = Arc::new(f);
        self
    }

    pub fn with_boundary(
        mut self,
        g0: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        gb: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.g0 = Arc::new(g0);
        self.gb = Arc::new(gb);
        self
    }

    pub fn with_terminal(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.terminal = Arc::new(f);
        self
    }

    pub fn with_bounds(mut self, kappa: f64, k_bound: f64, lambda: f64) -> Self {
        self.kappa = kappa;
        self.k_bound = k_bound;
        self.lambda = lambda;
        self
    }

    pub fn with_mode(mut self, mode: CoefficientMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn is_deterministic(&self) -> bool {
        self.mode == CoefficientMode::Deterministic
    }

    /// Total diffusion `sigma^2 + sigma_bar^2` at `(t, x, w)`.
    pub fn diffusion(&self, t: f64, x: f64, w: f64) -> f64 {
        let s = (self.sigma)(t, x, w);
        let sb = (self.sigma_bar)(t, x, w);
        s * s + sb * sb
    }

    /// Largest `|beta|` over grid nodes, time layers and control candidates.
    pub fn max_drift_on(&self, grid: &Grid) -> f64 {
        let thetas = self.controls.candidates();
        let mut m = 0.0_f64;
        for k in 0..=grid.nt() {
            let t = grid.t(k);
            for i in 0..=grid.nx() {
                let x = grid.x(i);
                for &th in &thetas {
                    m = m.max((self.beta)(t, x, th, 0.0).abs());
                }
            }
        }
        m
    }

    /// Grid with this scenario's barrier and horizon.
    pub fn grid(&self, nx: usize, nt: usize) -> Result<Grid> {
        Grid::new(self.barrier, nx, self.horizon, nt)
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.barrier() != self.barrier || grid.horizon() != self.horizon {
            return Err(Error::Dimension(format!(
                "grid [0,{}]x[0,{}] does not match scenario [0,{}]x[0,{}]",
                grid.horizon(),
                grid.barrier(),
                self.horizon,
                self.barrier
            )));
        }
        Ok(())
    }
}

/// Linear interpolant of the boundary traces and its spatial antiderivative.
///
/// `g(t, x) = g0(t) + (gb(t) - g0(t)) x / b` and
/// `ghat(t, x) = g0(t) x + (gb(t) - g0(t)) x^2 / (2b)`. Subtracting `ghat`
/// from a solution turns the Neumann data `(g0, gb)` into zero data. The
/// traces are taken as deterministic (evaluated at `w = 0`).
#[derive(Clone)]
pub struct BoundaryLift {
    g0: TraceFn,
    gb: TraceFn,
    barrier: f64,
    horizon: f64,
}

impl fmt::Debug for BoundaryLift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryLift")
            .field("barrier", &self.barrier)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl BoundaryLift {
    fn traces(&self, t: f64) -> (f64, f64) {
        ((self.g0)(t, 0.0), (self.gb)(t, 0.0))
    }

    pub fn g(&self, t: f64, x: f64) -> f64 {
        let (a, c) = self.traces(t);
        a + (c - a) * x / self.barrier
    }

    /// Constant spatial slope of `g` at time `t`.
    pub fn dg_dx(&self, t: f64) -> f64 {
        let (a, c) = self.traces(t);
        (c - a) / self.barrier
    }

    /// Antiderivative of `g` in `x` with `ghat(t, 0) = 0`. Valid as a
    /// polynomial for `x` slightly outside `[0, b]` (ghost nodes).
    pub fn ghat(&self, t: f64, x: f64) -> f64 {
        let (a, c) = self.traces(t);
        a * x + (c - a) * x * x / (2.0 * self.barrier)
    }

    /// Time derivative of `ghat`, by second-order differences of the traces
    /// (central inside `[0, T]`, one-sided at the ends).
    pub fn dghat_dt(&self, t: f64, x: f64) -> f64 {
        let h = 1e-5 * self.horizon;
        if t - h < 0.0 {
            (-3.0 * self.ghat(t, x) + 4.0 * self.ghat(t + h, x) - self.ghat(t + 2.0 * h, x)) / (2.0 * h)
        } else if t + h > self.horizon {
            (3.0 * self.ghat(t, x) - 4.0 * self.ghat(t - h, x) + self.ghat(t - 2.0 * h, x)) / (2.0 * h)
        } else {
            (self.ghat(t + h, x) - self.ghat(t - h, x)) / (2.0 * h)
        }
    }
}

/// Builds the linear lift of the boundary traces `g0`, `gb` over `grid`.
pub fn lift_boundary(g0: TraceFn, gb: TraceFn, grid: &Grid) -> BoundaryLift {
    BoundaryLift { g0, gb, barrier: grid.barrier(), horizon: grid.horizon() }
}

/// Sampled extrema behind the well-posedness assumptions.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Sampled minimum of `sigma_bar^2`.
    pub kappa_hat: f64,
    /// Sampled sup of `|sigma|`, `|sigma_bar|` and their spatial difference quotients.
    pub k_hat: f64,
    /// Sampled sup of `|d beta / dx|` over the control candidates.
    pub lambda_hat: f64,
    pub pass_super_parabolic: bool,
    pub pass_volatility_bound: bool,
    pub pass_drift_lipschitz: bool,
    /// In deterministic mode, whether every coefficient ignored `w` at the samples.
    pub pass_mode: bool,
    pub samples: usize,
}

impl ValidationReport {
    pub fn passes(&self) -> bool {
        self.pass_super_parabolic && self.pass_volatility_bound && self.pass_drift_lipschitz && self.pass_mode
    }
}

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while n > 0 {
        r += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    r
}

fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Samples the coefficients on a Cranley-Patterson rotated Halton set of
/// `(t, x, w)` points, `w` ranging over `[-3 sqrt(T), 3 sqrt(T)]`, and
/// reports the extrema against the declared bounds.
pub fn validate_scenario(s: &Scenario, n_samples: usize, seed: u64) -> ValidationReport {
    let n_samples = n_samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift = [unit_f64(&mut rng), unit_f64(&mut rng), unit_f64(&mut rng)];
    let w_range = 3.0 * s.horizon.sqrt();
    let h = s.barrier * 1e-4;
    let thetas = s.controls.candidates();

    let mut kappa_hat = f64::INFINITY;
    let mut k_hat = 0.0_f64;
    let mut lambda_hat = 0.0_f64;
    let mut mode_ok = true;

    for n in 1..=n_samples as u64 {
        let q = [radical_inverse(n, 2), radical_inverse(n, 3), radical_inverse(n, 5)];
        let u: Vec<f64> = q.iter().zip(shift).map(|(a, b)| (a + b).fract()).collect();
        let t = u[0] * s.horizon;
        let x = u[1] * s.barrier;
        let w = (2.0 * u[2] - 1.0) * w_range;
        let (xa, xb) = if x + h <= s.barrier { (x, x + h) } else { (x - h, x) };

        let sb = (s.sigma_bar)(t, x, w);
        let sg = (s.sigma)(t, x, w);
        kappa_hat = kappa_hat.min(sb * sb);
        let dsg = ((s.sigma)(t, xb, w) - (s.sigma)(t, xa, w)) / h;
        let dsb = ((s.sigma_bar)(t, xb, w) - (s.sigma_bar)(t, xa, w)) / h;
        k_hat = k_hat.max(sg.abs()).max(sb.abs()).max(dsg.abs()).max(dsb.abs());
        for &th in &thetas {
            let db = ((s.beta)(t, xb, th, w) - (s.beta)(t, xa, th, w)) / h;
            lambda_hat = lambda_hat.max(db.abs());
        }

        if s.is_deterministic() {
            let w2 = -w + 0.5;
            let th = thetas[(n as usize) % thetas.len()];
            mode_ok &= (s.sigma)(t, x, w) == (s.sigma)(t, x, w2)
                && (s.sigma_bar)(t, x, w) == (s.sigma_bar)(t, x, w2)
                && (s.beta)(t, x, th, w) == (s.beta)(t, x, th, w2)
                && (s.running_cost)(t, x, th, w) == (s.running_cost)(t, x, th, w2)
                && (s.g0)(t, w) == (s.g0)(t, w2)
                && (s.gb)(t, w) == (s.gb)(t, w2)
                && (s.terminal)(x, w) == (s.terminal)(x, w2);
        }
    }

    ValidationReport {
        kappa_hat,
        k_hat,
        lambda_hat,
        pass_super_parabolic: s.kappa > 0.0 && kappa_hat >= s.kappa,
        pass_volatility_bound: k_hat <= s.k_bound,
        // Difference quotients of exactly linear drifts carry rounding noise.
        pass_drift_lipschitz: lambda_hat <= s.lambda + 1e-8,
        pass_mode: mode_ok,
        samples: n_samples,
    }
}
