//! Truncated uniform mesh in log-moneyness and time, plus the positivity
//! conditions the explicit scheme needs on it.
//!
//! The mesh covers `[0, x_inf] x [0, T]` with `J` space intervals. The time
//! step is tied to the space step through the grid ratio `mu = dt / dx^2`;
//! the number of steps is the ceiling of `T / (mu dx^2)` and the step is then
//! shrunk to `T / N` so the last level lands on maturity exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack applied before taking the ceiling of `T / (mu dx^2)`, so
/// a ratio that is an integer up to rounding does not gain an extra step.
const CEIL_SLACK: f64 = 1e-9;

/// Relative threshold below which `r` and `sigma^2 / 2` count as equal.
const DRIFT_DEGENERACY: f64 = 1e-14;

/// Market and contract constants of the American put.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Risk-free rate.
    pub r: f64,
    /// Volatility.
    pub sigma: f64,
    /// Strike price `E`.
    pub strike: f64,
    /// Maturity `T` in years.
    pub maturity: f64,
}

impl ModelParams {
    pub fn new(r: f64, sigma: f64, strike: f64, maturity: f64) -> Result<Self> {
        let m = Self {
            r,
            sigma,
            strike,
            maturity,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        positive("r", self.r)?;
        positive("sigma", self.sigma)?;
        positive("strike", self.strike)?;
        positive("maturity", self.maturity)
    }

    /// Drift of the log-price, `r - sigma^2 / 2`.
    pub fn drift(&self) -> f64 {
        self.r - 0.5 * self.sigma * self.sigma
    }

    /// True when `r` equals `sigma^2 / 2` up to rounding, in which case the
    /// convective part of the stencil vanishes.
    pub fn drift_is_degenerate(&self) -> bool {
        let s2 = self.sigma * self.sigma;
        self.drift().abs() <= DRIFT_DEGENERACY * self.r.max(s2)
    }
}

/// User-facing mesh parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Truncated far-field boundary in `x = ln(S / S_f)`.
    pub x_inf: f64,
    /// Number of space intervals.
    #[serde(rename = "J")]
    pub j: usize,
    /// Grid ratio `dt / dx^2`.
    pub mu: f64,
}

impl GridSpec {
    pub fn new(x_inf: f64, j: usize, mu: f64) -> Result<Self> {
        let s = Self { x_inf, j, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        positive("x_inf", self.x_inf)?;
        positive("mu", self.mu)?;
        if self.j < 3 {
            return Err(Error::InvalidParameter(format!(
                "J must be at least 3, got {}",
                self.j
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.x_inf / self.j as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    pub spec: GridSpec,
    pub maturity: f64,
    pub dx: f64,
    pub dt: f64,
    /// Number of time steps `N`.
    pub steps: usize,
    pub x_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
}

impl Grid {
    /// Mesh with an explicitly chosen number of time steps. Used by the
    /// refinement ladder, where `N` is fixed by nesting rather than by the
    /// ceiling rule.
    pub fn with_steps(spec: GridSpec, maturity: f64, steps: usize) -> Result<Self> {
        spec.validate()?;
        positive("maturity", maturity)?;
        if steps == 0 {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        let dx = spec.dx();
        let dt = maturity / steps as f64;
        let x_nodes = (0..=spec.j).map(|j| j as f64 * dx).collect();
        let t_nodes = (0..=steps).map(|n| n as f64 * dt).collect();
        Ok(Self {
            spec,
            maturity,
            dx,
            dt,
            steps,
            x_nodes,
            t_nodes,
        })
    }

    /// Number of space intervals `J`.
    pub fn j(&self) -> usize {
        self.spec.j
    }

    /// Effective grid ratio `dt / dx^2` after `dt` was fitted to `T / N`.
    pub fn ratio(&self) -> f64 {
        self.dt / (self.dx * self.dx)
    }

    /// Index of the time level closest to `t`.
    pub fn nearest_level(&self, t: f64) -> usize {
        ((t / self.dt).round().max(0.0) as usize).min(self.steps)
    }
}

/// Outcome of the positivity test on `(dx, dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilityReport {
    pub dx_bound_ok: bool,
    pub dt_bound_ok: bool,
    /// `sigma^2 / |r - sigma^2/2|`; `None` when the drift vanishes.
    pub dx_limit: Option<f64>,
    /// `dx^2 / (sigma^2 + r dx^2)`.
    pub dt_limit: f64,
    pub coefficients_nonneg: bool,
}

impl StabilityReport {
    pub fn is_ok(&self) -> bool {
        self.coefficients_nonneg
    }
}

/// Builds the mesh for `model` from `spec`, with `N = ceil(T / (mu dx^2))`
/// and `dt = T / N`.
pub fn build_grid(model: &ModelParams, spec: &GridSpec) -> Result<Grid> {
    model.validate()?;
    spec.validate()?;
    let dx = spec.dx();
    let ratio = model.maturity / (spec.mu * dx * dx);
    if !ratio.is_finite() || ratio > usize::MAX as f64 / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "time step count T/(mu dx^2) = {ratio} is not representable"
        )));
    }
    let steps = ((ratio * (1.0 - CEIL_SLACK)).ceil() as usize).max(1);
    Grid::with_steps(*spec, model.maturity, steps)
}

/// Evaluates the two inequalities under which the interior stencil weights
/// are non-negative. Pure predicate: callers decide whether a violation is
/// fatal.
pub fn check_stability(model: &ModelParams, grid: &Grid) -> StabilityReport {
    let s2 = model.sigma * model.sigma;
    let dx2 = grid.dx * grid.dx;
    let dt_limit = dx2 / (s2 + model.r * dx2);
    let dt_bound_ok = grid.dt <= dt_limit;
    let (dx_limit, dx_bound_ok) = if model.drift_is_degenerate() {
        (None, true)
    } else {
        let lim = s2 / model.drift().abs();
        (Some(lim), grid.dx <= lim)
    };
    StabilityReport {
        dx_bound_ok,
        dt_bound_ok,
        dx_limit,
        dt_limit,
        coefficients_nonneg: dx_bound_ok && dt_bound_ok,
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}
