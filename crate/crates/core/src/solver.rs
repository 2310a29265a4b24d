//! Explicit time marching of the front-fixed put problem.
//!
//! In `x = ln(S / S_f(tau))` the free boundary sits at `x = 0` and the
//! dimensionless price `p = P / E` solves a convection-diffusion equation
//! with an extra convection term driven by `S_f' / S_f`. Each step first
//! updates the boundary from level-`n` data through the closure at `x = 0`,
//! then applies the interior stencil with the boundary-velocity correction.

use serde::Serialize;

use crate::error::{BlowUp, BlowUpKind, Error, Result};
use crate::grid::{check_stability, Grid, ModelParams};

/// Denominators of the boundary update below this magnitude are singular.
const SINGULAR_DENOMINATOR: f64 = 1e-300;

/// Slack allowed by the invariant checks for rounding in `a1 - b1 s_f`.
const INVARIANT_SLACK: f64 = 1e-13;

/// Weights of the explicit stencil and the two constants of the boundary
/// closure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `1 + r dx^2 / sigma^2`
    pub a1: f64,
    /// `1 + dx + dx^2 / 2`
    pub b1: f64,
}

impl Coefficients {
    /// `p_1` implied by the free boundary through the closure at `x = 0`.
    #[inline]
    pub fn closure_p1(&self, s_f: f64) -> f64 {
        self.a1 - self.b1 * s_f
    }
}

/// Computes the stencil weights. The grid ratio is taken from the grid
/// itself (`dt / dx^2`), which equals the requested `mu` whenever
/// `T / (mu dx^2)` is an integer.
pub fn step_coefficients(model: &ModelParams, grid: &Grid) -> Coefficients {
    let mu = grid.ratio();
    let s2 = model.sigma * model.sigma;
    let drift = model.drift();
    let dx = grid.dx;
    Coefficients {
        a: 0.5 * mu * (s2 - drift * dx),
        b: 1.0 - mu * s2 - model.r * grid.dt,
        c: 0.5 * mu * (s2 + drift * dx),
        a1: 1.0 + model.r * dx * dx / s2,
        b1: 1.0 + dx + 0.5 * dx * dx,
    }
}

/// One time level of the transformed solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSlice {
    pub n: usize,
    pub t: f64,
    /// `p_j^n` for `j = 0..=J`, as a fraction of the strike.
    pub p: Vec<f64>,
    /// Free boundary `S_f^n` as a fraction of the strike.
    pub s_f: f64,
}

impl TimeSlice {
    /// Payoff at expiry: `p = 0` everywhere and the boundary at the strike.
    pub fn initial(grid: &Grid) -> Self {
        Self {
            n: 0,
            t: 0.0,
            p: vec![0.0; grid.j() + 1],
            s_f: 1.0,
        }
    }
}

/// Advances `slice` by one step.
pub fn advance(slice: &TimeSlice, coeffs: &Coefficients, grid: &Grid) -> Result<TimeSlice> {
    let mut next = vec![0.0; slice.p.len()];
    let s_f = step_into(&slice.p, slice.s_f, slice.n, &mut next, coeffs, grid.dx)?;
    let n = slice.n + 1;
    Ok(TimeSlice {
        n,
        t: grid.t_nodes.get(n).copied().unwrap_or(n as f64 * grid.dt),
        p: next,
        s_f,
    })
}

/// Core update shared by [`advance`] and [`solve`]. Writes `p^{n+1}` into
/// `next` and returns `S_f^{n+1}`.
fn step_into(
    p: &[f64],
    s_f: f64,
    n: usize,
    next: &mut [f64],
    k: &Coefficients,
    dx: f64,
) -> Result<f64> {
    let jmax = p.len() - 1;
    let dp1 = (p[2] - p[0]) / (2.0 * dx);
    let denom = dp1 + k.b1 * s_f;
    // Negated so that NaN also trips.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(denom.abs() >= SINGULAR_DENOMINATOR) {
        return Err(Error::SingularDenominator { step: n + 1 });
    }
    let d = (k.a1 - (k.a * p[0] + k.b * p[1] + k.c * p[2] - dp1)) / denom;
    let s_next = d * s_f;
    if !(s_next > 0.0 && s_next <= 1.0) {
        return Err(Error::BlowUp(Box::new(BlowUp {
            kind: BlowUpKind::FreeBoundaryOutOfRange,
            step: n + 1,
            s_f: s_next,
            row_step: n,
            row: p.to_vec(),
        })));
    }

    next[0] = 1.0 - s_next;
    next[1] = k.closure_p1(s_next);
    let shift = (s_next - s_f) / s_f / (2.0 * dx);
    let a_mod = k.a - shift;
    let c_mod = k.c + shift;
    for j in 2..jmax {
        next[j] = a_mod * p[j - 1] + k.b * p[j] + c_mod * p[j + 1];
    }
    next[jmax] = 0.0;

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if next.iter().any(|v| !(v.abs() <= 1.0)) {
        return Err(Error::BlowUp(Box::new(BlowUp {
            kind: BlowUpKind::SupNormExceeded,
            step: n + 1,
            s_f: s_next,
            row_step: n + 1,
            row: next.to_vec(),
        })));
    }
    Ok(s_next)
}

/// Which time levels a [`Solution`] keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Storage {
    /// Every level `0..=N`.
    Full,
    /// Level 0, the final level and the requested snapshots.
    #[default]
    Lean,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// March even when the grid fails the positivity conditions.
    pub force: bool,
    pub storage: Storage,
    /// Times whose nearest levels are retained in lean mode.
    pub snapshots: Vec<f64>,
    /// Check positivity, monotonicity and boundary decay at every step.
    pub verify: bool,
}

impl SolveOptions {
    pub fn full() -> Self {
        Self {
            storage: Storage::Full,
            ..Self::default()
        }
    }
}

/// Result of a march over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub grid: Grid,
    pub model: ModelParams,
    /// `S_f^n` for every `n = 0..=N`, regardless of storage mode.
    pub s_f: Vec<f64>,
    /// Retained slices, ascending in `n`.
    pub slices: Vec<TimeSlice>,
    pub storage: Storage,
}

impl Solution {
    pub fn slice(&self, n: usize) -> Option<&TimeSlice> {
        self.slices
            .binary_search_by_key(&n, |s| s.n)
            .ok()
            .map(|i| &self.slices[i])
    }

    pub fn final_slice(&self) -> &TimeSlice {
        self.slices.last().expect("solution always holds its final slice")
    }

    pub fn final_sf(&self) -> f64 {
        *self.s_f.last().expect("non-empty boundary series")
    }

    pub fn is_full(&self) -> bool {
        self.storage == Storage::Full
    }
}

/// Marches from the payoff to maturity.
pub fn solve(model: &ModelParams, grid: &Grid, opts: &SolveOptions) -> Result<Solution> {
    model.validate()?;
    let report = check_stability(model, grid);
    if !report.is_ok() && !opts.force {
        return Err(Error::Unstable(report));
    }
    let coeffs = step_coefficients(model, grid);

    let keep: Vec<usize> = match opts.storage {
        Storage::Full => Vec::new(),
        Storage::Lean => {
            let mut v: Vec<usize> = opts.snapshots.iter().map(|&t| grid.nearest_level(t)).collect();
            v.sort_unstable();
            v.dedup();
            v
        }
    };

    let first = TimeSlice::initial(grid);
    let mut s_f = Vec::with_capacity(grid.steps + 1);
    s_f.push(first.s_f);
    let mut cur = first.p.clone();
    let mut next = vec![0.0; cur.len()];
    let mut slices = vec![first];

    for n in 0..grid.steps {
        let s_prev = s_f[n];
        let s_next = step_into(&cur, s_prev, n, &mut next, &coeffs, grid.dx)?;
        if opts.verify {
            verify_level(n + 1, &next, s_prev, s_next)?;
        }
        std::mem::swap(&mut cur, &mut next);
        s_f.push(s_next);
        let m = n + 1;
        let retain = match opts.storage {
            Storage::Full => true,
            Storage::Lean => m == grid.steps || keep.binary_search(&m).is_ok(),
        };
        if retain {
            slices.push(TimeSlice {
                n: m,
                t: grid.t_nodes[m],
                p: cur.clone(),
                s_f: s_next,
            });
        }
    }

    Ok(Solution {
        grid: grid.clone(),
        model: *model,
        s_f,
        slices,
        storage: opts.storage,
    })
}

fn verify_level(n: usize, p: &[f64], s_prev: f64, s_next: f64) -> Result<()> {
    let fail = |what: String| Err(Error::Invariant { step: n, what });
    if !(s_next > 0.0 && s_next <= s_prev) {
        return fail(format!("free boundary {s_next} not in (0, {s_prev}]"));
    }
    for (j, &v) in p.iter().enumerate() {
        if !(-INVARIANT_SLACK..=1.0 + INVARIANT_SLACK).contains(&v) {
            return fail(format!("p_{j} = {v} outside [0, 1]"));
        }
    }
    for j in 0..p.len() - 1 {
        if p[j + 1] > p[j] + INVARIANT_SLACK {
            return fail(format!("p_{} = {} exceeds p_{j} = {}", j + 1, p[j + 1], p[j]));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Continuation,
    Exercise,
}

/// An option value in financial variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricePoint {
    /// Asset price.
    pub s: f64,
    /// Time to maturity.
    pub tau: f64,
    /// Option value.
    pub price: f64,
    pub region: Region,
}

/// Maps level `n` back to `(S, P)`: the exercise boundary point first,
/// then one continuation point per grid node.
pub fn untransform(solution: &Solution, n: usize) -> Result<Vec<PricePoint>> {
    let slice = solution.slice(n).ok_or_else(|| {
        Error::InvalidParameter(format!("time level {n} is not retained in this solution"))
    })?;
    let e = solution.model.strike;
    let boundary = e * slice.s_f;
    let mut out = Vec::with_capacity(slice.p.len() + 1);
    out.push(PricePoint {
        s: boundary,
        tau: slice.t,
        price: e - boundary,
        region: Region::Exercise,
    });
    out.extend(
        solution
            .grid
            .x_nodes
            .iter()
            .zip(&slice.p)
            .map(|(&x, &p)| PricePoint {
                s: boundary * x.exp(),
                tau: slice.t,
                price: e * p,
                region: Region::Continuation,
            }),
    );
    Ok(out)
}

/// Option value at `(S, tau)`, read from the nearest retained time level
/// and linearly interpolated in `x`.
pub fn price_at(solution: &Solution, s: f64, tau: f64) -> Result<PricePoint> {
    let grid = &solution.grid;
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidParameter(format!("S must be positive, got {s}")));
    }
    let slack = 1e-12 * grid.maturity;
    if !(tau >= -slack && tau <= grid.maturity + slack) {
        return Err(Error::InvalidParameter(format!(
            "tau = {tau} outside [0, {}]",
            grid.maturity
        )));
    }
    let n = grid.nearest_level(tau);
    let slice = solution.slice(n).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "time level {n} (tau = {tau}) is not retained; solve with full storage or a snapshot"
        ))
    })?;
    let e = solution.model.strike;
    let boundary = e * slice.s_f;
    if s < boundary {
        return Ok(PricePoint {
            s,
            tau,
            price: e - s,
            region: Region::Exercise,
        });
    }
    let x = (s / boundary).ln();
    let price = if x >= grid.spec.x_inf {
        0.0
    } else {
        let pos = x / grid.dx;
        let j = (pos.floor() as usize).min(grid.j() - 1);
        let w = pos - j as f64;
        e * ((1.0 - w) * slice.p[j] + w * slice.p[j + 1])
    };
    Ok(PricePoint {
        s,
        tau,
        price,
        region: Region::Continuation,
    })
}
