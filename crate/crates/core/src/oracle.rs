//! Independent reference prices: a Cox-Ross-Rubinstein lattice and the
//! closed-form European put. Nothing here depends on the finite-difference
//! solver.

use crate::error::{Error, Result};
use crate::grid::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatticeSpec {
    pub steps: usize,
}

impl LatticeSpec {
    pub fn new(steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::Lattice("at least one period is required".into()));
        }
        Ok(Self { steps })
    }
}

/// American put on a CRR tree, early exercise checked at every node.
pub fn crr_american_put(model: &ModelParams, s0: f64, lattice: LatticeSpec) -> Result<f64> {
    crr_put(model, s0, lattice, true)
}

/// The same tree without early exercise.
pub fn crr_european_put(model: &ModelParams, s0: f64, lattice: LatticeSpec) -> Result<f64> {
    crr_put(model, s0, lattice, false)
}

fn crr_put(model: &ModelParams, s0: f64, lattice: LatticeSpec, american: bool) -> Result<f64> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::InvalidParameter(format!("S0 must be positive, got {s0}")));
    }
    if lattice.steps == 0 {
        return Err(Error::Lattice("at least one period is required".into()));
    }
    let n = lattice.steps;
    let dt = model.maturity / n as f64;
    let u = (model.sigma * dt.sqrt()).exp();
    let d = 1.0 / u;
    let growth = (model.r * dt).exp();
    let p = (growth - d) / (u - d);
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Lattice(format!(
            "risk-neutral probability {p} outside [0, 1]; use more steps"
        )));
    }
    let disc = 1.0 / growth;
    let pu = disc * p;
    let pd = disc * (1.0 - p);
    let e = model.strike;

    // Node i at level k has price s0 u^i d^(k-i) = s0 u^(2i-k).
    let u2 = u * u;
    let mut values: Vec<f64> = Vec::with_capacity(n + 1);
    let mut s = s0 * d.powi(n as i32);
    for _ in 0..=n {
        values.push((e - s).max(0.0));
        s *= u2;
    }
    for k in (0..n).rev() {
        let mut s = s0 * d.powi(k as i32);
        for i in 0..=k {
            let cont = pu * values[i + 1] + pd * values[i];
            values[i] = if american { cont.max(e - s) } else { cont };
            s *= u2;
        }
    }
    Ok(values[0])
}

// Abramowitz & Stegun 26.2.17, |error| < 7.5e-8.
const AS_P: f64 = 0.231_641_9;
const AS_B: [f64; 5] = [
    0.319_381_530,
    -0.356_563_782,
    1.781_477_937,
    -1.821_255_978,
    1.330_274_429,
];

/// Standard normal CDF by polynomial approximation.
pub fn norm_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let z = x.abs();
    let t = 1.0 / (1.0 + AS_P * z);
    let poly = t * (AS_B[0] + t * (AS_B[1] + t * (AS_B[2] + t * (AS_B[3] + t * AS_B[4]))));
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let upper = pdf * poly;
    if x >= 0.0 {
        1.0 - upper
    } else {
        upper
    }
}

/// Black-Scholes value of the European put with time to maturity `tau`.
pub fn black_scholes_european_put(model: &ModelParams, s0: f64, tau: f64) -> f64 {
    let e = model.strike;
    if tau <= 0.0 {
        return (e - s0).max(0.0);
    }
    let vol = model.sigma * tau.sqrt();
    let d1 = ((s0 / e).ln() + (model.r + 0.5 * model.sigma * model.sigma) * tau) / vol;
    let d2 = d1 - vol;
    let value = e * (-model.r * tau).exp() * norm_cdf(-d2) - s0 * norm_cdf(-d1);
    value.max(0.0)
}
