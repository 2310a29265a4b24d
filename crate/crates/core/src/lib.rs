//! American put pricing by the front-fixing explicit finite-difference
//! scheme, with Richardson-based a posteriori error control.
//!
//! The price `P(S, tau)` and the early-exercise boundary `S*(tau)` are
//! computed on the fixed domain `x = ln(S / S*(tau)) in [0, x_inf]`:
//!
//! ```
//! use frontfix::{build_grid, solve, GridSpec, ModelParams, SolveOptions};
//!
//! let model = ModelParams::new(0.1, 0.2, 1.0, 1.0).unwrap();
//! let grid = build_grid(&model, &GridSpec::new(1.0, 40, 20.0).unwrap()).unwrap();
//! let sol = solve(&model, &grid, &SolveOptions::default()).unwrap();
//! assert!((sol.final_sf() - 0.863700).abs() < 1e-6);
//! ```

pub mod cli;
pub mod error;
pub mod format;
pub mod grid;
pub mod oracle;
pub mod refine;
pub mod richardson;
pub mod solver;

pub use error::{BlowUp, BlowUpKind, Error, Result};
pub use grid::{build_grid, check_stability, Grid, GridSpec, ModelParams, StabilityReport};
pub use oracle::{black_scholes_european_put, crr_american_put, crr_european_put, LatticeSpec};
pub use refine::{adaptive_solve, Estimator, RefinementConfig, RefinementReport};
pub use richardson::{
    estimate_error, estimate_order, extrapolate, restrict, ErrorEstimate, OrderSchedule, Tableau,
};
pub use solver::{
    advance, price_at, solve, step_coefficients, untransform, Coefficients, PricePoint, Region,
    Solution, SolveOptions, Storage, TimeSlice,
};
