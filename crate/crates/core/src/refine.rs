//! Tolerance-driven uniform refinement.
//!
//! Grids are solved on a nested ladder `J_g = 2^g J_0`, `N_g = 4^g N_0` at a
//! fixed grid ratio. After each new level the finer solution is injected onto
//! the coarser grid and the field and boundary estimates are tested at every
//! shared time level `n >= 1`. The first finer grid whose estimates all stay
//! within the tolerance is accepted.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_grid, check_stability, Grid, GridSpec, ModelParams};
use crate::richardson::{field_estimates, restrict, OrderSchedule};
use crate::solver::{solve, Solution, SolveOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// `(U_fine - U_coarse) / (q^p0 - 1)`
    #[default]
    FirstRichardson,
    /// `U_fine - U_coarse`
    Safe,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_richardson" | "richardson" => Ok(Self::FirstRichardson),
            "safe" => Ok(Self::Safe),
            other => Err(Error::InvalidParameter(format!(
                "unknown estimator '{other}' (expected first_richardson or safe)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementConfig {
    pub model: ModelParams,
    /// Coarsest grid; its `N_0` comes from the ceiling rule.
    pub base: GridSpec,
    pub epsilon: f64,
    /// Maximum number of grids solved, the base included.
    pub max_levels: usize,
    pub estimator: Estimator,
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.base.validate()?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidParameter("max_levels must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "N")]
    pub steps: usize,
    /// Largest field estimate (sup-norm over `j`) over `n >= 1`; `None` on
    /// the base level, which has no coarser partner.
    pub max_err_p: Option<f64>,
    pub max_err_sf: Option<f64>,
    /// Coarse time level where `max_err_p` occurs.
    pub argmax_p: Option<usize>,
    pub accepted: bool,
    pub wall_time_ms: f64,
}

/// One point of an estimated-error history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub t: f64,
    pub err_p: f64,
    pub err_sf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub epsilon: f64,
    pub estimator: Estimator,
    pub schedule: OrderSchedule,
    pub levels: Vec<LevelRecord>,
    pub accepted_level: Option<usize>,
    /// `error_series[g]` holds the estimates of level `g` against `g - 1`
    /// on the coarse levels `n = 1..=N_{g-1}`; empty for `g = 0`.
    pub error_series: Vec<Vec<ErrorSample>>,
}

impl RefinementReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `t_n,err_p_supnorm,err_sf` rows for one level.
    pub fn series_csv(&self, level: usize) -> String {
        let mut out = String::from("t_n,err_p_supnorm,err_sf\n");
        for s in self.error_series.get(level).into_iter().flatten() {
            out.push_str(&format!(
                "{},{},{}\n",
                crate::format::num(s.t),
                crate::format::num(s.err_p),
                crate::format::num(s.err_sf)
            ));
        }
        out
    }

    pub fn accepted(&self) -> Option<&LevelRecord> {
        self.accepted_level.map(|g| &self.levels[g])
    }
}

/// Grid of ladder level `g` above `base`.
pub fn ladder_grid(base: &Grid, level: usize) -> Result<Grid> {
    let j = base.j() << level;
    let steps = base.steps * 4usize.pow(level as u32);
    Grid::with_steps(
        GridSpec {
            j,
            ..base.spec
        },
        base.maturity,
        steps,
    )
}

/// Runs the ladder until the tolerance holds; returns the accepted (finer)
/// solution with the report.
pub fn adaptive_solve(config: &RefinementConfig) -> Result<(Solution, RefinementReport)> {
    config.validate()?;
    let model = &config.model;
    let base = build_grid(model, &config.base)?;
    let stab = check_stability(model, &base);
    if !stab.is_ok() {
        return Err(Error::Unstable(stab));
    }
    let schedule = OrderSchedule::default();
    let use_safe = config.estimator == Estimator::Safe;
    let mut report = RefinementReport {
        epsilon: config.epsilon,
        estimator: config.estimator,
        schedule,
        levels: Vec::new(),
        accepted_level: None,
        error_series: Vec::new(),
    };

    let mut coarse: Option<Solution> = None;
    for level in 0..config.max_levels {
        let start = Instant::now();
        let grid = ladder_grid(&base, level)?;
        let fine = solve(model, &grid, &SolveOptions::full()).map_err(|e| Error::AtLevel {
            level,
            source: Box::new(e),
        })?;

        let mut record = LevelRecord {
            level,
            j: grid.j(),
            steps: grid.steps,
            max_err_p: None,
            max_err_sf: None,
            argmax_p: None,
            accepted: false,
            wall_time_ms: 0.0,
        };
        let mut series = Vec::new();

        if let Some(prev) = &coarse {
            let restricted = restrict(&fine, &prev.grid)?;
            let est = field_estimates(prev, &restricted, &schedule, use_safe)?;
            let mut max_p = 0.0_f64;
            let mut max_sf = 0.0_f64;
            let mut arg = 1;
            for n in 1..est.p_sup.len() {
                let ep = est.p_sup[n];
                let es = if use_safe {
                    est.s_f[n].e_s
                } else {
                    est.s_f[n].e_r
                };
                if ep > max_p {
                    max_p = ep;
                    arg = n;
                }
                max_sf = max_sf.max(es.abs());
                series.push(ErrorSample {
                    t: prev.grid.t_nodes[n],
                    err_p: ep,
                    err_sf: es,
                });
            }
            record.max_err_p = Some(max_p);
            record.max_err_sf = Some(max_sf);
            record.argmax_p = Some(arg);
            record.accepted = max_p <= config.epsilon && max_sf <= config.epsilon;
        }

        record.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
        let accepted = record.accepted;
        report.levels.push(record);
        report.error_series.push(series);
        if accepted {
            report.accepted_level = Some(level);
            return Ok((fine, report));
        }
        coarse = Some(fine);
    }
    Err(Error::ToleranceUnreachable(Box::new(report)))
}
