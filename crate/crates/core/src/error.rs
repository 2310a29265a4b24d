use thiserror::Error;

use crate::grid::StabilityReport;
use crate::refine::RefinementReport;

/// Why a time step was rejected as a numerical blow-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlowUpKind {
    /// The updated free boundary left the interval (0, 1].
    FreeBoundaryOutOfRange,
    /// The updated price row exceeded 1 in sup-norm.
    SupNormExceeded,
}

/// Diagnostic context for a blown-up march.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUp {
    pub kind: BlowUpKind,
    /// Index `n + 1` of the level that could not be accepted.
    pub step: usize,
    /// Offending free-boundary value at `step`.
    pub s_f: f64,
    /// Time level of `row`.
    pub row_step: usize,
    /// The last price row available when the march stopped.
    pub row: Vec<f64>,
}

impl BlowUp {
    /// Number of strict sign changes along `row` (zeros are skipped).
    pub fn sign_changes(&self) -> usize {
        let mut last = 0.0_f64;
        let mut changes = 0;
        for &v in &self.row {
            if v == 0.0 {
                continue;
            }
            if last != 0.0 && (v > 0.0) != (last > 0.0) {
                changes += 1;
            }
            last = v;
        }
        changes
    }

    pub fn sup_norm(&self) -> f64 {
        self.row.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "grid violates the positivity conditions (dx {dx_ok}, dt {dt_ok})",
        dx_ok = if .0.dx_bound_ok { "ok" } else { "too large" },
        dt_ok = if .0.dt_bound_ok { "ok" } else { "too large" }
    )]
    Unstable(StabilityReport),

    #[error("blow-up at step {}: {:?}, s_f = {}", .0.step, .0.kind, .0.s_f)]
    BlowUp(Box<BlowUp>),

    #[error("singular free-boundary denominator at step {step}")]
    SingularDenominator { step: usize },

    #[error("degenerate extrapolation schedule: q^p_{level} = 1")]
    DegenerateSchedule { level: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("grids are not nested: {0}")]
    NotNested(String),

    #[error("binomial lattice invalid: {0}")]
    Lattice(String),

    #[error("tolerance not reached after {} levels", .0.levels.len())]
    ToleranceUnreachable(Box<RefinementReport>),

    #[error("refinement level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated at step {step}: {what}")]
    Invariant { step: usize, what: String },
}

impl Error {
    /// Follows `AtLevel` wrappers down to the originating error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtLevel { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
