//! Richardson extrapolation on nested grids and the a posteriori error
//! estimators built from it.
//!
//! With the grid ratio held fixed, a computed quantity behaves like
//! `u = U_N + C_0 N^-p0 + C_1 N^-p1 + ...` with `p_k = p0 + k * step`. Two
//! solutions on grids whose step counts differ by the factor `q` give an
//! error estimate for the finer one; a ladder of them gives the repeated
//! extrapolation tableau.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::solver::Solution;

/// Orders of the asymptotic error expansion and the refinement ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderSchedule {
    /// Leading order `p0`.
    pub p0: f64,
    /// Increment `p1 - p0` between successive orders.
    pub step: f64,
    /// Refinement ratio `N_{g+1} / N_g`.
    pub q: f64,
}

impl Default for OrderSchedule {
    /// First order in time, `p_k = k + 1`, with `q = 4` (space halved at a
    /// fixed grid ratio).
    fn default() -> Self {
        Self {
            p0: 1.0,
            step: 1.0,
            q: 4.0,
        }
    }
}

impl OrderSchedule {
    pub fn new(p0: f64, step: f64, q: f64) -> Result<Self> {
        if !(p0 > 0.0 && p0.is_finite()) || !(step > 0.0 && step.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "orders must be positive, got p0 = {p0}, step = {step}"
            )));
        }
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::InvalidParameter(format!("q must exceed 1, got {q}")));
        }
        Ok(Self { p0, step, q })
    }

    pub fn order(&self, k: usize) -> f64 {
        self.p0 + k as f64 * self.step
    }

    /// `q^{p_k} - 1`, the denominator of the `k`-th extrapolation.
    pub fn denominator(&self, k: usize) -> Result<f64> {
        let d = self.q.powf(self.order(k)) - 1.0;
        if d == 0.0 || !d.is_finite() {
            return Err(Error::DegenerateSchedule { level: k });
        }
        Ok(d)
    }
}

/// Triangular table `U_{g,k}`, `k <= g`, of repeated extrapolations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tableau {
    /// `entries[g][k]`; row `g` has `g + 1` entries.
    pub entries: Vec<Vec<f64>>,
    pub schedule: OrderSchedule,
}

impl Tableau {
    pub fn rows(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, g: usize, k: usize) -> Option<f64> {
        self.entries.get(g).and_then(|row| row.get(k)).copied()
    }

    /// The most extrapolated value, `U_{G-1,G-1}`.
    pub fn best(&self) -> f64 {
        let last = self.entries.last().expect("tableau has at least one row");
        *last.last().expect("rows are non-empty")
    }

    /// CSV with columns `U_g0 .. U_gK`; entries above the diagonal are left
    /// empty.
    pub fn to_csv(&self) -> String {
        let width = self.rows();
        let mut out = String::new();
        let header: Vec<String> = (0..width).map(|k| format!("U_g{k}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.entries {
            let cells: Vec<String> = (0..width)
                .map(|k| row.get(k).map(|&v| crate::format::num(v)).unwrap_or_default())
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned text table at 6 decimals. `labels` (typically the step
    /// counts `N_g`) fill the first column when given.
    pub fn render_text(&self, labels: Option<&[usize]>) -> String {
        let width = self.rows();
        let mut out = String::new();
        let _ = write!(out, "{:>8} |", "N");
        for k in 0..width {
            let _ = write!(out, " {:>10}", format!("U_g{k}"));
        }
        out.push('\n');
        let _ = writeln!(out, "{}", "-".repeat(10 + 11 * width));
        for (g, row) in self.entries.iter().enumerate() {
            let label = labels
                .and_then(|l| l.get(g))
                .map(|n| n.to_string())
                .unwrap_or_else(|| g.to_string());
            let _ = write!(out, "{label:>8} |");
            for &v in row {
                let _ = write!(out, " {v:>10.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the repeated Richardson tableau over `values`, ordered from the
/// coarsest to the finest grid.
pub fn extrapolate(values: &[f64], schedule: &OrderSchedule) -> Result<Tableau> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("no values to extrapolate".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("non-finite value {v}")));
    }
    let denominators = (0..values.len().saturating_sub(1))
        .map(|k| schedule.denominator(k))
        .collect::<Result<Vec<_>>>()?;

    let mut entries: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    for (g, &u) in values.iter().enumerate() {
        let mut row = Vec::with_capacity(g + 1);
        row.push(u);
        for k in 0..g {
            let fine = row[k];
            let coarse = entries[g - 1][k];
            row.push(fine + (fine - coarse) / denominators[k]);
        }
        entries.push(row);
    }
    Ok(Tableau {
        entries,
        schedule: *schedule,
    })
}

/// The two error estimates attached to a coarse/fine pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    /// `(U_fine - U_coarse) / (q^p0 - 1)`: the error of the fine value.
    pub e_r: f64,
    /// `U_fine - U_coarse`, the conservative variant.
    pub e_s: f64,
    /// Index (coarse time level, or ladder level) the estimate refers to.
    pub at: usize,
}

pub fn estimate_error(u_coarse: f64, u_fine: f64, schedule: &OrderSchedule) -> Result<ErrorEstimate> {
    let e_s = u_fine - u_coarse;
    Ok(ErrorEstimate {
        e_r: e_s / schedule.denominator(0)?,
        e_s,
        at: 0,
    })
}

/// Observed order from two values and a reference solution:
/// `(ln|U_c - u| - ln|U_f - u|) / ln q`.
pub fn estimate_order(u_coarse: f64, u_fine: f64, u_ref: f64, q: f64) -> Result<f64> {
    let ec = (u_coarse - u_ref).abs();
    let ef = (u_fine - u_ref).abs();
    if ec == 0.0 || ef == 0.0 {
        return Err(Error::DegenerateInput(
            "reference coincides with a computed value".into(),
        ));
    }
    if !(q > 0.0 && q != 1.0) {
        return Err(Error::DegenerateInput(format!("ln q vanishes or is undefined for q = {q}")));
    }
    Ok((ec.ln() - ef.ln()) / q.ln())
}

/// A fine solution sampled by injection on the nodes of a coarser grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Restricted {
    /// `p[n][j]` on coarse levels `n = 0..=N_c` and nodes `j = 0..=J_c`.
    pub p: Vec<Vec<f64>>,
    pub s_f: Vec<f64>,
    /// Spatial ratio `J_fine / J_coarse`.
    pub space_ratio: usize,
    /// Temporal ratio `N_fine / N_coarse`.
    pub time_ratio: usize,
}

/// Samples `fine` at coarse nodes `(space_ratio * j, time_ratio * n)`.
/// Requires the fine solution to hold every time level.
pub fn restrict(fine: &Solution, coarse: &Grid) -> Result<Restricted> {
    let fg = &fine.grid;
    let same = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    if !same(fg.spec.x_inf, coarse.spec.x_inf) || !same(fg.maturity, coarse.maturity) {
        return Err(Error::NotNested(format!(
            "domains differ: x_inf {} vs {}, T {} vs {}",
            fg.spec.x_inf, coarse.spec.x_inf, fg.maturity, coarse.maturity
        )));
    }
    if !fg.j().is_multiple_of(coarse.j()) || !fg.steps.is_multiple_of(coarse.steps) {
        return Err(Error::NotNested(format!(
            "fine (J={}, N={}) is not an integer refinement of coarse (J={}, N={})",
            fg.j(),
            fg.steps,
            coarse.j(),
            coarse.steps
        )));
    }
    if !fine.is_full() {
        return Err(Error::NotNested(
            "fine solution must retain every time level".into(),
        ));
    }
    let sr = fg.j() / coarse.j();
    let tr = fg.steps / coarse.steps;
    let p = (0..=coarse.steps)
        .map(|n| {
            let row = &fine.slices[tr * n].p;
            (0..=coarse.j()).map(|j| row[sr * j]).collect()
        })
        .collect();
    let s_f = (0..=coarse.steps).map(|n| fine.s_f[tr * n]).collect();
    Ok(Restricted {
        p,
        s_f,
        space_ratio: sr,
        time_ratio: tr,
    })
}

/// Per-level estimates of a coarse solution against a restricted fine one.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEstimates {
    /// Sup-norm over `j` of the field estimate, one per coarse level.
    pub p_sup: Vec<f64>,
    /// Boundary estimate, one per coarse level.
    pub s_f: Vec<ErrorEstimate>,
}

/// Component-wise estimates on every shared time level. `use_safe` selects
/// `e_s` instead of `e_r` for the field sup-norm.
pub fn field_estimates(
    coarse: &Solution,
    fine: &Restricted,
    schedule: &OrderSchedule,
    use_safe: bool,
) -> Result<FieldEstimates> {
    if !coarse.is_full() {
        return Err(Error::NotNested(
            "coarse solution must retain every time level".into(),
        ));
    }
    let denom = schedule.denominator(0)?;
    let scale = if use_safe { 1.0 } else { 1.0 / denom };
    let mut p_sup = Vec::with_capacity(fine.p.len());
    let mut s_f = Vec::with_capacity(fine.p.len());
    for (n, (row_f, slice)) in fine.p.iter().zip(&coarse.slices).enumerate() {
        let sup = row_f
            .iter()
            .zip(&slice.p)
            .fold(0.0_f64, |m, (f, c)| m.max((f - c).abs()));
        p_sup.push(sup * scale);
        let mut est = estimate_error(coarse.s_f[n], fine.s_f[n], schedule)?;
        est.at = n;
        s_f.push(est);
    }
    Ok(FieldEstimates { p_sup, s_f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridSpec, ModelParams};
    use crate::solver::{solve, SolveOptions};

    const REFERENCE_SF: [f64; 6] = [0.871621, 0.865575, 0.863700, 0.863071, 0.862859, 0.862788];

    #[test]
    fn printed_column_reproduces_diagonal() {
        let t = extrapolate(&REFERENCE_SF, &OrderSchedule::default()).unwrap();
        let diag = [0.863560, 0.863043, 0.862844, 0.862782, 0.862762];
        for (g, want) in diag.iter().enumerate() {
            let got = t.get(g + 1, g + 1).unwrap();
            assert!((got - want).abs() < 2e-6, "U_{},{} = {got}", g + 1, g + 1);
        }
        for (g, &u) in REFERENCE_SF.iter().enumerate() {
            assert_eq!(t.get(g, 0).unwrap().to_bits(), u.to_bits());
        }
        assert!(t.get(2, 3).is_none());
    }

    #[test]
    fn constant_sequence() {
        let t = extrapolate(&[0.5; 5], &OrderSchedule::default()).unwrap();
        assert!(t.entries.iter().flatten().all(|&v| v == 0.5));
    }

    #[test]
    fn single_value_is_its_own_tableau() {
        let t = extrapolate(&[0.3], &OrderSchedule::default()).unwrap();
        assert_eq!(t.entries, vec![vec![0.3]]);
        assert_eq!(t.best(), 0.3);
    }

    #[test]
    fn first_order_model_is_cancelled() {
        let u = 0.75;
        let vals: Vec<f64> = (0..4).map(|g| u + 0.2 * 0.25_f64.powi(g)).collect();
        let t = extrapolate(&vals, &OrderSchedule::default()).unwrap();
        for g in 1..4 {
            assert!((t.get(g, 1).unwrap() - u).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_schedules() {
        let s = OrderSchedule {
            p0: 1.0,
            step: 1.0,
            q: 1.0,
        };
        assert!(matches!(
            extrapolate(&[1.0, 2.0], &s),
            Err(Error::DegenerateSchedule { level: 0 })
        ));
        // A single value needs no denominator.
        assert!(extrapolate(&[1.0], &s).is_ok());
        assert!(OrderSchedule::new(1.0, 1.0, 1.0).is_err());
        assert!(OrderSchedule::new(0.0, 1.0, 4.0).is_err());
        assert!(extrapolate(&[], &OrderSchedule::default()).is_err());
        assert!(extrapolate(&[1.0, f64::NAN], &OrderSchedule::default()).is_err());
    }

    #[test]
    fn adjacent_table_rows() {
        let e = estimate_error(0.865575, 0.863700, &OrderSchedule::default()).unwrap();
        assert!((e.e_s + 0.001875).abs() < 1e-12);
        assert!((e.e_r + 0.000625).abs() < 1e-12);
        let z = estimate_error(0.4, 0.4, &OrderSchedule::default()).unwrap();
        assert_eq!((z.e_r, z.e_s), (0.0, 0.0));
    }

    #[test]
    fn first_order_estimate_is_exact() {
        let u = 0.75;
        let coarse = u + 0.2;
        let fine = u + 0.05;
        let e = estimate_error(coarse, fine, &OrderSchedule::default()).unwrap();
        // e = u - U_fine
        assert!((e.e_r - (u - fine)).abs() < 1e-15);
    }

    #[test]
    fn observed_order() {
        let p = estimate_order(0.862859, 0.862788, 0.862762, 4.0).unwrap();
        assert!((0.8..=1.2).contains(&p), "{p}");
        let exact = estimate_order(1.0 + 0.4, 1.0 + 0.1, 1.0, 4.0).unwrap();
        assert!((exact - 1.0).abs() < 1e-14);
        let halved = estimate_order(1.0 + 0.4, 1.0 + 0.1, 1.0, 2.0).unwrap();
        assert!((halved - 2.0 * exact).abs() < 1e-14);
        assert!(estimate_order(1.0, 2.0, 1.0, 4.0).is_err());
    }

    fn paper_solution(j: usize, steps: usize) -> Solution {
        let m = ModelParams::new(0.1, 0.2, 1.0, 1.0).unwrap();
        let g = Grid::with_steps(GridSpec::new(1.0, j, 20.0).unwrap(), 1.0, steps).unwrap();
        solve(&m, &g, &SolveOptions::full()).unwrap()
    }

    #[test]
    fn restriction_indices() {
        let fine = paper_solution(10, 20);
        let coarse = Grid::with_steps(GridSpec::new(1.0, 5, 20.0).unwrap(), 1.0, 5).unwrap();
        let r = restrict(&fine, &coarse).unwrap();
        assert_eq!((r.space_ratio, r.time_ratio), (2, 4));
        // x = 0.4 on the coarse grid reads fine node 4.
        assert!((coarse.x_nodes[2] - 0.4).abs() < 1e-15);
        assert_eq!(r.p[3][2], fine.slices[12].p[4]);
        assert_eq!(r.s_f[5], fine.s_f[20]);
    }

    #[test]
    fn restriction_to_own_grid_is_identity() {
        let sol = paper_solution(10, 5);
        let r = restrict(&sol, &sol.grid).unwrap();
        assert_eq!(r.s_f, sol.s_f);
        for (row, slice) in r.p.iter().zip(&sol.slices) {
            assert_eq!(row, &slice.p);
        }
    }

    #[test]
    fn restriction_rejects_non_nested() {
        let fine = paper_solution(20, 20);
        let bad_space = Grid::with_steps(GridSpec::new(1.0, 7, 20.0).unwrap(), 1.0, 5).unwrap();
        assert!(matches!(restrict(&fine, &bad_space), Err(Error::NotNested(_))));
        let bad_time = Grid::with_steps(GridSpec::new(1.0, 10, 20.0).unwrap(), 1.0, 3).unwrap();
        assert!(matches!(restrict(&fine, &bad_time), Err(Error::NotNested(_))));
        let bad_dom = Grid::with_steps(GridSpec::new(2.0, 10, 20.0).unwrap(), 1.0, 5).unwrap();
        assert!(matches!(restrict(&fine, &bad_dom), Err(Error::NotNested(_))));
        let m = ModelParams::new(0.1, 0.2, 1.0, 1.0).unwrap();
        let lean = solve(&m, &build_grid(&m, &GridSpec::new(1.0, 20, 20.0).unwrap()).unwrap(), &SolveOptions::default()).unwrap();
        let coarse = Grid::with_steps(GridSpec::new(1.0, 10, 20.0).unwrap(), 1.0, 5).unwrap();
        assert!(restrict(&lean, &coarse).is_err());
    }

    #[test]
    fn sup_norm_estimates_decrease_along_ladder() {
        let sched = OrderSchedule::default();
        let mut prev = f64::INFINITY;
        let mut coarse = paper_solution(10, 5);
        for g in 1..4 {
            let fine = paper_solution(10 << g, 5 * 4usize.pow(g));
            let r = restrict(&fine, &coarse.grid).unwrap();
            let est = field_estimates(&coarse, &r, &sched, true).unwrap();
            let worst = est.p_sup[1..].iter().cloned().fold(0.0, f64::max);
            assert!(worst < prev, "level {g}: {worst} vs {prev}");
            assert_eq!(est.p_sup[0], 0.0);
            prev = worst;
            coarse = fine;
        }
    }

    #[test]
    fn csv_and_text_rendering() {
        let t = extrapolate(&REFERENCE_SF[..3], &OrderSchedule::default()).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "U_g0,U_g1,U_g2");
        assert_eq!(lines[1], "0.871621000000,,");
        let text = t.render_text(Some(&[5, 20, 80]));
        assert!(text.contains("0.863560"));
        assert!(text.lines().nth(2).unwrap().trim_start().starts_with('5'));
    }
}
