//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use frontfix::error::Error;
use frontfix::refine::RefinementConfig;
use frontfix::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Final free boundary on J = 10 .. 320 (mu = 20, x_inf = 1), 6 decimals.
const REFERENCE_SF: [f64; 6] = [0.871621, 0.865575, 0.863700, 0.863071, 0.862859, 0.862788];
const LADDER_J: [usize; 6] = [10, 20, 40, 80, 160, 320];
const REFERENCE_TOL: f64 = 2e-6;

/// Printed extrapolated entries `(g, k, U_{g,k})`, plus the next diagonal
/// value `U_{5,5}`.
const REFERENCE_TABLEAU: [(usize, usize, f64); 15] = [
    (1, 1, 0.863560),
    (2, 1, 0.863075),
    (2, 2, 0.863043),
    (3, 1, 0.862861),
    (3, 2, 0.862847),
    (3, 3, 0.862844),
    (4, 1, 0.862788),
    (4, 2, 0.862783),
    (4, 3, 0.862782),
    (4, 4, 0.862782),
    (5, 1, 0.862764),
    (5, 2, 0.862763),
    (5, 3, 0.862762),
    (5, 4, 0.862762),
    (5, 5, 0.862762),
];
const BENCHMARK_SF: f64 = 0.862762;

/// 10 000-period CRR American put (r = 0.1, sigma = 0.2, E = T = 1),
/// computed once with `crr_american_put` and frozen.
const CRR_REFERENCE: [(f64, f64); 5] = [
    (0.8, 0.200000000000),
    (0.9, 0.104303546533),
    (1.0, 0.048162013616),
    (1.1, 0.020994115822),
    (1.25, 0.005456010011),
];
const ORACLE_TOL: f64 = 2e-3;

fn model() -> ModelParams {
    ModelParams::new(0.1, 0.2, 1.0, 1.0).unwrap()
}

fn final_sf(m: &ModelParams, x_inf: f64, j: usize, mu: f64) -> f64 {
    let g = build_grid(m, &GridSpec::new(x_inf, j, mu).unwrap()).unwrap();
    solve(m, &g, &SolveOptions::default()).unwrap().final_sf()
}

fn ladder_values() -> Vec<f64> {
    LADDER_J.iter().map(|&j| final_sf(&model(), 1.0, j, 20.0)).collect()
}

type Outcome = std::result::Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_reference_column() -> Outcome {
    let start = Instant::now();
    let vals = ladder_values();
    let elapsed = start.elapsed();
    for ((j, got), want) in LADDER_J.iter().zip(&vals).zip(REFERENCE_SF) {
        check(
            (got - want).abs() <= REFERENCE_TOL,
            format!("J = {j}: S_f = {got:.9}, expected {want} ± {REFERENCE_TOL}"),
        )?;
    }
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("6 grids within ±{REFERENCE_TOL} in {elapsed:.2?}"))
}

fn c2_tableau() -> Outcome {
    let t = extrapolate(&ladder_values(), &OrderSchedule::default()).unwrap();
    for (g, k, want) in REFERENCE_TABLEAU {
        let got = t.get(g, k).unwrap();
        check(
            (got - want).abs() <= REFERENCE_TOL,
            format!("U_{g},{k} = {got:.9}, expected {want}"),
        )?;
    }
    let best = t.best();
    check(
        (best - BENCHMARK_SF).abs() <= REFERENCE_TOL,
        format!("U_5,5 = {best:.9}"),
    )?;
    Ok(format!("U_5,5 = {best:.6}"))
}

fn c3_refinement_stop() -> Outcome {
    let cfg = RefinementConfig {
        model: model(),
        base: GridSpec::new(1.0, 10, 20.0).unwrap(),
        epsilon: 0.005,
        max_levels: 8,
        estimator: Estimator::FirstRichardson,
    };
    let start = Instant::now();
    let (sol, report) = adaptive_solve(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let acc = report.accepted().ok_or("no accepted level")?;
    check(
        (acc.j, acc.steps) == (80, 320) && sol.grid.steps == 320,
        format!("accepted J = {}, N = {}", acc.j, acc.steps),
    )?;
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    let errs: Vec<f64> = report.levels.iter().filter_map(|l| l.max_err_p).collect();
    check(
        errs.windows(2).all(|w| w[1] <= w[0]),
        format!("estimates not decaying: {errs:?}"),
    )?;
    let coarse_steps = report.levels[acc.level - 1].steps;
    let arg = acc.argmax_p.unwrap();
    check(
        arg as f64 <= 0.1 * coarse_steps as f64,
        format!("largest error at n = {arg} of {coarse_steps}"),
    )?;
    Ok(format!(
        "accepted J = 80, N = 320; max e_r(p) = {:.2e}, max |e_r(S_f)| = {:.2e}, {elapsed:.2?}",
        acc.max_err_p.unwrap(),
        acc.max_err_sf.unwrap()
    ))
}

fn c4_instability() -> Outcome {
    let m = model();
    let g = build_grid(&m, &GridSpec::new(1.0, 52, 27.0).unwrap()).unwrap();
    let rep = check_stability(&m, &g);
    check(!rep.dt_bound_ok, format!("dt = {} passed the bound {}", g.dt, rep.dt_limit))?;
    let opts = SolveOptions {
        force: true,
        ..Default::default()
    };
    match solve(&m, &g, &opts) {
        Err(Error::BlowUp(b)) => {
            let changes = b.sign_changes();
            let has_neg = b.row.iter().any(|&v| v < 0.0);
            check(changes >= 2 && has_neg, format!("row not oscillating: {:?}", b.row))?;
            Ok(format!(
                "J = 52, N = {}: blow-up at n = {}, {changes} sign changes in row n = {}",
                g.steps, b.step, b.row_step
            ))
        }
        other => Err(format!("expected a blow-up, got {other:?}")),
    }
}

fn c5_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(20150315);
    let mut done = 0;
    while done < 50 {
        let r = rng.gen_range(0.01..=0.3);
        let sigma = rng.gen_range(0.1..=0.5);
        let j = rng.gen_range(10..=100usize);
        let m = ModelParams::new(r, sigma, 1.0, 1.0).unwrap();
        let dx = 1.0 / j as f64;
        if !m.drift_is_degenerate() && dx > sigma * sigma / m.drift().abs() {
            continue;
        }
        let mu = rng.gen_range(0.25..=1.0) / (sigma * sigma + r * dx * dx);
        let g = build_grid(&m, &GridSpec::new(1.0, j, mu).unwrap()).unwrap();
        check(check_stability(&m, &g).is_ok(), format!("sample {done} not admissible"))?;
        let k = step_coefficients(&m, &g);
        check(
            (k.a + k.b + k.c - (1.0 - r * g.dt)).abs() <= 8.0 * f64::EPSILON,
            format!("a+b+c off for r={r}, sigma={sigma}, J={j}"),
        )?;
        let opts = SolveOptions {
            verify: true,
            ..Default::default()
        };
        solve(&m, &g, &opts)
            .map_err(|e| format!("r={r:.4}, sigma={sigma:.4}, J={j}, mu={mu:.3}: {e}"))?;
        done += 1;
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("50 admissible samples, all invariants held, {elapsed:.2?}"))
}

fn c6_observed_order() -> Outcome {
    let v = ladder_values();
    let p0 = estimate_order(v[4], v[5], BENCHMARK_SF, 4.0).map_err(|e| e.to_string())?;
    check((0.8..=1.2).contains(&p0), format!("p0 = {p0}"))?;
    Ok(format!("p0 = {p0:.4}"))
}

fn c7_oracle() -> Outcome {
    let m = model();
    let cfg = RefinementConfig {
        model: m,
        base: GridSpec::new(1.0, 10, 20.0).unwrap(),
        epsilon: 0.005,
        max_levels: 8,
        estimator: Estimator::FirstRichardson,
    };
    let (sol, _) = adaptive_solve(&cfg).map_err(|e| e.to_string())?;
    let anchor = crr_american_put(&m, 1.0, LatticeSpec::new(10_000).unwrap()).unwrap();
    check(
        (anchor - CRR_REFERENCE[2].1).abs() < 1e-11,
        format!("lattice anchor drifted: {anchor}"),
    )?;
    let mut worst = 0.0_f64;
    for (s, crr) in CRR_REFERENCE {
        let fd = price_at(&sol, s, 1.0).map_err(|e| e.to_string())?.price;
        let diff = (fd - crr).abs();
        check(diff <= ORACLE_TOL, format!("S = {s}: {fd} vs {crr}"))?;
        worst = worst.max(diff);
    }
    Ok(format!("5 spots, max |diff| = {worst:.2e}"))
}

fn c8_truncation_insensitivity() -> Outcome {
    let m = model();
    let mut spread = 0.0_f64;
    for j1 in [10, 20, 40] {
        let base = final_sf(&m, 1.0, j1, 20.0);
        for x_inf in [2.0, 4.0] {
            let v = final_sf(&m, x_inf, j1 * x_inf as usize, 20.0);
            check(
                (v - base).abs() < 1e-10,
                format!("J1 = {j1}, x_inf = {x_inf}: {v} vs {base}"),
            )?;
            spread = spread.max((v - base).abs());
        }
    }
    Ok(format!("x_inf in {{1, 2, 4}} at fixed (dx, mu): max spread {spread:.1e}"))
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 8] = [
        ("C1 reference column reproduction", c1_reference_column),
        ("C2 extrapolation tableau", c2_tableau),
        ("C3 refinement stop", c3_refinement_stop),
        ("C4 instability detection", c4_instability),
        ("C5 positivity/monotonicity suite", c5_invariants),
        ("C6 observed order", c6_observed_order),
        ("C7 lattice cross-check", c7_oracle),
        ("C8 truncation insensitivity", c8_truncation_insensitivity),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = std::panic::catch_unwind(f)
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
