//! Command-line front end: `frontfix <solve|refine|extrapolate|validate>`.
//!
//! Configuration comes from an optional JSON file (`--config`) overlaid by
//! flags. Every written file starts with a provenance line holding the
//! resolved configuration (`# config: {...}` for text files, a `config` key
//! for JSON files).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::format::num;
use crate::grid::{build_grid, check_stability, Grid, GridSpec, ModelParams};
use crate::oracle::{crr_american_put, LatticeSpec};
use crate::refine::{adaptive_solve, ladder_grid, Estimator, RefinementConfig, RefinementReport};
use crate::richardson::{extrapolate, OrderSchedule};
use crate::solver::{price_at, solve, step_coefficients, untransform, Solution, SolveOptions, Storage};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_UNREACHABLE: i32 = 4;
pub const EXIT_VALIDATION: i32 = 5;

/// Spot multiples of the strike checked by `validate`.
pub const VALIDATION_SPOTS: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.25];
/// Pass threshold of `validate`, relative to the strike.
pub const VALIDATION_TOLERANCE: f64 = 2e-3;

#[derive(Debug, Parser)]
#[command(name = "frontfix", version, about = "Front-fixing explicit finite differences for American puts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// March one grid and write the boundary, final row and metadata.
    Solve(SolveArgs),
    /// Refine a nested ladder until the estimated error meets --epsilon.
    Refine(RefineArgs),
    /// Repeated Richardson extrapolation of the final free boundary.
    Extrapolate(ExtrapolateArgs),
    /// Compare prices at maturity against a binomial lattice.
    Validate(ValidateArgs),
}

#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub strike: Option<f64>,
    #[arg(long)]
    pub maturity: Option<f64>,
    #[arg(long)]
    pub xinf: Option<f64>,
    #[arg(long = "J")]
    pub j: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Keep every time level and write surface.csv.
    #[arg(long)]
    pub full: bool,
    /// Run even if the grid fails the positivity conditions.
    #[arg(long)]
    pub force: bool,
    /// Times at which to write snapshot_<n>.csv.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct RefineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_levels: Option<usize>,
    /// first_richardson or safe.
    #[arg(long)]
    pub estimator: Option<String>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ExtrapolateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Space intervals of each grid, doubling, e.g. 10,20,40.
    #[arg(long, value_delimiter = ',', required = true)]
    pub js: Vec<usize>,
    /// Leading error order.
    #[arg(long, default_value_t = 1.0)]
    pub p0: f64,
    /// Order increment between extrapolation levels.
    #[arg(long, default_value_t = 1.0)]
    pub order_step: f64,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Periods of the reference lattice.
    #[arg(long, default_value_t = 10_000)]
    pub lattice_steps: usize,
    #[arg(long)]
    pub force: bool,
}

/// JSON configuration file layout. Every key is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: FileModel,
    #[serde(default)]
    pub grid: FileGrid,
    #[serde(default)]
    pub refine: FileRefine,
    #[serde(default)]
    pub output: FileOutput,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileModel {
    pub r: Option<f64>,
    pub sigma: Option<f64>,
    pub strike: Option<f64>,
    pub maturity: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileGrid {
    pub xinf: Option<f64>,
    #[serde(rename = "J")]
    pub j: Option<usize>,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRefine {
    pub epsilon: Option<f64>,
    pub max_levels: Option<usize>,
    pub estimator: Option<Estimator>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOutput {
    pub dir: Option<PathBuf>,
    pub snapshots: Option<Vec<f64>>,
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub epsilon: f64,
    pub max_levels: usize,
    pub estimator: Estimator,
    pub out_dir: PathBuf,
    pub snapshots: Vec<f64>,
    pub force: bool,
    pub full: bool,
}

impl RunConfig {
    /// Defaults reproduce the benchmark put (r = 0.1, sigma = 0.2, E = T = 1)
    /// on `x_inf = 1`, `J = 80`, `mu = 20`.
    pub fn resolve(common: &CommonArgs) -> Result<Self, CliError> {
        let file = match &common.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::config(format!("parsing {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let model = ModelParams {
            r: common.r.or(file.model.r).unwrap_or(0.1),
            sigma: common.sigma.or(file.model.sigma).unwrap_or(0.2),
            strike: common.strike.or(file.model.strike).unwrap_or(1.0),
            maturity: common.maturity.or(file.model.maturity).unwrap_or(1.0),
        };
        let grid = GridSpec {
            x_inf: common.xinf.or(file.grid.xinf).unwrap_or(1.0),
            j: common.j.or(file.grid.j).unwrap_or(80),
            mu: common.mu.or(file.grid.mu).unwrap_or(20.0),
        };
        model.validate()?;
        grid.validate()?;
        Ok(Self {
            model,
            grid,
            epsilon: file.refine.epsilon.unwrap_or(0.005),
            max_levels: file.refine.max_levels.unwrap_or(8),
            estimator: file.refine.estimator.unwrap_or_default(),
            out_dir: common
                .out
                .clone()
                .or(file.output.dir)
                .unwrap_or_else(|| PathBuf::from(".")),
            snapshots: file.output.snapshots.unwrap_or_default(),
            force: false,
            full: false,
        })
    }

    fn header(&self) -> String {
        format!(
            "# config: {}\n",
            serde_json::to_string(self).expect("config serializes")
        )
    }

    fn json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// A failed command: the exit code and a message for stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: String) -> Self {
        Self {
            code: EXIT_CONFIG,
            message,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::BlowUp(_) | Error::SingularDenominator { .. } | Error::Invariant { .. } => {
                EXIT_BLOWUP
            }
            Error::ToleranceUnreachable(_) => EXIT_UNREACHABLE,
            _ => EXIT_CONFIG,
        };
        let mut message = e.to_string();
        if let Error::BlowUp(b) = e.root() {
            let _ = write!(
                message,
                "\n  first failing step n = {} ({:?}), s_f = {}\n  row at n = {}: sup-norm {}, {} sign changes, min {}",
                b.step,
                b.kind,
                b.s_f,
                b.row_step,
                b.sup_norm(),
                b.sign_changes(),
                b.row.iter().cloned().fold(f64::INFINITY, f64::min),
            );
        }
        Self { code, message }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code; diagnostics go to stderr.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Refine(a) => cmd_refine(a),
        Command::Extrapolate(a) => cmd_extrapolate(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(&args.common)?;
    cfg.force = args.force;
    cfg.full = args.full;
    if let Some(s) = &args.snapshots {
        cfg.snapshots = s.clone();
    }
    ensure_dir(&cfg.out_dir)?;
    let grid = build_grid(&cfg.model, &cfg.grid)?;
    let opts = SolveOptions {
        force: cfg.force,
        storage: if cfg.full { Storage::Full } else { Storage::Lean },
        snapshots: cfg.snapshots.clone(),
        verify: false,
    };
    let sol = match solve(&cfg.model, &grid, &opts) {
        Ok(s) => s,
        Err(e) => {
            if let Error::BlowUp(b) = &e {
                let mut csv = cfg.header();
                csv.push_str("x_j,p_j\n");
                for (x, p) in grid.x_nodes.iter().zip(&b.row) {
                    let _ = writeln!(csv, "{},{}", num(*x), num(*p));
                }
                write(&cfg.out_dir, "blowup_row.csv", &csv)?;
            }
            return Err(e.into());
        }
    };
    write_solution(&cfg, &sol)?;
    println!(
        "J = {}, N = {}, dx = {}, dt = {}: final S_f = {:.6}",
        grid.j(),
        grid.steps,
        num(grid.dx),
        num(grid.dt),
        sol.final_sf()
    );
    Ok(())
}

/// Writes `sf.csv`, `pfinal.csv`, `meta.json`, plus `surface.csv` for a
/// full solution and one `snapshot_<n>.csv` per requested time.
fn write_solution(cfg: &RunConfig, sol: &Solution) -> Result<(), CliError> {
    let grid = &sol.grid;
    let dir = &cfg.out_dir;
    let header = cfg.header();

    let mut sf = header.clone();
    sf.push_str("t_n,S_f\n");
    for (t, s) in grid.t_nodes.iter().zip(&sol.s_f) {
        let _ = writeln!(sf, "{},{}", num(*t), num(*s));
    }
    write(dir, "sf.csv", &sf)?;

    let mut pf = header.clone();
    pf.push_str("x_j,p_j\n");
    for (x, p) in grid.x_nodes.iter().zip(&sol.final_slice().p) {
        let _ = writeln!(pf, "{},{}", num(*x), num(*p));
    }
    write(dir, "pfinal.csv", &pf)?;

    if sol.is_full() {
        let mut surf = header.clone();
        surf.push_str("t_n,x_j,p\n");
        for slice in &sol.slices {
            for (x, p) in grid.x_nodes.iter().zip(&slice.p) {
                let _ = writeln!(surf, "{},{},{}", num(slice.t), num(*x), num(*p));
            }
        }
        write(dir, "surface.csv", &surf)?;
    }

    for &t in &cfg.snapshots {
        let n = grid.nearest_level(t);
        let pts = untransform(sol, n)?;
        let mut snap = header.clone();
        snap.push_str("S,tau,P,region\n");
        for p in pts {
            let region = match p.region {
                crate::solver::Region::Continuation => "continuation",
                crate::solver::Region::Exercise => "exercise",
            };
            let _ = writeln!(snap, "{},{},{},{region}", num(p.s), num(p.tau), num(p.price));
        }
        write(dir, &format!("snapshot_{n}.csv"), &snap)?;
    }

    let meta = serde_json::json!({
        "config": cfg.json_value(),
        "grid": grid_meta(grid),
        "coefficients": step_coefficients(&sol.model, grid),
        "stability": check_stability(&sol.model, grid),
        "final_sf": sol.final_sf(),
        "exercise_price_at_maturity": sol.model.strike * sol.final_sf(),
    });
    write(dir, "meta.json", &pretty(&meta))
}

fn grid_meta(grid: &Grid) -> serde_json::Value {
    serde_json::json!({
        "xinf": grid.spec.x_inf,
        "J": grid.j(),
        "mu": grid.spec.mu,
        "mu_effective": grid.ratio(),
        "dx": grid.dx,
        "dt": grid.dt,
        "N": grid.steps,
    })
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

pub fn cmd_refine(args: &RefineArgs) -> Result<(), CliError> {
    let mut cfg = RunConfig::resolve(&args.common)?;
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    if let Some(m) = args.max_levels {
        cfg.max_levels = m;
    }
    if let Some(s) = &args.estimator {
        cfg.estimator = s.parse()?;
    }
    cfg.full = true;
    ensure_dir(&cfg.out_dir)?;
    let rc = RefinementConfig {
        model: cfg.model,
        base: cfg.grid,
        epsilon: cfg.epsilon,
        max_levels: cfg.max_levels,
        estimator: cfg.estimator,
    };
    match adaptive_solve(&rc) {
        Ok((sol, report)) => {
            write_report(&cfg, &report)?;
            write_solution(&cfg, &sol)?;
            let acc = report.accepted().expect("accepted on success");
            println!(
                "accepted level {} (J = {}, N = {}): max e(p) = {}, max e(S_f) = {}, final S_f = {:.6}",
                acc.level,
                acc.j,
                acc.steps,
                num(acc.max_err_p.unwrap_or(0.0)),
                num(acc.max_err_sf.unwrap_or(0.0)),
                sol.final_sf()
            );
            Ok(())
        }
        Err(Error::ToleranceUnreachable(report)) => {
            write_report(&cfg, &report)?;
            Err(Error::ToleranceUnreachable(report).into())
        }
        Err(e) => Err(e.into()),
    }
}

fn write_report(cfg: &RunConfig, report: &RefinementReport) -> Result<(), CliError> {
    let mut value = serde_json::to_value(report).expect("report serializes");
    value["config"] = cfg.json_value();
    write(&cfg.out_dir, "report.json", &pretty(&value))?;
    for g in 1..report.levels.len() {
        let mut csv = cfg.header();
        csv.push_str(&report.series_csv(g));
        write(&cfg.out_dir, &format!("errors_level{g}.csv"), &csv)?;
    }
    Ok(())
}

/// Checks that `js` is strictly increasing with exact doubling.
pub fn check_doubling(js: &[usize]) -> Result<(), CliError> {
    if js.is_empty() {
        return Err(CliError::config("--js needs at least one value".into()));
    }
    for w in js.windows(2) {
        if w[1] != 2 * w[0] {
            return Err(CliError::config(format!(
                "J list must double at every step, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

pub fn cmd_extrapolate(args: &ExtrapolateArgs) -> Result<(), CliError> {
    let mut common = args.common.clone();
    check_doubling(&args.js)?;
    common.j = Some(args.js[0]);
    let cfg = RunConfig::resolve(&common)?;
    let schedule = OrderSchedule::new(args.p0, args.order_step, 4.0)?;
    ensure_dir(&cfg.out_dir)?;

    let base = build_grid(&cfg.model, &cfg.grid)?;
    let mut values = Vec::with_capacity(args.js.len());
    let mut labels = Vec::with_capacity(args.js.len());
    for g in 0..args.js.len() {
        let grid = ladder_grid(&base, g)?;
        let sol = solve(&cfg.model, &grid, &SolveOptions::default()).map_err(|e| Error::AtLevel {
            level: g,
            source: Box::new(e),
        })?;
        values.push(sol.final_sf());
        labels.push(grid.steps);
    }
    let tableau = extrapolate(&values, &schedule)?;
    let header = cfg.header();
    write(&cfg.out_dir, "tableau.csv", &format!("{header}{}", tableau.to_csv()))?;
    let text = tableau.render_text(Some(&labels));
    write(&cfg.out_dir, "tableau.txt", &format!("{header}{text}"))?;
    print!("{text}");
    Ok(())
}

/// One row of the `validate` comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub s: f64,
    pub finite_difference: f64,
    pub lattice: f64,
    pub diff: f64,
    pub pass: bool,
}

/// Prices at maturity-distance `T` against the lattice at each spot.
pub fn compare_with_lattice(
    sol: &Solution,
    spots: &[f64],
    lattice: LatticeSpec,
) -> Result<Vec<Comparison>, Error> {
    let model = &sol.model;
    let tol = VALIDATION_TOLERANCE * model.strike;
    spots
        .iter()
        .map(|&s| {
            let fd = price_at(sol, s, model.maturity)?.price;
            let lat = crr_american_put(model, s, lattice)?;
            let diff = (fd - lat).abs();
            Ok(Comparison {
                s,
                finite_difference: fd,
                lattice: lat,
                diff,
                pass: diff <= tol,
            })
        })
        .collect()
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&args.common)?;
    let grid = build_grid(&cfg.model, &cfg.grid)?;
    let opts = SolveOptions {
        force: args.force,
        ..SolveOptions::default()
    };
    let sol = solve(&cfg.model, &grid, &opts)?;
    let lattice = LatticeSpec::new(args.lattice_steps)?;
    let spots: Vec<f64> = VALIDATION_SPOTS.iter().map(|m| m * cfg.model.strike).collect();
    let rows = compare_with_lattice(&sol, &spots, lattice)?;

    println!(
        "{:>10} {:>14} {:>14} {:>12}  result (tol {})",
        "S",
        "front-fixing",
        "lattice",
        "|diff|",
        VALIDATION_TOLERANCE * cfg.model.strike
    );
    for r in &rows {
        println!(
            "{:>10.4} {:>14.8} {:>14.8} {:>12.3e}  {}",
            r.s,
            r.finite_difference,
            r.lattice,
            r.diff,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if rows.iter().all(|r| r.pass) {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_VALIDATION,
            message: format!(
                "{} of {} comparisons exceed the tolerance",
                rows.iter().filter(|r| !r.pass).count(),
                rows.len()
            ),
        })
    }
}
