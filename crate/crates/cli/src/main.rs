//! Command-line front end: solves, simulates and cross-checks constrained
//! Dynkin games, and reproduces the benchmark figures and reports.
//!
//! Exit codes: 0 all gates pass, 2 configuration or parameter error,
//! 3 solver non-convergence, 4 statistical/verification gate failure (the
//! report is still written).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dynkin_core::bsde;
use dynkin_core::closed_form;
use dynkin_core::equivalence;
use dynkin_core::model::{ConstraintMode, GameSpec, Interval, IntervalUnion, StoppingSets};
use dynkin_core::monte_carlo::{
    self, CouplingReport, HittingStrategy, SimulationEstimate, DEFAULT_CAP_OVER_R,
};
use dynkin_core::solver::{self, BoundaryKind, GameSolution, GridConfig};

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 2;
const EXIT_NO_CONVERGENCE: i32 = 3;
const EXIT_GATE: i32 = 4;

#[derive(Parser)]
#[command(name = "dynkin", version, about = "Poisson-constrained Dynkin game toolkit")]
struct Cli {
    /// Monte Carlo worker threads (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the Brownian benchmark closed form, verify it, and emit figure
    /// data plus ready-to-solve game configs.
    ClosedForm(ClosedFormArgs),
    /// Solve a game on a grid and extract the stopping sets.
    Solve(SolveArgs),
    /// Estimate the expected payoff of a strategy pair by simulation.
    Simulate(SimulateArgs),
    /// Check the two-colour thinning identity across seeds.
    Coupling(CouplingArgs),
    /// Probe a candidate saddle with unilateral deviations.
    Deviations(DeviationsArgs),
    /// Solve both constraint regimes and test the transfer conditions.
    Equivalence(EquivalenceArgs),
    /// Convergence study of the finite-horizon truncations.
    BsdeConverge(BsdeArgs),
}

#[derive(Args)]
struct ClosedFormArgs {
    #[arg(long)]
    r: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    eps: f64,
    /// Shoulder width for the divergence counterexample payoffs.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: ConstraintMode,
    /// Grid as lo,hi,h.
    #[arg(long, default_value = "-8,8,0.001", allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 500)]
    max_iter: u32,
    /// Boundary closure: robin or dirichlet.
    #[arg(long, default_value = "robin")]
    boundary: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the config's constraint mode (for transplant experiments).
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ConstraintMode>,
    #[arg(long, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, default_value_t = 1_000_000)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Horizon cap; default 20/r.
    #[arg(long)]
    cap: Option<f64>,
    /// Stopping sets from a previously written solution.json.
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Sup player's set as a:b,c:d (closed intervals), or "empty".
    #[arg(long, allow_hyphen_values = true)]
    sup_set: Option<String>,
    /// Inf player's set, same format.
    #[arg(long, allow_hyphen_values = true)]
    inf_set: Option<String>,
    /// Gate: require |mean - expect| <= 3 SE + expect-tol.
    #[arg(long, allow_hyphen_values = true)]
    expect: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    expect_tol: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct CouplingArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    /// Number of consecutive seeds to test.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value_t = 1000)]
    seed: u64,
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    sup_set: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    inf_set: Option<String>,
    /// Grid used to solve for the sets when none are supplied.
    #[arg(long, default_value = "-8,8,0.001", allow_hyphen_values = true)]
    grid: String,
    /// Also run the corrupted-thinning negative control.
    #[arg(long, default_value_t = false)]
    negative_control: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DeviationsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, default_value_t = 5)]
    deviations: u32,
    #[arg(long, default_value_t = 1_000_000)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    solution: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    sup_set: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    inf_set: Option<String>,
    #[arg(long, default_value = "-8,8,0.001", allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct EquivalenceArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "-8,8,0.001", allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 200_000)]
    paths: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BsdeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated horizons.
    #[arg(long, default_value = "1,2,4,8,16")]
    horizons: String,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value = "-8,8,0.01", allow_hyphen_values = true)]
    grid: String,
    /// Gate on the final horizon's sup error.
    #[arg(long, default_value_t = 1e-2)]
    max_final_error: f64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<dynkin_core::Error> for Failure {
    fn from(e: dynkin_core::Error) -> Self {
        let code = match e {
            dynkin_core::Error::NonConvergence { .. } => EXIT_NO_CONVERGENCE,
            _ => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("io error: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(format!("bad json: {e}"))
    }
}

fn main() {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // ignore failure: the pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
    let result = match &cli.command {
        Command::ClosedForm(a) => cmd_closed_form(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Coupling(a) => cmd_coupling(a),
        Command::Deviations(a) => cmd_deviations(a),
        Command::Equivalence(a) => cmd_equivalence(a),
        Command::BsdeConverge(a) => cmd_bsde(a),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            std::process::exit(f.code);
        }
    }
}

fn parse_mode(s: &str) -> Result<ConstraintMode, String> {
    match s {
        "common" => Ok(ConstraintMode::Common),
        "independent" => Ok(ConstraintMode::Independent),
        other => Err(format!("unknown mode {other:?}, use common|independent")),
    }
}

fn parse_grid(spec: &str, tol: f64, max_iter: u32, boundary: &str) -> Result<GridConfig, Failure> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 3 {
        return Err(Failure::config(format!("grid must be lo,hi,h, got {spec:?}")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::config(format!("bad grid {spec:?}: {e}")))?;
    let boundary = match boundary {
        "robin" => BoundaryKind::RobinDecay,
        "dirichlet" => BoundaryKind::DirichletZero,
        other => {
            return Err(Failure::config(format!(
                "unknown boundary {other:?}, use robin|dirichlet"
            )))
        }
    };
    let cfg = GridConfig::new(nums[0], nums[1], nums[2])
        .with_tolerance(tol)
        .with_max_iterations(max_iter)
        .with_boundary(boundary);
    cfg.validate()?;
    Ok(cfg)
}

fn read_game(path: &Path) -> Result<GameSpec, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {path:?}: {e}")))?;
    Ok(serde_json::from_str(&text)?)
}

fn prepare_out(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    // timestamps live only in this sidecar log; all other outputs are
    // deterministic given the flags
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let argv: Vec<String> = std::env::args().collect();
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("run.log"))?;
    writeln!(log, "{stamp} {}", argv.join(" "))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn parse_interval_set(spec: &str) -> Result<IntervalUnion, Failure> {
    let trimmed = spec.trim();
    if trimmed.is_empty() || trimmed == "empty" {
        return Ok(IntervalUnion::empty());
    }
    let mut intervals = Vec::new();
    for part in trimmed.split(',') {
        let ends: Vec<&str> = part.split(':').collect();
        if ends.len() != 2 {
            return Err(Failure::config(format!(
                "interval must be lo:hi, got {part:?}"
            )));
        }
        let lo = ends[0]
            .trim()
            .parse::<f64>()
            .map_err(|e| Failure::config(format!("bad interval {part:?}: {e}")))?;
        let hi = ends[1]
            .trim()
            .parse::<f64>()
            .map_err(|e| Failure::config(format!("bad interval {part:?}: {e}")))?;
        intervals.push(Interval::closed(lo, hi)?);
    }
    Ok(IntervalUnion::new(intervals)?)
}

/// Strategy sets from explicit flags, a solution file, or a fresh solve.
fn resolve_sets(
    game: &GameSpec,
    solution: &Option<PathBuf>,
    sup_set: &Option<String>,
    inf_set: &Option<String>,
    grid: &str,
) -> Result<StoppingSets, Failure> {
    if let (Some(sup), Some(inf)) = (sup_set, inf_set) {
        return Ok(StoppingSets::new(
            parse_interval_set(sup)?,
            parse_interval_set(inf)?,
        ));
    }
    if sup_set.is_some() != inf_set.is_some() {
        return Err(Failure::config(
            "--sup-set and --inf-set must be given together",
        ));
    }
    if let Some(path) = solution {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("cannot read {path:?}: {e}")))?;
        let sol: GameSolution = serde_json::from_str(&text)?;
        return Ok(sol.sets);
    }
    let cfg = parse_grid(grid, 1e-10, 500, "robin")?;
    Ok(solver::solve(game, &cfg)?.sets)
}

#[derive(Serialize)]
struct ClosedFormReport {
    diagnostics: closed_form::ValueDiagnostics,
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample: Option<CounterexampleReport>,
}

#[derive(Serialize)]
struct CounterexampleReport {
    delta: f64,
    shoulder_height: f64,
    min_common_residual: f64,
    max_common_residual: f64,
}

fn cmd_closed_form(a: &ClosedFormArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let sol = closed_form::build_solution(a.r, a.lambda, a.eps)?;
    write_json(&a.out.join("solution.json"), &sol)?;

    let diagnostics = sol.verify(1e-3)?;
    let mut pass = diagnostics.pass();

    let payoffs = sol.example_payoffs();
    sol.emit_figure_data(&payoffs, ("l", "u"), &a.out.join("figure1.csv"))?;
    write_json(
        &a.out.join("game1.json"),
        &sol.example_game(ConstraintMode::Common),
    )?;

    let counterexample = match a.delta {
        Some(delta) => {
            let ctr_payoffs = sol.counterexample_payoffs(delta)?;
            sol.emit_figure_data(
                &ctr_payoffs,
                ("l_tilde", "u_tilde"),
                &a.out.join("figure2.csv"),
            )?;
            write_json(
                &a.out.join("game2.json"),
                &sol.counterexample_game(delta, ConstraintMode::Independent)?,
            )?;
            let (min_res, max_res) = sol.counterexample_common_residual(delta, 1e-3)?;
            pass = pass && min_res > 0.0;
            Some(CounterexampleReport {
                delta,
                shoulder_height: sol.value(sol.x_star - delta),
                min_common_residual: min_res,
                max_common_residual: max_res,
            })
        }
        None => None,
    };

    let report = ClosedFormReport {
        diagnostics,
        pass,
        counterexample,
    };
    write_json(&a.out.join("diagnostics.json"), &report)?;
    println!(
        "closed form: x* = {:.6}, diagnostics {}",
        sol.x_star,
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { EXIT_OK } else { EXIT_GATE })
}

fn cmd_solve(a: &SolveArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let game = read_game(&a.config)?.with_mode(a.mode);
    let cfg = parse_grid(&a.grid, a.tol, a.max_iter, &a.boundary)?;
    let sol = solver::solve(&game, &cfg)?;
    write_json(&a.out.join("solution.json"), &sol)?;
    sol.write_csv(&game.lower, &game.upper, &a.out.join("solution.csv"))?;
    println!(
        "solved {:?} in {} iterations (final change {:.3e}); A = {:?}, B = {:?}",
        a.mode,
        sol.iterations,
        sol.final_change,
        sol.sets.sup_set.to_pairs(),
        sol.sets.inf_set.to_pairs(),
    );
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SimulateReport {
    estimate: SimulationEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    expect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    within_gate: Option<bool>,
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let mut game = read_game(&a.config)?;
    if let Some(mode) = a.mode {
        game = game.with_mode(mode);
    }
    let sets = resolve_sets(&game, &a.solution, &a.sup_set, &a.inf_set, "-8,8,0.001")?;
    let (sup, inf) = HittingStrategy::from_sets(&sets);
    let cap = a.cap.unwrap_or(DEFAULT_CAP_OVER_R / game.discount);
    let est = monte_carlo::simulate_game(&game, a.x0, &sup, &inf, a.paths, cap, a.seed)?;
    let within_gate = a
        .expect
        .map(|v| (est.mean - v).abs() <= 3.0 * est.stderr + a.expect_tol);
    let report = SimulateReport {
        estimate: est,
        expect: a.expect,
        within_gate,
    };
    write_json(&a.out.join("report.json"), &report)?;
    println!(
        "J({:.4}) = {:.6} +- {:.2e} ({} paths)",
        a.x0, est.mean, est.stderr, est.n_paths
    );
    Ok(match within_gate {
        Some(false) => EXIT_GATE,
        _ => EXIT_OK,
    })
}

#[derive(Serialize)]
struct CouplingRunReport {
    seed: u64,
    report: CouplingReport,
}

#[derive(Serialize)]
struct CouplingSummary {
    runs: Vec<CouplingRunReport>,
    min_p_value: f64,
    all_pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_control: Option<CouplingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    negative_control_detects: Option<bool>,
}

fn cmd_coupling(a: &CouplingArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let game = read_game(&a.config)?;
    let sets = resolve_sets(&game, &a.solution, &a.sup_set, &a.inf_set, &a.grid)?;
    let mut runs = Vec::new();
    let mut min_p = f64::INFINITY;
    for k in 0..a.seeds {
        let seed = a.seed + k;
        let report = monte_carlo::coupling_check(
            &game,
            a.x0,
            &sets.sup_set,
            &sets.inf_set,
            a.samples,
            seed,
        )?;
        min_p = min_p.min(report.time_p_value).min(report.state_p_value);
        runs.push(CouplingRunReport { seed, report });
    }
    let all_pass = min_p > 0.01;
    let mut gate = all_pass;
    let (negative_control, negative_control_detects) = if a.negative_control {
        let rep = monte_carlo::coupling_negative_control(
            &game,
            a.x0,
            &sets.sup_set,
            &sets.inf_set,
            a.samples,
            a.seed,
        )?;
        let detects = rep.time_p_value < 0.01 || rep.state_p_value < 0.01;
        gate = gate && detects;
        (Some(rep), Some(detects))
    } else {
        (None, None)
    };
    let summary = CouplingSummary {
        runs,
        min_p_value: min_p,
        all_pass,
        negative_control,
        negative_control_detects,
    };
    write_json(&a.out.join("report.json"), &summary)?;
    println!(
        "coupling: min p-value {:.4} over {} seeds ({})",
        min_p,
        a.seeds,
        if all_pass { "pass" } else { "FAIL" }
    );
    Ok(if gate { EXIT_OK } else { EXIT_GATE })
}

fn cmd_deviations(a: &DeviationsArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let game = read_game(&a.config)?;
    let sets = resolve_sets(&game, &a.solution, &a.sup_set, &a.inf_set, &a.grid)?;
    let report = monte_carlo::saddle_deviation_battery(
        &game,
        a.x0,
        &sets,
        a.deviations,
        a.paths,
        a.seed,
    )?;
    write_json(&a.out.join("report.json"), &report)?;
    report.write_csv(&a.out.join("deviations.csv"))?;
    println!(
        "deviations: baseline {:.6} +- {:.2e}, {} violations over {} arms",
        report.baseline.mean,
        report.baseline.stderr,
        report.violations,
        report.arms.len()
    );
    Ok(if report.violations == 0 {
        EXIT_OK
    } else {
        EXIT_GATE
    })
}

fn cmd_equivalence(a: &EquivalenceArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let game = read_game(&a.config)?;
    let cfg = parse_grid(&a.grid, 1e-10, 500, "robin")?;
    let report = equivalence::cross_validate(&game, &cfg, a.paths, a.seed)?;
    write_json(&a.out.join("report.json"), &report)?;
    let verdict = if report.verdict_common.transfers {
        "TRANSFERS"
    } else {
        "NOT-TRANSFERS"
    };
    println!(
        "equivalence: {verdict}; sup |vC - vI| = {:.3e}; witness x = {:.3}",
        report.sup_diff_interior, report.witness_x
    );
    // internal consistency gates; the verdict itself is data, not a gate
    let consistent = report.verdict_common.consistent
        && report.verdict_independent.consistent
        && report.witness_confirmed != Some(false);
    Ok(if consistent { EXIT_OK } else { EXIT_GATE })
}

#[derive(Serialize)]
struct BsdeSummary {
    horizons: Vec<f64>,
    sup_errors: Vec<f64>,
    strictly_decreasing: bool,
    final_error: f64,
    final_gate: f64,
    pass: bool,
}

fn cmd_bsde(a: &BsdeArgs) -> Result<i32, Failure> {
    prepare_out(&a.out)?;
    let game = read_game(&a.config)?;
    let cfg = parse_grid(&a.grid, 1e-10, 500, "robin")?;
    let horizons: Vec<f64> = a
        .horizons
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::config(format!("bad horizons {:?}: {e}", a.horizons)))?;
    let stationary = solver::solve(&game, &cfg)?;

    let csv_path = a.out.join("convergence.csv");
    let mut csv = String::from("k,supError,runtimeSeconds\n");
    let mut sup_errors = Vec::new();
    for &k in &horizons {
        let start = Instant::now();
        let run = bsde::solve_truncated(&game, k, a.dt, &cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        let err = run
            .initial_slice()
            .iter()
            .zip(&stationary.value.values)
            .map(|(w, v)| (w - v).abs())
            .fold(0.0, f64::max);
        sup_errors.push(err);
        csv.push_str(&format!("{k},{err},{elapsed}\n"));
    }
    fs::write(&csv_path, csv)?;

    let strictly_decreasing = sup_errors.windows(2).all(|w| w[1] < w[0]);
    let final_error = *sup_errors.last().unwrap_or(&f64::INFINITY);
    let pass = strictly_decreasing && final_error <= a.max_final_error;
    let summary = BsdeSummary {
        horizons,
        sup_errors: sup_errors.clone(),
        strictly_decreasing,
        final_error,
        final_gate: a.max_final_error,
        pass,
    };
    write_json(&a.out.join("report.json"), &summary)?;
    println!(
        "truncation errors {:?} ({})",
        sup_errors,
        if pass { "pass" } else { "FAIL" }
    );
    Ok(if pass { EXIT_OK } else { EXIT_GATE })
}
