//! `snapdop` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use snapdop::differential::{self, CorrectionReport, DifferentialError};
use snapdop::ephemeris::{EphemerisFile, PerturbedEphemeris, TleCatalog};
use snapdop::geodesy::{self, GeodeticPosition};
use snapdop::observations::{self, DopplerObservation, MatchOptions, MatchStatus, SatelliteRef, StationMeta, StationRole};
use snapdop::orbits;
use snapdop::simulator::{self, ScenarioConfig, ScenarioTruth, SimError};
use snapdop::solver::{self, DifferentialOptions, SolveResult, SolverError, SolverOptions};

use report::{sidecar_path, ReportBuilder};

const SEED_ENV: &str = "SNAPDOP_SEED";

const ROVER_FILE: &str = "rover_obs.csv";
const BASE_FILE: &str = "base_obs.csv";
const STATIONS_FILE: &str = "stations.csv";
const TRUTH_FILE: &str = "truth.json";
const TLE_FILE: &str = "tle.txt";
const BROADCAST_FILE: &str = "broadcast_ephemeris.json";
const REPORT_FILE: &str = "report.json";
const SOLUTION_FILE: &str = "solution.json";
const RESIDUALS_FILE: &str = "residuals.csv";
const ERROR_SERIES_FILE: &str = "error_series.csv";
const CORRECTIONS_FILE: &str = "corrections.json";
const TRIALS_FILE: &str = "trials.csv";
const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "snapdop", version, about = "Snapshot differential Doppler positioning with LEO satellites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic rover/base scenario.
    Simulate(SimulateArgs),
    /// Estimate the rover position from observation files.
    Solve(SolveArgs),
    /// Run seeded standalone-vs-differential trials.
    Montecarlo(MonteCarloArgs),
    /// Assign catalog numbers to unmatched observations.
    Match(MatchArgs),
    /// Write measured, predicted and residual Doppler from a solve.
    ExportPlot(ExportPlotArgs),
    /// Print the default scenario configuration as JSON.
    DefaultConfig(DefaultConfigArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario configuration JSON; defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    rover: PathBuf,
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    stations: Option<PathBuf>,
    /// TLE text, or a broadcast ephemeris JSON written by `simulate`.
    #[arg(long, visible_alias = "ephemeris")]
    tle: PathBuf,
    #[arg(long)]
    differential: bool,
    /// Hold altitude at this value, meters.
    #[arg(long)]
    fix_altitude: Option<f64>,
    /// Huber threshold, Hz.
    #[arg(long)]
    robust_delta: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Truth JSON for error reporting.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Reject files with any invalid row.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MatchArgs {
    #[arg(long)]
    obs: PathBuf,
    #[arg(long)]
    tle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = observations::DEFAULT_MATCH_MAX_DISTANCE_M / 1e3)]
    max_distance_km: f64,
    #[arg(long, default_value_t = observations::DEFAULT_AMBIGUITY_RATIO)]
    ambiguity_ratio: f64,
}

#[derive(Debug, Args)]
struct ExportPlotArgs {
    /// Output directory of a previous `solve`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DefaultConfigArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Generation(String),
    #[error("cannot write {path}: {reason}")]
    Write { path: String, reason: String },
    #[error("{0}")]
    NoCommonSatellite(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Generation(_) | CliError::Write { .. } => 3,
            CliError::NoCommonSatellite(_) => 4,
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Write { path: path.display().to_string(), reason: e.to_string() }
}

/// Solution file written by `solve` and read by `export-plot`.
#[derive(Debug, Serialize, Deserialize)]
struct SolutionFile {
    mode: String,
    result: SolveResult,
    truth: Option<GeodeticPosition>,
    horizontal_error_m: Option<f64>,
    vertical_error_m: Option<f64>,
    corrections_applied: Option<usize>,
    corrections_skipped: Option<usize>,
}

fn read_input(path: &Path, rep: &mut ReportBuilder) -> Result<Vec<u8>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| input_err(path, e))?;
    rep.digest(path, &bytes);
    Ok(bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| write_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| write_err(path, e))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

fn csv_to_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<(), String>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| write_err(path, e))?;
    write_bytes(path, &buf)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| write_err(dir, e))
}

fn load_config(path: Option<&Path>, rep: &mut ReportBuilder) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let bytes = read_input(p, rep)?;
            serde_json::from_slice(&bytes).map_err(|e| input_err(p, e))?
        }
        None => ScenarioConfig::default(),
    };
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.seed = s.trim().parse().map_err(|_| CliError::Input(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        rep.warn(format!("seed overridden by {SEED_ENV}: {}", cfg.seed));
    }
    cfg.validate().map_err(|e| CliError::Input(e.to_string()))?;
    rep.report.config = serde_json::to_value(&cfg).unwrap_or(Value::Null);
    Ok(cfg)
}

/// Accepts TLE text or an [`EphemerisFile`] JSON document.
fn load_ephemeris(path: &Path, rep: &mut ReportBuilder) -> Result<PerturbedEphemeris, CliError> {
    let bytes = read_input(path, rep)?;
    let text = String::from_utf8(bytes).map_err(|e| input_err(path, e))?;
    if text.trim_start().starts_with('{') {
        let file: EphemerisFile = serde_json::from_str(&text).map_err(|e| input_err(path, e))?;
        return PerturbedEphemeris::from_file(&file).map_err(|e| input_err(path, e));
    }
    let parsed = orbits::parse_tle(&text, false).map_err(|e| input_err(path, e))?;
    for e in &parsed.skipped {
        rep.warn(format!("{}: skipped element set: {e}", path.display()));
    }
    if parsed.records.is_empty() {
        return Err(input_err(path, "no usable element sets"));
    }
    let catalog = TleCatalog::new(&parsed.records).map_err(|e| input_err(path, e))?;
    Ok(PerturbedEphemeris::new(catalog, Default::default()))
}

fn load_obs(path: &Path, strict: bool, rep: &mut ReportBuilder) -> Result<Vec<DopplerObservation>, CliError> {
    let bytes = read_input(path, rep)?;
    let loaded = observations::read_observations(bytes.as_slice(), strict).map_err(|e| input_err(path, e))?;
    for (row, reason) in &loaded.violations {
        rep.warn(format!("{}: row {row} dropped: {reason}", path.display()));
    }
    if loaded.observations.is_empty() {
        return Err(input_err(path, "no valid observations"));
    }
    Ok(loaded.observations)
}

fn write_observations(path: &Path, obs: &[DopplerObservation]) -> Result<(), CliError> {
    csv_to_file(path, |buf| observations::write_observations(buf, obs).map_err(|e| e.to_string()))
}

fn tle_text(records: &[orbits::TleRecord]) -> String {
    let mut out = String::new();
    for r in records {
        if let Some(name) = &r.name {
            out.push_str(name);
            out.push('\n');
        }
        let (l1, l2) = r.to_lines();
        out.push_str(&l1);
        out.push('\n');
        out.push_str(&l2);
        out.push('\n');
    }
    out
}

fn cmd_simulate(args: &SimulateArgs, rep: &mut ReportBuilder) -> Result<i32, CliError> {
    let cfg = load_config(args.config.as_deref(), rep)?;
    let sc = simulator::generate_scenario(&cfg).map_err(|e| match e {
        SimError::InvalidConfig { .. } => CliError::Input(e.to_string()),
        other => CliError::Generation(other.to_string()),
    })?;
    create_dir(&args.out)?;
    let out = &args.out;
    let files = [
        ("rover_observations", ROVER_FILE),
        ("base_observations", BASE_FILE),
        ("stations", STATIONS_FILE),
        ("truth", TRUTH_FILE),
        ("tle", TLE_FILE),
        ("broadcast_ephemeris", BROADCAST_FILE),
    ];
    write_observations(&out.join(ROVER_FILE), &sc.rover_obs)?;
    write_observations(&out.join(BASE_FILE), &sc.base_obs)?;
    csv_to_file(&out.join(STATIONS_FILE), |buf| observations::write_stations(buf, &sc.stations).map_err(|e| e.to_string()))?;
    write_json(&out.join(TRUTH_FILE), &sc.truth)?;
    write_bytes(&out.join(TLE_FILE), tle_text(&cfg.tle_set).as_bytes())?;
    write_json(&out.join(BROADCAST_FILE), &sc.truth.broadcast_file())?;
    for (role, name) in files {
        rep.output(role, &out.join(name));
    }
    let metrics = simulator::calibration_metrics(&sc).ok();
    rep.report.results = json!({
        "rover_observations": sc.rover_obs.len(),
        "base_observations": sc.base_obs.len(),
        "common_satellites": sc.truth.common_satellites,
        "calibration": metrics,
    });
    println!(
        "simulated {} rover and {} base observations, common satellites {:?}",
        sc.rover_obs.len(),
        sc.base_obs.len(),
        sc.truth.common_satellites
    );
    if let Some(m) = metrics {
        println!("residual RMSE vs broadcast: base {:.2} Hz, rover {:.2} Hz", m.base_rmse_hz, m.rover_rmse_hz);
    }
    Ok(0)
}

/// Runs the matcher on unmatched rows in place.
fn match_in_place(obs: &mut [DopplerObservation], eph: &PerturbedEphemeris, label: &str, rep: &mut ReportBuilder) {
    if obs.iter().all(|o| o.sat != SatelliteRef::Unmatched) {
        return;
    }
    let records = observations::match_observations(obs, eph.catalog(), &MatchOptions::default());
    let matched = records.iter().filter(|r| matches!(r.status, MatchStatus::Matched { .. })).count();
    let failed = obs.iter().filter(|o| o.sat == SatelliteRef::Unmatched).count();
    rep.warn(format!("{label}: matched {matched} observations, {failed} left unmatched"));
}

fn solver_exit(e: SolverError) -> CliError {
    match e {
        SolverError::Differential(DifferentialError::NoCommonSatellite) => CliError::NoCommonSatellite(e.to_string()),
        other => CliError::Input(other.to_string()),
    }
}

fn load_truth(path: &Path, rep: &mut ReportBuilder) -> Result<GeodeticPosition, CliError> {
    let bytes = read_input(path, rep)?;
    if let Ok(t) = serde_json::from_slice::<ScenarioTruth>(&bytes) {
        return Ok(t.config.rover_truth);
    }
    serde_json::from_slice::<GeodeticPosition>(&bytes).map_err(|e| input_err(path, e))
}

fn cmd_solve(args: &SolveArgs, rep: &mut ReportBuilder) -> Result<i32, CliError> {
    if args.differential && args.base.is_none() {
        return Err(CliError::Input("--differential requires --base".into()));
    }
    if args.differential && args.stations.is_none() {
        return Err(CliError::Input("--differential requires --stations".into()));
    }
    let mut options = SolverOptions { fix_altitude: args.fix_altitude, robust_loss_delta: args.robust_delta, ..SolverOptions::default() };
    if let Some(n) = args.max_iterations {
        options.max_iterations = n;
    }
    options.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let diff_options = DifferentialOptions::default();
    rep.report.config = json!({ "solver": options, "differential": args.differential.then_some(&diff_options) });

    let eph = load_ephemeris(&args.tle, rep)?;
    let mut rover = load_obs(&args.rover, args.strict, rep)?;
    match_in_place(&mut rover, &eph, "rover", rep);
    let truth = args.truth.as_deref().map(|p| load_truth(p, rep)).transpose()?;

    let (mode, result, corrections, series) = if args.differential {
        let base_path = args.base.as_deref().expect("checked above");
        let mut base = load_obs(base_path, args.strict, rep)?;
        match_in_place(&mut base, &eph, "base", rep);
        let stations_path = args.stations.as_deref().expect("checked above");
        let stations = observations::load_stations(stations_path).map_err(|e| input_err(stations_path, e))?;
        rep.digest(stations_path, &std::fs::read(stations_path).unwrap_or_default());
        let base_station = pick_base_station(&stations, &base).ok_or_else(|| input_err(stations_path, "no base station"))?;
        let sol = solver::solve_differential(&rover, &base, base_station, &eph, &options, &diff_options).map_err(solver_exit)?;
        ("differential", sol.result, Some(sol.report), Some(sol.series))
    } else {
        let r = solver::solve_standalone(&rover, &eph, &options).map_err(solver_exit)?;
        ("standalone", r, None, None)
    };

    let solution = SolutionFile {
        mode: mode.into(),
        horizontal_error_m: truth.map(|t| geodesy::horizontal_error(&result.position(), &t)),
        vertical_error_m: truth.map(|t| geodesy::vertical_error(&result.position(), &t)),
        truth,
        corrections_applied: corrections.as_ref().map(CorrectionReport::applied),
        corrections_skipped: corrections.as_ref().map(CorrectionReport::uncorrectable),
        result,
    };
    for w in &solution.result.warnings {
        rep.warn(w.clone());
    }

    create_dir(&args.out)?;
    let out = &args.out;
    write_json(&out.join(SOLUTION_FILE), &solution)?;
    rep.output("solution", &out.join(SOLUTION_FILE));
    csv_to_file(&out.join(RESIDUALS_FILE), |buf| solver::write_residuals(buf, &solution.result.fit_points).map_err(|e| e.to_string()))?;
    rep.output("residuals", &out.join(RESIDUALS_FILE));
    if let (Some(series), Some(corr)) = (&series, &corrections) {
        csv_to_file(&out.join(ERROR_SERIES_FILE), |buf| differential::write_error_series(buf, series).map_err(|e| e.to_string()))?;
        write_json(&out.join(CORRECTIONS_FILE), corr)?;
        rep.output("error_series", &out.join(ERROR_SERIES_FILE));
        rep.output("corrections", &out.join(CORRECTIONS_FILE));
    }

    let r = &solution.result;
    rep.report.results = json!({
        "mode": mode,
        "latitude_deg": r.state.latitude_deg,
        "longitude_deg": r.state.longitude_deg,
        "altitude_m": r.state.altitude_m,
        "clock_offset_hz": r.state.clock_offset_hz,
        "clock_drift_hz_s": r.state.clock_drift_hz_s,
        "converged": r.converged,
        "iterations": r.iterations,
        "final_rmse_hz": r.final_rmse,
        "horizontal_error_m": solution.horizontal_error_m,
    });
    println!(
        "{mode}: lat {:.6} lon {:.6} alt {:.1} m, clock {:.2} Hz + {:.4} Hz/s, RMSE {:.2} Hz, {} iterations",
        r.state.latitude_deg,
        r.state.longitude_deg,
        r.state.altitude_m,
        r.state.clock_offset_hz,
        r.state.clock_drift_hz_s,
        r.final_rmse,
        r.iterations
    );
    if let Some(e) = solution.horizontal_error_m {
        println!("horizontal error {e:.1} m");
    }
    if !r.converged {
        eprintln!("error: solver did not converge after {} iterations; result written", r.iterations);
        return Ok(5);
    }
    Ok(0)
}

/// Base station whose id appears in the base observations, else the first base.
fn pick_base_station<'a>(stations: &'a [StationMeta], base: &[DopplerObservation]) -> Option<&'a StationMeta> {
    let bases = || stations.iter().filter(|s| s.role == StationRole::Base);
    bases().find(|s| base.iter().any(|o| o.station_id == s.station_id)).or_else(|| bases().next())
}

fn cmd_montecarlo(args: &MonteCarloArgs, rep: &mut ReportBuilder) -> Result<i32, CliError> {
    let cfg = load_config(args.config.as_deref(), rep)?;
    if args.threads == Some(0) {
        return Err(CliError::Input("--threads must be at least 1".into()));
    }
    let mc = simulator::monte_carlo(&cfg, args.trials, args.threads).map_err(|e| CliError::Generation(e.to_string()))?;
    create_dir(&args.out)?;
    let out = &args.out;
    csv_to_file(&out.join(TRIALS_FILE), |buf| simulator::write_trials(buf, &mc.trials).map_err(|e| e.to_string()))?;
    write_json(&out.join(SUMMARY_FILE), &mc.summary)?;
    rep.output("trials", &out.join(TRIALS_FILE));
    rep.output("summary", &out.join(SUMMARY_FILE));
    let s = &mc.summary;
    rep.report.results = serde_json::to_value(s).unwrap_or(Value::Null);
    if s.n_failed > 0 {
        rep.warn(format!("{} of {} trials failed", s.n_failed, s.n_trials));
    }
    println!(
        "{} trials: median standalone {:.1} m, median differential {:.1} m, median reduction {:.1}%, differential better on {:.0}%",
        s.n_trials,
        s.standalone_error_m.median,
        s.differential_error_m.median,
        100.0 * s.median_reduction,
        100.0 * s.differential_better_fraction
    );
    if s.n_failed == s.n_trials {
        return Err(CliError::Generation("every trial failed".into()));
    }
    Ok(0)
}

fn cmd_match(args: &MatchArgs, rep: &mut ReportBuilder) -> Result<i32, CliError> {
    let options = MatchOptions { max_distance_m: args.max_distance_km * 1e3, ambiguity_ratio: args.ambiguity_ratio };
    if !(options.max_distance_m > 0.0) || !(options.ambiguity_ratio >= 1.0) {
        return Err(CliError::Input("--max-distance-km must be positive and --ambiguity-ratio at least 1".into()));
    }
    rep.report.config = serde_json::to_value(options).unwrap_or(Value::Null);
    let eph = load_ephemeris(&args.tle, rep)?;
    let mut obs = load_obs(&args.obs, false, rep)?;
    if obs.iter().any(|o| o.sat == SatelliteRef::Unmatched && o.reported_position.is_none()) {
        rep.warn("some unmatched rows carry no reported position");
    }
    let records = observations::match_observations(&mut obs, eph.catalog(), &options);
    write_observations(&args.out, &obs)?;
    rep.output("matched_observations", &args.out);
    let count = |f: fn(&MatchStatus) -> bool| records.iter().filter(|r| f(&r.status)).count();
    let matched = count(|s| matches!(s, MatchStatus::Matched { .. }));
    let already = count(|s| matches!(s, MatchStatus::AlreadyMatched { .. }));
    let flagged: Vec<_> = records
        .iter()
        .filter(|r| !matches!(r.status, MatchStatus::Matched { .. } | MatchStatus::AlreadyMatched { .. }))
        .collect();
    rep.report.results = json!({
        "matched": matched,
        "already_matched": already,
        "flagged": flagged,
    });
    println!("matched {matched}, already matched {already}, flagged {}", flagged.len());
    Ok(0)
}

fn cmd_export_plot(args: &ExportPlotArgs, rep: &mut ReportBuilder) -> Result<i32, CliError> {
    let path = args.result.join(SOLUTION_FILE);
    let bytes = read_input(&path, rep)?;
    let solution: SolutionFile = serde_json::from_slice(&bytes).map_err(|e| input_err(&path, e))?;
    let points = &solution.result.fit_points;
    csv_to_file(&args.out, |buf| solver::write_residuals(buf, points).map_err(|e| e.to_string()))?;
    rep.output("plot", &args.out);
    rep.report.results = json!({ "rows": points.len(), "mode": solution.mode });
    println!("wrote {} rows to {}", points.len(), args.out.display());
    Ok(0)
}

fn cmd_default_config(args: &DefaultConfigArgs) -> Result<i32, CliError> {
    let mut text = serde_json::to_string_pretty(&ScenarioConfig::default()).expect("config serializes");
    text.push('\n');
    match &args.out {
        Some(p) => write_bytes(p, text.as_bytes())?,
        None => print!("{text}"),
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, report_path) = match &cli.command {
        Command::Simulate(a) => ("simulate", Some(a.out.join(REPORT_FILE))),
        Command::Solve(a) => ("solve", Some(a.out.join(REPORT_FILE))),
        Command::Montecarlo(a) => ("montecarlo", Some(a.out.join(REPORT_FILE))),
        Command::Match(a) => ("match", Some(sidecar_path(&a.out))),
        Command::ExportPlot(a) => ("export-plot", Some(sidecar_path(&a.out))),
        Command::DefaultConfig(_) => ("default-config", None),
    };
    let mut rep = ReportBuilder::new(name);
    let outcome = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &mut rep),
        Command::Solve(a) => cmd_solve(a, &mut rep),
        Command::Montecarlo(a) => cmd_montecarlo(a, &mut rep),
        Command::Match(a) => cmd_match(a, &mut rep),
        Command::ExportPlot(a) => cmd_export_plot(a, &mut rep),
        Command::DefaultConfig(a) => cmd_default_config(a),
    };
    let mut code = outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        rep.warn(format!("error: {e}"));
        e.exit_code()
    });
    if let Some(path) = report_path {
        let ready = path.parent().is_none_or(|d| d.as_os_str().is_empty() || d.is_dir());
        let written = ready && write_json(&path, &rep.finish(code)).is_ok();
        if !written && code == 0 {
            eprintln!("error: cannot write report {}", path.display());
            code = 3;
        }
    }
    ExitCode::from(code as u8)
}
