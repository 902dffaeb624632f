use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use snapdop::simulator::{self, ScenarioConfig};

fn snapdop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snapdop")).args(args).env_remove("SNAPDOP_SEED").output().expect("binary runs")
}

fn snapdop_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snapdop")).args(args).env(key, value).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, serde_json::to_string(cfg).unwrap()).unwrap();
    p
}

fn simulate(dir: &Path, config: Option<&Path>) -> PathBuf {
    let out = dir.join("sim");
    let mut args = vec!["simulate", "--out", s(&out)];
    if let Some(c) = config {
        args.extend(["--config", s(c)]);
    }
    let o = snapdop(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn solve(sim: &Path, out: &Path, differential: bool, extra: &[&str]) -> Output {
    let rover = sim.join("rover_obs.csv");
    let base = sim.join("base_obs.csv");
    let stations = sim.join("stations.csv");
    let eph = sim.join("broadcast_ephemeris.json");
    let truth = sim.join("truth.json");
    let mut args = vec!["solve", "--rover", s(&rover), "--tle", s(&eph), "--truth", s(&truth), "--out", s(out)];
    if differential {
        args.extend(["--differential", "--base", s(&base), "--stations", s(&stations)]);
    }
    args.extend(extra);
    snapdop(&args)
}

#[test]
fn simulate_outputs_are_stable_for_a_seed() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let sa = simulate(a.path(), None);
    let sb = simulate(b.path(), None);
    for f in ["rover_obs.csv", "base_obs.csv", "stations.csv", "truth.json", "tle.txt", "broadcast_ephemeris.json"] {
        assert_eq!(std::fs::read(sa.join(f)).unwrap(), std::fs::read(sb.join(f)).unwrap(), "{f}");
    }
    let report = read_json(&sa.join("report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["command"], "simulate");
    assert_eq!(report["exit_code"], 0);
    assert!(report["wall_time_s"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["config"]["seed"], ScenarioConfig::default().seed);
}

#[test]
fn shipped_config_is_the_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default_scenario.json");
    let cfg: ScenarioConfig = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg, ScenarioConfig::default());
}

#[test]
fn bad_burst_config_exits_2_naming_field() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.rover_burst.duration_s = 90.0;
    let c = write_config(dir.path(), &cfg);
    let o = snapdop(&["simulate", "--config", s(&c), "--out", s(&dir.path().join("sim"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rover_burst.duration_s"));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = snapdop(&["simulate", "--out", s(&blocker.join("sim"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn seed_environment_override() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    let o = snapdop_env(&["simulate", "--out", s(&out)], "SNAPDOP_SEED", "42");
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&out.join("report.json"))["config"]["seed"], 42);
    let o = snapdop_env(&["simulate", "--out", s(&out)], "SNAPDOP_SEED", "forty-two");
    assert_eq!(code(&o), 2);
}

#[test]
fn standalone_and_differential_solves() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), None);
    let std_out = dir.path().join("std");
    let o = solve(&sim, &std_out, false, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("horizontal error"));
    let e_std = read_json(&std_out.join("solution.json"))["horizontal_error_m"].as_f64().unwrap();
    assert!((50.0..5000.0).contains(&e_std), "{e_std}");

    let diff_out = dir.path().join("diff");
    let o = solve(&sim, &diff_out, true, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e_diff = read_json(&diff_out.join("solution.json"))["horizontal_error_m"].as_f64().unwrap();
    assert!(e_diff < e_std, "differential {e_diff} standalone {e_std}");
    for f in ["error_series.csv", "corrections.json", "residuals.csv", "report.json"] {
        assert!(diff_out.join(f).exists(), "{f}");
    }
}

#[test]
fn differential_without_base_exits_2() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), None);
    let rover = sim.join("rover_obs.csv");
    let tle = sim.join("tle.txt");
    let out = dir.path().join("x");
    let o = snapdop(&["solve", "--rover", s(&rover), "--tle", s(&tle), "--differential", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

/// Keeps the header plus rows whose `sat_norad` column equals `id`.
fn filter_rows(src: &Path, dst: &Path, id: &str) {
    let text = std::fs::read_to_string(src).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let col = header.split(',').position(|c| c == "sat_norad").unwrap();
    let mut out = vec![header.to_string()];
    out.extend(lines.filter(|l| l.split(',').nth(col) == Some(id)).map(str::to_string));
    std::fs::write(dst, out.join("\n") + "\n").unwrap();
}

#[test]
fn disjoint_satellites_exit_4() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), None);
    filter_rows(&sim.join("base_obs.csv"), &sim.join("base_obs.csv"), "90014");
    filter_rows(&sim.join("rover_obs.csv"), &sim.join("rover_obs.csv"), "90016");
    let o = solve(&sim, &dir.path().join("x"), true, &[]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn non_convergence_exits_5_with_result() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), None);
    let out = dir.path().join("x");
    let o = solve(&sim, &out, false, &["--max-iterations", "1"]);
    assert_eq!(code(&o), 5);
    let sol = read_json(&out.join("solution.json"));
    assert_eq!(sol["result"]["converged"], false);
    assert_eq!(read_json(&out.join("report.json"))["exit_code"], 5);
}

fn trial_row(path: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    assert_eq!(header, simulator::TRIAL_COLUMNS);
    lines.next().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn single_trial_matches_simulate_then_solve() {
    let dir = TempDir::new().unwrap();
    let mc = dir.path().join("mc");
    let o = snapdop(&["montecarlo", "--trials", "1", "--out", s(&mc)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let row = trial_row(&mc.join("trials.csv"));
    let col = |name: &str| row[simulator::TRIAL_COLUMNS.iter().position(|c| *c == name).unwrap()].parse::<f64>().unwrap();

    let seed = simulator::trial_seed(ScenarioConfig::default().seed, 0);
    let sim = dir.path().join("sim");
    assert_eq!(code(&snapdop_env(&["simulate", "--out", s(&sim)], "SNAPDOP_SEED", &seed.to_string())), 0);
    let (std_out, diff_out) = (dir.path().join("std"), dir.path().join("diff"));
    assert_eq!(code(&solve(&sim, &std_out, false, &[])), 0);
    assert_eq!(code(&solve(&sim, &diff_out, true, &[])), 0);
    let e_std = read_json(&std_out.join("solution.json"))["horizontal_error_m"].as_f64().unwrap();
    let e_diff = read_json(&diff_out.join("solution.json"))["horizontal_error_m"].as_f64().unwrap();
    assert_eq!(col("seed"), seed as f64);
    assert_eq!(col("std_err_m"), e_std);
    assert_eq!(col("diff_err_m"), e_diff);
}

#[test]
fn montecarlo_reruns_are_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&snapdop(&["montecarlo", "--trials", "4", "--out", s(&a)])), 0);
    assert_eq!(code(&snapdop(&["montecarlo", "--trials", "4", "--threads", "2", "--out", s(&b)])), 0);
    for f in ["trials.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(read_json(&a.join("summary.json"))["n_trials"], 4);
    assert_ne!(code(&snapdop(&["montecarlo", "--trials", "0", "--out", s(&a)])), 0);
}

#[test]
fn match_fills_catalog_numbers() {
    let dir = TempDir::new().unwrap();
    let known = simulate(dir.path(), None);
    let hidden_dir = dir.path().join("hidden");
    std::fs::create_dir(&hidden_dir).unwrap();
    let cfg = ScenarioConfig { emit_unmatched: true, ..ScenarioConfig::default() };
    let c = write_config(&hidden_dir, &cfg);
    let hidden = simulate(&hidden_dir, Some(&c));
    let out = dir.path().join("matched.csv");
    let obs = hidden.join("rover_obs.csv");
    let tle = hidden.join("tle.txt");
    let o = snapdop(&["match", "--obs", s(&obs), "--tle", s(&tle), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap(), std::fs::read_to_string(known.join("rover_obs.csv")).unwrap());
    let report = read_json(&dir.path().join("matched.report.json"));
    assert_eq!(report["results"]["flagged"].as_array().unwrap().len(), 0);
    assert!(report["results"]["matched"].as_u64().unwrap() > 100);
}

#[test]
fn export_plot_schema_and_residuals() {
    let dir = TempDir::new().unwrap();
    let sim = simulate(dir.path(), None);
    let solved = dir.path().join("std");
    assert_eq!(code(&solve(&sim, &solved, false, &[])), 0);
    let plot = dir.path().join("plot.csv");
    assert_eq!(code(&snapdop(&["export-plot", "--result", s(&solved), "--out", s(&plot)])), 0);
    let text = std::fs::read_to_string(&plot).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "norad_id,time_unix_s,f_meas_hz,f_pred_hz,residual_hz");
    let mut rows = 0;
    for l in lines {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[2] - v[3] - v[4]).abs() < 1e-6);
        rows += 1;
    }
    assert!(rows > 100);
    let missing = dir.path().join("nothing");
    assert_eq!(code(&snapdop(&["export-plot", "--result", s(&missing), "--out", s(&plot)])), 2);
}

#[test]
fn noiseless_scenario_plots_zero_residuals() {
    let dir = TempDir::new().unwrap();
    let mut cfg = ScenarioConfig::default();
    cfg.noise.base_sigma_hz = 0.0;
    cfg.noise.rover_sigma_hz = 0.0;
    cfg.rover_clock.random_walk_hz_sqrt_s = 0.0;
    cfg.reported_position_sigma_m = 0.0;
    cfg.ephemeris_perturbation = simulator::PerturbationConfig::none();
    let c = write_config(dir.path(), &cfg);
    let sim = simulate(dir.path(), Some(&c));
    let solved = dir.path().join("std");
    assert_eq!(code(&solve(&sim, &solved, false, &[])), 0);
    let plot = dir.path().join("plot.csv");
    assert_eq!(code(&snapdop(&["export-plot", "--result", s(&solved), "--out", s(&plot)])), 0);
    let text = std::fs::read_to_string(&plot).unwrap();
    for l in text.lines().skip(1) {
        let r: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(r.abs() < 1e-3, "{r}");
    }
}
