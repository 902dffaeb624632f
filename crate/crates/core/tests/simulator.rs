mod common;

use snapdop::doppler_model::{self, StateVector};
use snapdop::ephemeris::{Ephemeris, RtnOffset};
use snapdop::geodesy;
use snapdop::observations::{self, SatelliteRef};
use snapdop::simulator::{self, PerturbationConfig, ScenarioConfig, SimError};

fn csv_bytes(obs: &[snapdop::observations::DopplerObservation]) -> Vec<u8> {
    let mut buf = Vec::new();
    observations::write_observations(&mut buf, obs).unwrap();
    buf
}

#[test]
fn same_seed_gives_identical_files() {
    let cfg = ScenarioConfig::default();
    let a = simulator::generate_scenario(&cfg).unwrap();
    let b = simulator::generate_scenario(&cfg).unwrap();
    assert_eq!(csv_bytes(&a.rover_obs), csv_bytes(&b.rover_obs));
    assert_eq!(csv_bytes(&a.base_obs), csv_bytes(&b.base_obs));
    assert_eq!(serde_json::to_vec(&a.truth).unwrap(), serde_json::to_vec(&b.truth).unwrap());
    let c = simulator::generate_scenario(&ScenarioConfig { seed: cfg.seed + 1, ..cfg }).unwrap();
    assert_ne!(csv_bytes(&a.rover_obs), csv_bytes(&c.rover_obs));
}

#[test]
fn error_free_config_reproduces_forward_model() {
    let cfg = common::noiseless_config();
    let sc = simulator::generate_scenario(&cfg).unwrap();
    assert!(sc.truth.offsets.values().all(RtnOffset::is_zero));
    let truth = StateVector {
        clock_offset_hz: cfg.rover_clock.offset_hz,
        clock_drift_hz_s: cfg.rover_clock.drift_hz_s,
        ..StateVector::from_position(&cfg.rover_truth, cfg.window.start_unix_s)
    };
    let r = doppler_model::residual_vector(&truth, &sc.rover_obs, &sc.true_catalog).unwrap();
    // only f64 spacing of 1.626 GHz (2.4e-7 Hz) remains
    assert!(r.iter().all(|x| x.abs() < 1e-6), "{}", r.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    for o in &sc.rover_obs {
        let reported = o.reported_position.unwrap();
        let id = o.sat.norad().unwrap();
        assert_eq!(reported, sc.true_catalog.state(id, o.time).unwrap().position);
    }
}

#[test]
fn radial_offset_raises_orbit() {
    let mut cfg = common::noiseless_config();
    cfg.ephemeris_perturbation = common::fixed_perturbation(RtnOffset { radial_m: 1000.0, ..RtnOffset::ZERO });
    let sc = simulator::generate_scenario(&cfg).unwrap();
    for (id, series) in &sc.truth.true_series {
        for (t, b) in series.iter().zip(&sc.truth.broadcast_series[id]) {
            assert!((b.position.norm() - t.position.norm() - 1000.0).abs() < 1.0);
            assert_eq!(b.position, sc.broadcast.state(*id, t.time).unwrap().position);
        }
    }
}

#[test]
fn along_track_offset_is_a_time_shift() {
    let d = 1000.0;
    let mut cfg = common::noiseless_config();
    cfg.ephemeris_perturbation = common::fixed_perturbation(RtnOffset { along_track_m: d, ..RtnOffset::ZERO });
    let sc = simulator::generate_scenario(&cfg).unwrap();
    let mut checked = 0;
    for (id, series) in &sc.truth.true_series {
        for (t, b) in series.iter().zip(&sc.truth.broadcast_series[id]).step_by(17) {
            let rate = t.position.cross(t.velocity).norm() / t.position.dot(t.position);
            let shifted = sc.true_catalog.state(*id, t.time + d / t.position.norm() / rate).unwrap();
            assert!(shifted.position.distance(b.position) < 5.0, "{}", shifted.position.distance(b.position));
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn noise_matches_configured_sigma() {
    let sigma = 5.0;
    let mut cfg = common::noiseless_config();
    cfg.noise.base_sigma_hz = sigma;
    cfg.base_sampling.sample_period_s = 0.125;
    let sc = simulator::generate_scenario(&cfg).unwrap();
    let base = StateVector::from_position(&cfg.base_position, cfg.window.start_unix_s);
    let r = doppler_model::residual_vector(&base, &sc.base_obs, &sc.true_catalog).unwrap();
    assert!(r.len() >= 10_000, "{} samples", r.len());
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let sd = (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd / sigma - 1.0).abs() < 0.05, "{sd}");
    assert!(mean.abs() < 4.0 * sigma / n.sqrt());
}

#[test]
fn observations_respect_elevation_mask() {
    for mask in [10.0, 25.0] {
        let cfg = ScenarioConfig { elevation_mask_deg: mask, min_common_satellites: 1, ..ScenarioConfig::default() };
        let sc = simulator::generate_scenario(&cfg).unwrap();
        for (obs, at) in [(&sc.rover_obs, &cfg.rover_truth), (&sc.base_obs, &cfg.base_position)] {
            assert!(!obs.is_empty());
            for o in obs.iter() {
                let s = sc.true_catalog.state(o.sat.norad().unwrap(), o.time).unwrap();
                assert!(geodesy::elevation_angle(s.position, at) >= mask);
            }
        }
    }
}

#[test]
fn rover_bursts_follow_schedule() {
    let cfg = ScenarioConfig::default();
    let sc = simulator::generate_scenario(&cfg).unwrap();
    let bursts = observations::group_into_bursts(&sc.rover_obs, observations::DEFAULT_GAP_THRESHOLD_S);
    assert!(bursts.len() > 10);
    for b in &bursts {
        assert!(b.duration() <= cfg.rover_burst.duration_s);
        let offset = (b.start - cfg.window.start_unix_s) % cfg.rover_burst.period_s;
        assert!(offset < cfg.rover_burst.duration_s);
    }
    assert!(sc.rover_obs.iter().all(|o| o.station_id == simulator::ROVER_STATION_ID));
    assert!(sc.base_obs.iter().all(|o| o.station_id == simulator::BASE_STATION_ID));
}

#[test]
fn unmatched_mode_hides_identities() {
    let cfg = ScenarioConfig { emit_unmatched: true, ..ScenarioConfig::default() };
    let sc = simulator::generate_scenario(&cfg).unwrap();
    assert!(sc.rover_obs.iter().chain(&sc.base_obs).all(|o| o.sat == SatelliteRef::Unmatched));
}

#[test]
fn single_trial_equals_manual_run() {
    let cfg = ScenarioConfig::default();
    let mc = simulator::monte_carlo(&cfg, 1, None).unwrap();
    assert_eq!(mc.trials.len(), 1);
    let rec = &mc.trials[0];
    let manual_cfg = ScenarioConfig { seed: simulator::trial_seed(cfg.seed, 0), ..cfg.clone() };
    let run = simulator::run_scenario(&manual_cfg).unwrap();
    let s = run.standalone.unwrap();
    let d = run.differential.unwrap();
    assert_eq!(rec.seed, manual_cfg.seed);
    assert_eq!(rec.std_err_m, Some(geodesy::horizontal_error(&s.position(), &cfg.rover_truth)));
    assert_eq!(rec.diff_err_m, Some(geodesy::horizontal_error(&d.result.position(), &cfg.rover_truth)));
    assert_eq!(mc.summary.n_trials, 1);
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = ScenarioConfig::default();
    let a = simulator::monte_carlo(&cfg, 6, Some(1)).unwrap();
    let b = simulator::monte_carlo(&cfg, 6, Some(3)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let mut csv = Vec::new();
    simulator::write_trials(&mut csv, &a.trials).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), simulator::TRIAL_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn without_orbit_error_correction_does_little() {
    let cfg = ScenarioConfig { ephemeris_perturbation: PerturbationConfig::none(), ..ScenarioConfig::default() };
    let mc = simulator::monte_carlo(&cfg, 100, None).unwrap();
    assert_eq!(mc.summary.n_failed, 0);
    assert!(mc.summary.median_reduction.abs() <= 0.10, "{}", mc.summary.median_reduction);
}

#[test]
fn too_few_common_satellites_is_an_error() {
    let cfg = ScenarioConfig { min_common_satellites: 4, ..ScenarioConfig::default() };
    match simulator::generate_scenario(&cfg) {
        Err(SimError::InsufficientCommonVisibility { achievable, required }) => {
            assert_eq!((achievable, required), (3, 4));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn invalid_configs_name_the_field() {
    let mut cfg = ScenarioConfig::default();
    cfg.rover_burst.duration_s = 60.0;
    assert!(matches!(simulator::generate_scenario(&cfg), Err(SimError::InvalidConfig { field, .. }) if field == "rover_burst.duration_s"));
    let mut cfg = ScenarioConfig::default();
    cfg.noise.rover_sigma_hz = -1.0;
    assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig { field, .. }) if field == "noise.rover_sigma_hz"));
    let mut cfg = ScenarioConfig::default();
    cfg.rover_truth.latitude_deg = 95.0;
    assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig { field, .. }) if field == "rover_truth"));
}

#[test]
fn config_json_round_trips_and_fills_defaults() {
    let cfg = ScenarioConfig::default();
    let text = serde_json::to_string_pretty(&cfg).unwrap();
    let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back, cfg);
    let partial: ScenarioConfig = serde_json::from_str(r#"{"seed": 7, "noise": {"rover_sigma_hz": 3.0}}"#).unwrap();
    assert_eq!(partial.seed, 7);
    assert_eq!(partial.noise.rover_sigma_hz, 3.0);
    assert_eq!(partial.noise.base_sigma_hz, cfg.noise.base_sigma_hz);
    assert_eq!(partial.tle_set, cfg.tle_set);
}

#[test]
fn walker_constellation_has_expected_shape() {
    let walker = simulator::WalkerSpec::iridium_like(simulator::DEFAULT_WINDOW_START);
    let tles = simulator::walker_constellation(&walker);
    assert_eq!(tles.len(), 66);
    let ids: std::collections::BTreeSet<u32> = tles.iter().map(|t| t.norad_id).collect();
    assert_eq!(ids.len(), 66);
    assert!(tles.iter().all(|t| (t.inclination_deg - 86.4).abs() < 1e-9));
}
