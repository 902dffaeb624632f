//! Seeded synthetic scenarios and Monte Carlo evaluation.
//!
//! Measurements are synthesized from the true orbits; the solvers receive a
//! perturbed copy of the same element sets. Both stations therefore see the
//! same orbit error, which the base station can measure and the rover cannot.

use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::differential::BaseClockModel;
use crate::doppler_model::{self, geometric_doppler, StateVector, DEFAULT_BASE_FREQUENCY_HZ};
use crate::ephemeris::{perturb_state, Ephemeris, EphemerisFile, PerturbedEphemeris, RtnOffset, TleCatalog};
use crate::geodesy::{self, EcefVector, GeodeticPosition};
use crate::observations::{self, DopplerObservation, SatelliteRef, StationMeta, StationRole};
use crate::orbits::{self, OrbitError, SatStateEcef, TleRecord};
use crate::solver::{self, DifferentialOptions, SolveResult, SolverError, SolverOptions};
use crate::time;

pub const BASE_STATION_ID: &str = "base";
pub const ROVER_STATION_ID: &str = "rover";
/// Spacing of the truth series stored with each scenario, seconds.
pub const TRUTH_SERIES_STEP_S: f64 = 10.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error("only {achievable} satellites are visible to both stations (need {required})")]
    InsufficientCommonVisibility { achievable: usize, required: usize },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
}

fn invalid(field: &str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Window {
    /// UTC Unix seconds.
    pub start_unix_s: f64,
    pub duration_s: f64,
}

impl Default for Window {
    fn default() -> Self {
        Self { start_unix_s: DEFAULT_WINDOW_START, duration_s: 3300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstSchedule {
    pub duration_s: f64,
    pub period_s: f64,
    pub sample_period_s: f64,
    /// Burst starts move by up to ± this fraction of the period.
    pub jitter_fraction: f64,
}

impl Default for BurstSchedule {
    fn default() -> Self {
        Self { duration_s: 5.0, period_s: 60.0, sample_period_s: 0.5, jitter_fraction: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaseSampling {
    pub sample_period_s: f64,
}

impl Default for BaseSampling {
    fn default() -> Self {
        Self { sample_period_s: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub base_sigma_hz: f64,
    pub rover_sigma_hz: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { base_sigma_hz: 2.0, rover_sigma_hz: 11.0 }
    }
}

/// Receiver clock: offset + drift·(t − window start) + random walk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    pub offset_hz: f64,
    pub drift_hz_s: f64,
    /// Random-walk intensity, Hz/√s.
    pub random_walk_hz_sqrt_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// Every satellite gets exactly the configured offsets.
    Fixed,
    /// Each satellite draws each component from N(0, configured magnitude²).
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationConfig {
    pub mode: PerturbationMode,
    pub radial_m: f64,
    pub along_track_m: f64,
    pub cross_track_m: f64,
    /// Exact offsets for specific satellites, bypassing `mode`.
    pub overrides: BTreeMap<u32, RtnOffset>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            mode: PerturbationMode::Gaussian,
            radial_m: 60.0,
            along_track_m: 420.0,
            cross_track_m: 140.0,
            overrides: BTreeMap::new(),
        }
    }
}

impl PerturbationConfig {
    pub fn none() -> Self {
        Self { mode: PerturbationMode::Fixed, radial_m: 0.0, along_track_m: 0.0, cross_track_m: 0.0, overrides: BTreeMap::new() }
    }
}

/// Full description of a synthetic experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub rover_truth: GeodeticPosition,
    pub base_position: GeodeticPosition,
    pub tle_set: Vec<TleRecord>,
    pub window: Window,
    pub rover_burst: BurstSchedule,
    pub base_sampling: BaseSampling,
    pub base_frequency_hz: f64,
    pub noise: NoiseConfig,
    pub rover_clock: ClockConfig,
    pub base_clock: ClockConfig,
    pub ephemeris_perturbation: PerturbationConfig,
    pub elevation_mask_deg: f64,
    pub min_common_satellites: usize,
    /// Per-axis noise on the self-reported satellite positions, meters.
    pub reported_position_sigma_m: f64,
    /// Leave `sat_norad` empty so the matcher has to identify satellites.
    pub emit_unmatched: bool,
    pub seed: u64,
    pub solver: SolverOptions,
    pub differential: DifferentialOptions,
}

/// 2024-06-01T18:00:00Z.
pub const DEFAULT_WINDOW_START: f64 = 1_717_264_800.0;

/// Three near-polar satellites of a synthetic 66-satellite Walker
/// constellation that pass over the default stations during the default window.
pub const DEFAULT_TLE_TEXT: &str = "\
SIM P2 S03
1 90014U          24153.58333333  .00000000  00000-0  00000-0 0  9990
2 90014  86.4000  31.6000 0002000  90.0000  81.8182 14.34200000    18
SIM P2 S05
1 90016U          24153.58333333  .00000000  00000-0  00000-0 0  9992
2 90016  86.4000  31.6000 0002000  90.0000 147.2727 14.34200000    12
SIM P3 S01
1 90023U          24153.58333333  .00000000  00000-0  00000-0 0  9990
2 90023  86.4000  63.2000 0002000  90.0000  32.7273 14.34200000    15
";

pub fn default_tle_set() -> Vec<TleRecord> {
    orbits::parse_tle(DEFAULT_TLE_TEXT, true).expect("built-in element sets are valid").records
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rover_truth: GeodeticPosition { latitude_deg: 37.4275, longitude_deg: -122.1697, altitude_m: 30.0 },
            base_position: GeodeticPosition { latitude_deg: 37.4912, longitude_deg: -122.2580, altitude_m: 10.0 },
            tle_set: default_tle_set(),
            window: Window::default(),
            rover_burst: BurstSchedule::default(),
            base_sampling: BaseSampling::default(),
            base_frequency_hz: DEFAULT_BASE_FREQUENCY_HZ,
            noise: NoiseConfig::default(),
            rover_clock: ClockConfig { offset_hz: 2000.0, drift_hz_s: 0.095, random_walk_hz_sqrt_s: 0.05 },
            base_clock: ClockConfig::default(),
            ephemeris_perturbation: PerturbationConfig::default(),
            elevation_mask_deg: 10.0,
            min_common_satellites: 3,
            reported_position_sigma_m: 2000.0,
            emit_unmatched: false,
            seed: 20_240_601,
            solver: SolverOptions::default(),
            differential: DifferentialOptions::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.rover_truth.validate().map_err(|e| invalid("rover_truth", e.to_string()))?;
        self.base_position.validate().map_err(|e| invalid("base_position", e.to_string()))?;
        if self.tle_set.is_empty() {
            return Err(invalid("tle_set", "at least one element set is required"));
        }
        if !(self.window.duration_s > 0.0) {
            return Err(invalid("window.duration_s", "must be positive"));
        }
        if !self.window.start_unix_s.is_finite() {
            return Err(invalid("window.start_unix_s", "must be finite"));
        }
        let b = &self.rover_burst;
        if !(b.duration_s >= 0.0) {
            return Err(invalid("rover_burst.duration_s", "must be non-negative"));
        }
        if !(b.period_s > 0.0) {
            return Err(invalid("rover_burst.period_s", "must be positive"));
        }
        if !(b.duration_s < b.period_s) {
            return Err(invalid(
                "rover_burst.duration_s",
                format!("burst duration {} s must be shorter than the period {} s", b.duration_s, b.period_s),
            ));
        }
        if !(b.sample_period_s > 0.0) {
            return Err(invalid("rover_burst.sample_period_s", "must be positive"));
        }
        if !(0.0..=0.5).contains(&b.jitter_fraction) {
            return Err(invalid("rover_burst.jitter_fraction", "must lie in [0, 0.5]"));
        }
        if !(self.base_sampling.sample_period_s > 0.0) {
            return Err(invalid("base_sampling.sample_period_s", "must be positive"));
        }
        if !(self.base_frequency_hz > 0.0) {
            return Err(invalid("base_frequency_hz", "must be positive"));
        }
        for (field, v) in [
            ("noise.base_sigma_hz", self.noise.base_sigma_hz),
            ("noise.rover_sigma_hz", self.noise.rover_sigma_hz),
            ("rover_clock.random_walk_hz_sqrt_s", self.rover_clock.random_walk_hz_sqrt_s),
            ("base_clock.random_walk_hz_sqrt_s", self.base_clock.random_walk_hz_sqrt_s),
            ("reported_position_sigma_m", self.reported_position_sigma_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, "must be a non-negative number"));
            }
        }
        let p = &self.ephemeris_perturbation;
        for (field, v) in [
            ("ephemeris_perturbation.radial_m", p.radial_m),
            ("ephemeris_perturbation.along_track_m", p.along_track_m),
            ("ephemeris_perturbation.cross_track_m", p.cross_track_m),
        ] {
            if !v.is_finite() || (p.mode == PerturbationMode::Gaussian && v < 0.0) {
                return Err(invalid(field, "must be finite (and non-negative in gaussian mode)"));
            }
        }
        if !(-90.0..=90.0).contains(&self.elevation_mask_deg) {
            return Err(invalid("elevation_mask_deg", "must lie in [-90, 90]"));
        }
        self.solver.validate().map_err(|e| invalid("solver", e.to_string()))?;
        if !(self.differential.max_extrapolation_s >= 0.0) {
            return Err(invalid("differential.max_extrapolation_s", "must be non-negative"));
        }
        Ok(())
    }

    /// Rover burst start times.
    pub fn burst_starts(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let b = &self.rover_burst;
        let w = &self.window;
        let latest = w.duration_s - b.duration_s;
        let mut out = Vec::new();
        let mut j = 0u32;
        loop {
            let nominal = f64::from(j) * b.period_s;
            if nominal > latest {
                break;
            }
            let jitter = if b.jitter_fraction > 0.0 {
                (rng.random::<f64>() * 2.0 - 1.0) * b.jitter_fraction * b.period_s
            } else {
                0.0
            };
            out.push((nominal + jitter).clamp(0.0, latest));
            j += 1;
        }
        out
    }
}

/// Offsets (seconds after window start) of the rover samples.
fn rover_offsets(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let b = &config.rover_burst;
    let per_burst = (b.duration_s / b.sample_period_s + 1e-9).floor() as u32;
    let mut out: Vec<f64> = config
        .burst_starts(rng)
        .into_iter()
        .flat_map(|s| (0..=per_burst).map(move |m| s + f64::from(m) * b.sample_period_s))
        .collect();
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

fn base_offsets(config: &ScenarioConfig) -> Vec<f64> {
    let n = (config.window.duration_s / config.base_sampling.sample_period_s + 1e-9).floor() as u32;
    (0..=n).map(|k| f64::from(k) * config.base_sampling.sample_period_s).collect()
}

/// Random-stream identifiers, one per purpose, so that changing one noise
/// source never shifts the draws of another.
#[derive(Clone, Copy)]
enum Stream {
    Perturbation = 1,
    Bursts = 2,
    RoverClock = 3,
    BaseClock = 4,
    RoverNoise = 5,
    BaseNoise = 6,
    Reported = 7,
}

fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Clock value at each (sorted, unique) time.
fn clock_trajectory(clock: &ClockConfig, start: f64, times: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut walk = 0.0;
    let mut prev = start;
    times
        .iter()
        .map(|&t| {
            let dt = (t - prev).max(0.0);
            walk += clock.random_walk_hz_sqrt_s * dt.sqrt() * normal(rng);
            prev = t;
            clock.offset_hz + clock.drift_hz_s * (t - start) + walk
        })
        .collect()
}

/// Displaces every state of a series by the same RTN offset.
pub fn perturb_ephemeris(true_series: &[SatStateEcef], offset: &RtnOffset) -> Vec<SatStateEcef> {
    true_series.iter().map(|s| perturb_state(s, offset)).collect()
}

fn draw_offsets(config: &ScenarioConfig, ids: &[u32]) -> BTreeMap<u32, RtnOffset> {
    let p = &config.ephemeris_perturbation;
    let mut rng = rng_for(config.seed, Stream::Perturbation);
    ids.iter()
        .map(|&id| {
            let draws = [normal(&mut rng), normal(&mut rng), normal(&mut rng)];
            let offset = match (p.overrides.get(&id), p.mode) {
                (Some(o), _) => *o,
                (None, PerturbationMode::Fixed) => {
                    RtnOffset { radial_m: p.radial_m, along_track_m: p.along_track_m, cross_track_m: p.cross_track_m }
                }
                (None, PerturbationMode::Gaussian) => RtnOffset {
                    radial_m: p.radial_m * draws[0],
                    along_track_m: p.along_track_m * draws[1],
                    cross_track_m: p.cross_track_m * draws[2],
                },
            };
            (id, offset)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockSample {
    pub time: f64,
    pub value_hz: f64,
}

/// Ground truth kept alongside a generated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTruth {
    pub config: ScenarioConfig,
    pub offsets: BTreeMap<u32, RtnOffset>,
    pub rover_clock: Vec<ClockSample>,
    pub base_clock: Vec<ClockSample>,
    /// True states every [`TRUTH_SERIES_STEP_S`] over the window, observed satellites only.
    pub true_series: BTreeMap<u32, Vec<SatStateEcef>>,
    /// Broadcast states at the same instants.
    pub broadcast_series: BTreeMap<u32, Vec<SatStateEcef>>,
    /// Satellites seen by both stations at a common instant.
    pub common_satellites: Vec<u32>,
}

impl ScenarioTruth {
    pub fn rover_clock_at(&self, t: f64) -> Option<f64> {
        self.rover_clock
            .binary_search_by(|c| c.time.total_cmp(&t))
            .ok()
            .map(|i| self.rover_clock[i].value_hz)
    }

    pub fn broadcast_file(&self) -> EphemerisFile {
        EphemerisFile { tles: self.config.tle_set.clone(), offsets: self.offsets.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub rover_obs: Vec<DopplerObservation>,
    pub base_obs: Vec<DopplerObservation>,
    pub stations: Vec<StationMeta>,
    pub truth: ScenarioTruth,
    /// Perturbed ephemeris handed to the solvers.
    pub broadcast: PerturbedEphemeris,
    /// Unperturbed ephemeris the measurements were made from.
    pub true_catalog: TleCatalog,
}

impl Scenario {
    pub fn base_station(&self) -> &StationMeta {
        self.stations.iter().find(|s| s.role == StationRole::Base).expect("scenario has a base station")
    }
}

struct Track {
    times: Vec<f64>,
    states: Vec<SatStateEcef>,
}

/// Visible (elevation ≥ mask) samples of one satellite from one station.
fn visible_track(
    catalog: &TleCatalog,
    id: u32,
    times: &[f64],
    at: &GeodeticPosition,
    mask: f64,
) -> Result<Track, OrbitError> {
    let mut track = Track { times: Vec::new(), states: Vec::new() };
    for &t in times {
        let s = catalog.state(id, t)?;
        if geodesy::elevation_angle(s.position, at) >= mask {
            track.times.push(t);
            track.states.push(s);
        }
    }
    Ok(track)
}

#[allow(clippy::too_many_arguments)]
fn synthesize(
    station: &str,
    at: &GeodeticPosition,
    tracks: &BTreeMap<u32, Track>,
    clock_times: &[f64],
    clock: &[f64],
    sigma: f64,
    config: &ScenarioConfig,
    noise_rng: &mut ChaCha8Rng,
    reported_rng: &mut ChaCha8Rng,
) -> Vec<DopplerObservation> {
    let rx = at.to_ecef();
    let mut out = Vec::new();
    for (&id, track) in tracks {
        for (&t, s) in track.times.iter().zip(&track.states) {
            let ci = clock_times.binary_search_by(|c| c.total_cmp(&t)).expect("clock sampled at every epoch");
            let geometric = geometric_doppler(s, rx, config.base_frequency_hz).expect("satellite is far from receiver");
            let noise = sigma * normal(noise_rng);
            let sr = config.reported_position_sigma_m;
            let reported = s.position
                + EcefVector::new(sr * normal(reported_rng), sr * normal(reported_rng), sr * normal(reported_rng));
            out.push(DopplerObservation {
                station_id: station.to_string(),
                time: t,
                sat: if config.emit_unmatched { SatelliteRef::Unmatched } else { SatelliteRef::Norad(id) },
                reported_position: Some(reported),
                base_frequency: config.base_frequency_hz,
                measured_frequency: config.base_frequency_hz + (geometric + clock[ci] + noise),
                burst_id: None,
                snr_db: None,
            });
        }
    }
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.sat.cmp(&b.sat)));
    out
}

/// Builds rover and base observations, station metadata and the truth record.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario, SimError> {
    config.validate()?;
    let catalog = TleCatalog::new(&config.tle_set)?;
    let ids = catalog.norad_ids();
    let start = config.window.start_unix_s;

    let mut burst_rng = rng_for(config.seed, Stream::Bursts);
    let rover_times: Vec<f64> = rover_offsets(config, &mut burst_rng).into_iter().map(|o| start + o).collect();
    let base_times: Vec<f64> = base_offsets(config).into_iter().map(|o| start + o).collect();

    let mask = config.elevation_mask_deg;
    let mut rover_tracks = BTreeMap::new();
    let mut base_tracks = BTreeMap::new();
    let mut common = Vec::new();
    for &id in &ids {
        let rt = visible_track(&catalog, id, &rover_times, &config.rover_truth, mask)?;
        let bt = visible_track(&catalog, id, &base_times, &config.base_position, mask)?;
        let base_window = bt.times.first().zip(bt.times.last());
        let shared = rt.times.iter().any(|t| {
            base_window.is_some_and(|(a, b)| (a..=b).contains(&t))
                && geodesy::elevation_angle(catalog.state(id, *t).map(|s| s.position).unwrap_or_default(), &config.base_position)
                    >= mask
        });
        if shared {
            common.push(id);
        }
        if !rt.times.is_empty() {
            rover_tracks.insert(id, rt);
        }
        if !bt.times.is_empty() {
            base_tracks.insert(id, bt);
        }
    }
    if common.len() < config.min_common_satellites {
        return Err(SimError::InsufficientCommonVisibility {
            achievable: common.len(),
            required: config.min_common_satellites,
        });
    }

    let offsets = draw_offsets(config, &ids);
    let broadcast = PerturbedEphemeris::new(catalog.clone(), offsets.clone());

    let rover_clock = clock_trajectory(&config.rover_clock, start, &rover_times, &mut rng_for(config.seed, Stream::RoverClock));
    let base_clock = clock_trajectory(&config.base_clock, start, &base_times, &mut rng_for(config.seed, Stream::BaseClock));

    let mut reported_rng = rng_for(config.seed, Stream::Reported);
    let mut rover_obs = synthesize(
        ROVER_STATION_ID,
        &config.rover_truth,
        &rover_tracks,
        &rover_times,
        &rover_clock,
        config.noise.rover_sigma_hz,
        config,
        &mut rng_for(config.seed, Stream::RoverNoise),
        &mut reported_rng,
    );
    observations::assign_burst_ids(&mut rover_obs, observations::DEFAULT_GAP_THRESHOLD_S);
    let base_obs = synthesize(
        BASE_STATION_ID,
        &config.base_position,
        &base_tracks,
        &base_times,
        &base_clock,
        config.noise.base_sigma_hz,
        config,
        &mut rng_for(config.seed, Stream::BaseNoise),
        &mut reported_rng,
    );

    let observed: Vec<u32> = ids.iter().copied().filter(|id| rover_tracks.contains_key(id) || base_tracks.contains_key(id)).collect();
    let series_times = orbits::sample_times(start, start + config.window.duration_s, TRUTH_SERIES_STEP_S);
    let mut true_series = BTreeMap::new();
    let mut broadcast_series = BTreeMap::new();
    for &id in &observed {
        let tru: Vec<SatStateEcef> = series_times.iter().map(|&t| catalog.state(id, t)).collect::<Result<_, _>>()?;
        broadcast_series.insert(id, perturb_ephemeris(&tru, &offsets[&id]));
        true_series.insert(id, tru);
    }

    let stations = vec![
        StationMeta {
            station_id: BASE_STATION_ID.into(),
            role: StationRole::Base,
            known_position: Some(config.base_position),
            clock_disciplined: true,
        },
        StationMeta { station_id: ROVER_STATION_ID.into(), role: StationRole::Rover, known_position: None, clock_disciplined: false },
    ];
    let to_samples = |times: &[f64], vals: &[f64]| -> Vec<ClockSample> {
        times.iter().zip(vals).map(|(&time, &value_hz)| ClockSample { time, value_hz }).collect()
    };
    let truth = ScenarioTruth {
        config: config.clone(),
        offsets,
        rover_clock: to_samples(&rover_times, &rover_clock),
        base_clock: to_samples(&base_times, &base_clock),
        true_series,
        broadcast_series,
        common_satellites: common,
    };
    Ok(Scenario { rover_obs, base_obs, stations, truth, broadcast, true_catalog: catalog })
}

/// Residual levels of a scenario measured against the broadcast ephemeris at the true positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetrics {
    /// RMS of base residuals with the base clock model at zero.
    pub base_rmse_hz: f64,
    /// RMS of rover residuals about their mean (the constant oscillator
    /// offset is removed; drift, random walk, noise and orbit error remain).
    pub rover_rmse_hz: f64,
}

pub fn calibration_metrics(scenario: &Scenario) -> Result<CalibrationMetrics, SolverError> {
    let cfg = &scenario.truth.config;
    let base = StateVector::from_position(&cfg.base_position, cfg.window.start_unix_s);
    let rb = doppler_model::residual_vector(&base, &scenario.base_obs, &scenario.broadcast)?;
    let rover = StateVector::from_position(&cfg.rover_truth, cfg.window.start_unix_s);
    let rr = doppler_model::residual_vector(&rover, &scenario.rover_obs, &scenario.broadcast)?;
    let mean = rr.iter().sum::<f64>() / rr.len().max(1) as f64;
    let centered: Vec<f64> = rr.iter().map(|r| r - mean).collect();
    Ok(CalibrationMetrics {
        base_rmse_hz: doppler_model::doppler_rmse(&rb)?,
        rover_rmse_hz: doppler_model::doppler_rmse(&centered)?,
    })
}

/// Rover residual RMSE before and after differential correction, both taken
/// against the solver's model (broadcast ephemeris) at the true rover
/// position plus the true rover clock, over the corrected observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionGain {
    pub pre_rmse_hz: f64,
    pub post_rmse_hz: f64,
}

pub fn correction_gain(scenario: &Scenario, corrected: &[DopplerObservation]) -> Result<CorrectionGain, SolverError> {
    let truth = &scenario.truth;
    let rx = truth.config.rover_truth.to_ecef();
    let raw: BTreeMap<(u32, u64), &DopplerObservation> = scenario
        .rover_obs
        .iter()
        .filter_map(|o| o.sat.norad().map(|n| ((n, o.time.to_bits()), o)))
        .collect();
    let (mut pre, mut post) = (Vec::new(), Vec::new());
    for o in corrected {
        let Some(id) = o.sat.norad() else { continue };
        let Some(original) = raw.get(&(id, o.time.to_bits())) else { continue };
        let Some(clock) = truth.rover_clock_at(o.time) else { continue };
        let sat = scenario.broadcast.state(id, o.time).map_err(doppler_model::ModelError::from)?;
        let model = geometric_doppler(&sat, rx, o.base_frequency).map_err(doppler_model::ModelError::from)? + clock;
        pre.push(original.doppler() - model);
        post.push(o.doppler() - model);
    }
    Ok(CorrectionGain { pre_rmse_hz: doppler_model::doppler_rmse(&pre)?, post_rmse_hz: doppler_model::doppler_rmse(&post)? })
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of Monte Carlo trial `trial` under base seed `seed`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed.wrapping_add(trial))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    pub std_err_m: Option<f64>,
    pub diff_err_m: Option<f64>,
    pub reduction: Option<f64>,
    pub std_rmse_hz: Option<f64>,
    pub diff_rmse_hz: Option<f64>,
    pub converged_std: bool,
    pub converged_diff: bool,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn succeeded(&self) -> bool {
        self.std_err_m.is_some() && self.diff_err_m.is_some()
    }
}

/// Outputs of one end-to-end trial.
#[derive(Debug, Clone)]
pub struct TrialRun {
    pub scenario: Scenario,
    pub standalone: Result<SolveResult, SolverError>,
    pub differential: Result<solver::DifferentialSolution, SolverError>,
}

/// Generates and solves one scenario with `config` exactly as given (no seed derivation).
pub fn run_scenario(config: &ScenarioConfig) -> Result<TrialRun, SimError> {
    let scenario = generate_scenario(config)?;
    let standalone = solver::solve_standalone(&scenario.rover_obs, &scenario.broadcast, &config.solver);
    let differential = solver::solve_differential(
        &scenario.rover_obs,
        &scenario.base_obs,
        scenario.base_station(),
        &scenario.broadcast,
        &config.solver,
        &config.differential,
    );
    Ok(TrialRun { scenario, standalone, differential })
}

/// Config of trial `trial`: the base config with the derived seed.
pub fn trial_config(config: &ScenarioConfig, trial: u64) -> ScenarioConfig {
    ScenarioConfig { seed: trial_seed(config.seed, trial), ..config.clone() }
}

pub fn run_trial(config: &ScenarioConfig, trial: u64) -> TrialRecord {
    let cfg = trial_config(config, trial);
    let mut rec = TrialRecord {
        trial,
        seed: cfg.seed,
        std_err_m: None,
        diff_err_m: None,
        reduction: None,
        std_rmse_hz: None,
        diff_rmse_hz: None,
        converged_std: false,
        converged_diff: false,
        error: None,
    };
    let run = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let mut errors = Vec::new();
    match &run.standalone {
        Ok(r) => {
            rec.std_err_m = Some(geodesy::horizontal_error(&r.position(), &cfg.rover_truth));
            rec.std_rmse_hz = Some(r.final_rmse);
            rec.converged_std = r.converged;
        }
        Err(e) => errors.push(format!("standalone: {e}")),
    }
    match &run.differential {
        Ok(d) => {
            rec.diff_err_m = Some(geodesy::horizontal_error(&d.result.position(), &cfg.rover_truth));
            rec.diff_rmse_hz = Some(d.result.final_rmse);
            rec.converged_diff = d.result.converged;
        }
        Err(e) => errors.push(format!("differential: {e}")),
    }
    if let (Some(s), Some(d)) = (rec.std_err_m, rec.diff_err_m) {
        rec.reduction = Some(if s > 0.0 { (s - d) / s } else { 0.0 });
    }
    if !errors.is_empty() {
        rec.error = Some(errors.join("; "));
    }
    rec
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Distribution {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p25: f64,
    pub p75: f64,
    pub p95: f64,
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Distribution {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        if v.is_empty() {
            return Self::default();
        }
        Self {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: percentile(&v, 0.5),
            p25: percentile(&v, 0.25),
            p75: percentile(&v, 0.75),
            p95: percentile(&v, 0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub n_trials: usize,
    pub n_failed: usize,
    pub failure_rate: f64,
    pub standalone_error_m: Distribution,
    pub differential_error_m: Distribution,
    pub reduction: Distribution,
    /// Median of the per-trial reductions (e_std − e_diff)/e_std.
    pub median_reduction: f64,
    /// (median e_std − median e_diff) / median e_std.
    pub reduction_of_medians: f64,
    /// Fraction of successful trials where the differential error is smaller.
    pub differential_better_fraction: f64,
    pub standalone_rmse_hz: Distribution,
    pub differential_rmse_hz: Distribution,
    pub converged_standalone: usize,
    pub converged_differential: usize,
}

pub fn summarize(trials: &[TrialRecord]) -> MonteCarloSummary {
    let ok: Vec<&TrialRecord> = trials.iter().filter(|t| t.succeeded()).collect();
    let std_err = Distribution::of(ok.iter().filter_map(|t| t.std_err_m));
    let diff_err = Distribution::of(ok.iter().filter_map(|t| t.diff_err_m));
    let reduction = Distribution::of(ok.iter().filter_map(|t| t.reduction));
    let better = ok.iter().filter(|t| t.diff_err_m < t.std_err_m).count();
    let n_failed = trials.len() - ok.len();
    MonteCarloSummary {
        n_trials: trials.len(),
        n_failed,
        failure_rate: if trials.is_empty() { 0.0 } else { n_failed as f64 / trials.len() as f64 },
        median_reduction: reduction.median,
        reduction_of_medians: if std_err.median > 0.0 { (std_err.median - diff_err.median) / std_err.median } else { f64::NAN },
        differential_better_fraction: if ok.is_empty() { f64::NAN } else { better as f64 / ok.len() as f64 },
        standalone_error_m: std_err,
        differential_error_m: diff_err,
        reduction,
        standalone_rmse_hz: Distribution::of(ok.iter().filter_map(|t| t.std_rmse_hz)),
        differential_rmse_hz: Distribution::of(ok.iter().filter_map(|t| t.diff_rmse_hz)),
        converged_standalone: ok.iter().filter(|t| t.converged_std).count(),
        converged_differential: ok.iter().filter(|t| t.converged_diff).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub trials: Vec<TrialRecord>,
    pub summary: MonteCarloSummary,
}

/// Runs `n_trials` independent trials, in parallel, ordered by trial index.
/// `threads` limits the worker count; `None` uses the global pool.
pub fn monte_carlo(config: &ScenarioConfig, n_trials: u64, threads: Option<usize>) -> Result<MonteCarloResult, SimError> {
    if n_trials < 1 {
        return Err(invalid("n_trials", "at least one trial is required"));
    }
    config.validate()?;
    let work = || -> Vec<TrialRecord> { (0..n_trials).into_par_iter().map(|k| run_trial(config, k)).collect() };
    let trials = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| invalid("threads", e.to_string()))?
            .install(work),
        None => work(),
    };
    let summary = summarize(&trials);
    Ok(MonteCarloResult { trials, summary })
}

pub const TRIAL_COLUMNS: [&str; 9] = [
    "trial",
    "seed",
    "std_err_m",
    "diff_err_m",
    "reduction",
    "std_rmse_hz",
    "diff_rmse_hz",
    "converged_std",
    "converged_diff",
];

pub fn write_trials<W: std::io::Write>(writer: W, trials: &[TrialRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRIAL_COLUMNS)?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in trials {
        w.write_record([
            t.trial.to_string(),
            t.seed.to_string(),
            f(t.std_err_m),
            f(t.diff_err_m),
            f(t.reduction),
            f(t.std_rmse_hz),
            f(t.diff_rmse_hz),
            t.converged_std.to_string(),
            t.converged_diff.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Layout of a Walker-delta style constellation of circular orbits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerSpec {
    pub planes: u32,
    pub per_plane: u32,
    pub inclination_deg: f64,
    pub mean_motion_rev_day: f64,
    /// RAAN spacing between adjacent planes.
    pub raan_spacing_deg: f64,
    pub raan0_deg: f64,
    /// In-plane phase offset between adjacent planes, fraction of the slot spacing.
    pub phase_offset_fraction: f64,
    pub eccentricity: f64,
    pub first_norad_id: u32,
    /// UTC Unix seconds.
    pub epoch: f64,
}

impl WalkerSpec {
    /// 66 satellites, 6 near-polar planes, about 780 km altitude.
    pub fn iridium_like(epoch: f64) -> Self {
        Self {
            planes: 6,
            per_plane: 11,
            inclination_deg: 86.4,
            mean_motion_rev_day: 14.342,
            raan_spacing_deg: 31.6,
            raan0_deg: 0.0,
            phase_offset_fraction: 0.5,
            eccentricity: 2.0e-4,
            first_norad_id: 90_001,
            epoch,
        }
    }
}

/// Element set with fields rounded to what the text format can carry.
#[allow(clippy::too_many_arguments)]
pub fn synthetic_tle(
    norad_id: u32,
    name: &str,
    epoch: f64,
    inclination_deg: f64,
    raan_deg: f64,
    eccentricity: f64,
    arg_perigee_deg: f64,
    mean_anomaly_deg: f64,
    mean_motion: f64,
) -> TleRecord {
    let days = (epoch / time::SECONDS_PER_DAY).floor() as i64;
    let (year, _, _) = time::civil_from_days(days);
    let epoch_day = (epoch - time::unix_from_calendar(year, 1, 1, 0, 0, 0.0)) / time::SECONDS_PER_DAY + 1.0;
    let wrap = |a: f64| {
        let w = (a.rem_euclid(360.0) * 1e4).round() / 1e4;
        if w >= 360.0 {
            0.0
        } else {
            w
        }
    };
    let rec = TleRecord {
        norad_id,
        name: Some(name.to_string()),
        classification: 'U',
        international_designator: String::new(),
        epoch_year: year,
        epoch_day,
        epoch,
        mean_motion_dot: 0.0,
        mean_motion_ddot: 0.0,
        bstar: 0.0,
        ephemeris_type: 0,
        element_set_number: 999,
        inclination_deg,
        raan_deg: wrap(raan_deg),
        eccentricity,
        arg_perigee_deg: wrap(arg_perigee_deg),
        mean_anomaly_deg: wrap(mean_anomaly_deg),
        mean_motion,
        revolution_number: 1,
    };
    let (l1, l2) = rec.to_lines();
    orbits::parse_element_set(rec.name.clone(), &l1, &l2, 1).expect("formatted element set re-parses")
}

pub fn walker_constellation(walker: &WalkerSpec) -> Vec<TleRecord> {
    let slot = 360.0 / f64::from(walker.per_plane);
    let mut out = Vec::new();
    for p in 0..walker.planes {
        for s in 0..walker.per_plane {
            let id = walker.first_norad_id + p * walker.per_plane + s;
            let anomaly = f64::from(s) * slot + f64::from(p) * walker.phase_offset_fraction * slot;
            out.push(synthetic_tle(
                id,
                &format!("SIM P{} S{:02}", p + 1, s + 1),
                walker.epoch,
                walker.inclination_deg,
                walker.raan0_deg + f64::from(p) * walker.raan_spacing_deg,
                walker.eccentricity,
                90.0,
                anomaly,
                walker.mean_motion_rev_day,
            ));
        }
    }
    out
}

/// Largest elevation of a satellite seen from `at` over the given instants.
pub fn max_elevation(ephemeris: &dyn Ephemeris, norad_id: u32, at: &GeodeticPosition, times: &[f64]) -> Result<f64, OrbitError> {
    let mut best = f64::NEG_INFINITY;
    for &t in times {
        best = best.max(geodesy::elevation_angle(ephemeris.state(norad_id, t)?.position, at));
    }
    Ok(best)
}

/// Base clock model implied by a scenario's clock configuration (random walk excluded).
pub fn nominal_base_clock(config: &ScenarioConfig) -> BaseClockModel {
    BaseClockModel {
        offset_hz: config.base_clock.offset_hz,
        drift_hz_s: config.base_clock.drift_hz_s,
        reference_epoch: config.window.start_unix_s,
    }
}
