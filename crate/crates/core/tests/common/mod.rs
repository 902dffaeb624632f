#![allow(dead_code)]

use serde::Deserialize;
use snapdop::orbits::{parse_element_set, Propagator};

#[derive(Debug, Deserialize)]
pub struct VectorFile {
    pub source: String,
    pub cases: Vec<VectorCase>,
}

#[derive(Debug, Deserialize)]
pub struct VectorCase {
    pub line1: String,
    pub line2: String,
    pub states: Vec<VectorState>,
}

#[derive(Debug, Deserialize)]
pub struct VectorState {
    pub minutes: f64,
    pub position_km: [f64; 3],
    pub velocity_km_s: [f64; 3],
}

pub fn load_vectors() -> VectorFile {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/sgp4_verification.json");
    serde_json::from_str(&std::fs::read_to_string(path).expect("fixture present")).expect("fixture parses")
}

/// Largest position and velocity deviation (km, km/s) over every published state.
pub fn worst_vector_deviation(file: &VectorFile) -> (f64, f64, usize) {
    let (mut dp, mut dv, mut n) = (0.0f64, 0.0f64, 0);
    for case in &file.cases {
        let rec = parse_element_set(None, &case.line1, &case.line2, 1).expect("fixture element set parses");
        let prop = Propagator::new(&rec).expect("near-Earth case");
        for s in &case.states {
            let st = prop.propagate_teme(s.minutes).expect("propagates");
            let p = st.position_km;
            let v = st.velocity_km_s;
            dp = dp.max((0..3).map(|i| (p[i] - s.position_km[i]).abs()).fold(0.0, f64::max));
            dv = dv.max((0..3).map(|i| (v[i] - s.velocity_km_s[i]).abs()).fold(0.0, f64::max));
            n += 1;
        }
    }
    (dp, dv, n)
}

use snapdop::ephemeris::RtnOffset;
use snapdop::simulator::{PerturbationConfig, ScenarioConfig};

/// Default scenario with every noise source, clock walk and orbit error switched off.
pub fn noiseless_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.noise.base_sigma_hz = 0.0;
    cfg.noise.rover_sigma_hz = 0.0;
    cfg.rover_clock.random_walk_hz_sqrt_s = 0.0;
    cfg.base_clock.random_walk_hz_sqrt_s = 0.0;
    cfg.reported_position_sigma_m = 0.0;
    cfg.ephemeris_perturbation = PerturbationConfig::none();
    cfg
}

/// The same offset for every satellite.
pub fn fixed_perturbation(offset: RtnOffset) -> PerturbationConfig {
    PerturbationConfig {
        mode: snapdop::simulator::PerturbationMode::Fixed,
        radial_m: offset.radial_m,
        along_track_m: offset.along_track_m,
        cross_track_m: offset.cross_track_m,
        overrides: Default::default(),
    }
}

pub fn noiseless_config_at(rover: snapdop::geodesy::GeodeticPosition) -> ScenarioConfig {
    ScenarioConfig { rover_truth: rover, ..noiseless_config() }
}
