//! Doppler observation records, CSV ingestion, burst grouping and satellite matching.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::{Ephemeris, TleCatalog};
use crate::geodesy::{EcefVector, GeodeticPosition};
use crate::orbits::TleRecord;

/// Largest accepted |measured − base| frequency, Hz.
pub const MAX_FREQUENCY_DEVIATION_HZ: f64 = 200_000.0;
pub const DEFAULT_GAP_THRESHOLD_S: f64 = 2.0;
pub const DEFAULT_MATCH_MAX_DISTANCE_M: f64 = 100_000.0;
pub const DEFAULT_AMBIGUITY_RATIO: f64 = 2.0;

pub const OBSERVATION_COLUMNS: [&str; 9] = [
    "station_id",
    "time_unix_s",
    "sat_norad",
    "reported_x_m",
    "reported_y_m",
    "reported_z_m",
    "f_base_hz",
    "f_measured_hz",
    "snr_db",
];

pub const STATION_COLUMNS: [&str; 6] = ["station_id", "role", "lat_deg", "lon_deg", "alt_m", "clock_disciplined"];

#[derive(Debug, Error)]
pub enum ObservationError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected [{expected}], found [{found}]")]
    SchemaMismatch { expected: String, found: String },
    #[error("row {row}: {reason}")]
    RowParseError { row: usize, reason: String },
    #[error("row {row}: {reason}")]
    InvariantViolation { row: usize, reason: String },
}

/// Satellite identity of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SatelliteRef {
    Norad(u32),
    /// Not yet matched to a catalog entry; the reported position identifies it.
    Unmatched,
}

impl SatelliteRef {
    pub fn norad(self) -> Option<u32> {
        match self {
            SatelliteRef::Norad(id) => Some(id),
            SatelliteRef::Unmatched => None,
        }
    }
}

/// One time-tagged carrier measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerObservation {
    pub station_id: String,
    /// UTC Unix seconds.
    pub time: f64,
    pub sat: SatelliteRef,
    /// Satellite position as self-reported in the decoded frame, ECEF meters.
    pub reported_position: Option<EcefVector>,
    /// Nominal carrier f_B, Hz.
    pub base_frequency: f64,
    /// Absolute measured carrier, Hz.
    pub measured_frequency: f64,
    pub burst_id: Option<u32>,
    pub snr_db: Option<f64>,
}

impl DopplerObservation {
    /// Measured Doppler, `measured_frequency − base_frequency`.
    pub fn doppler(&self) -> f64 {
        self.measured_frequency - self.base_frequency
    }

    pub fn validate(&self) -> Result<(), String> {
        if !self.time.is_finite() {
            return Err("time is not finite".into());
        }
        if !(self.base_frequency.is_finite() && self.base_frequency > 0.0) {
            return Err(format!("base frequency {} must be positive", self.base_frequency));
        }
        if !(self.doppler().abs() <= MAX_FREQUENCY_DEVIATION_HZ) {
            return Err(format!(
                "measured frequency {} deviates from base {} by more than {MAX_FREQUENCY_DEVIATION_HZ} Hz",
                self.measured_frequency, self.base_frequency
            ));
        }
        if self.sat == SatelliteRef::Unmatched && self.reported_position.is_none() {
            return Err("unmatched observation without a reported position".into());
        }
        if let Some(p) = self.reported_position {
            if !p.is_finite() {
                return Err("reported position is not finite".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationRole {
    Base,
    Rover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationMeta {
    pub station_id: String,
    pub role: StationRole,
    pub known_position: Option<GeodeticPosition>,
    pub clock_disciplined: bool,
}

impl StationMeta {
    pub fn validate(&self) -> Result<(), String> {
        if self.role == StationRole::Base && self.known_position.is_none() {
            return Err(format!("base station {} has no known position", self.station_id));
        }
        if let Some(p) = &self.known_position {
            p.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

/// Observations read from disk plus the rows rejected for invariant violations.
#[derive(Debug, Clone, Default)]
pub struct LoadedObservations {
    pub observations: Vec<DopplerObservation>,
    /// (1-based data row, reason). Rejected rows are not in `observations`.
    pub violations: Vec<(usize, String)>,
}

fn io_err(path: &Path, source: std::io::Error) -> ObservationError {
    ObservationError::Io { path: path.display().to_string(), source }
}

fn check_header(headers: &csv::StringRecord, expected: &[&str]) -> Result<(), ObservationError> {
    let found: Vec<&str> = headers.iter().map(str::trim).collect();
    if found != expected {
        return Err(ObservationError::SchemaMismatch { expected: expected.join(","), found: found.join(",") });
    }
    Ok(())
}

fn parse_opt_f64(s: &str, row: usize, col: &str) -> Result<Option<f64>, ObservationError> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| ObservationError::RowParseError { row, reason: format!("{col}: cannot parse {s:?}") })
}

fn parse_f64(s: &str, row: usize, col: &str) -> Result<f64, ObservationError> {
    parse_opt_f64(s, row, col)?.ok_or_else(|| ObservationError::RowParseError { row, reason: format!("{col} is empty") })
}

/// Reads the observation CSV. With `strict`, the first invariant violation is an error.
pub fn read_observations<R: Read>(reader: R, strict: bool) -> Result<LoadedObservations, ObservationError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers()?, &OBSERVATION_COLUMNS)?;
    let mut out = LoadedObservations::default();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ObservationError::RowParseError { row, reason: e.to_string() })?;
        if rec.len() != OBSERVATION_COLUMNS.len() {
            return Err(ObservationError::RowParseError { row, reason: format!("{} fields", rec.len()) });
        }
        let sat = match rec[2].trim() {
            "" => SatelliteRef::Unmatched,
            s => SatelliteRef::Norad(s.parse().map_err(|_| ObservationError::RowParseError {
                row,
                reason: format!("sat_norad: cannot parse {s:?}"),
            })?),
        };
        let reported = [
            parse_opt_f64(&rec[3], row, "reported_x_m")?,
            parse_opt_f64(&rec[4], row, "reported_y_m")?,
            parse_opt_f64(&rec[5], row, "reported_z_m")?,
        ];
        let reported_position = match reported {
            [Some(x), Some(y), Some(z)] => Some(EcefVector::new(x, y, z)),
            [None, None, None] => None,
            _ => {
                return Err(ObservationError::RowParseError { row, reason: "reported position partially present".into() })
            }
        };
        let obs = DopplerObservation {
            station_id: rec[0].trim().to_string(),
            time: parse_f64(&rec[1], row, "time_unix_s")?,
            sat,
            reported_position,
            base_frequency: parse_f64(&rec[6], row, "f_base_hz")?,
            measured_frequency: parse_f64(&rec[7], row, "f_measured_hz")?,
            burst_id: None,
            snr_db: parse_opt_f64(&rec[8], row, "snr_db")?,
        };
        match obs.validate() {
            Ok(()) => out.observations.push(obs),
            Err(reason) if strict => return Err(ObservationError::InvariantViolation { row, reason }),
            Err(reason) => out.violations.push((row, reason)),
        }
    }
    Ok(out)
}

pub fn load_observations(path: &Path, strict: bool) -> Result<LoadedObservations, ObservationError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_observations(f, strict)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes observations with shortest round-trip float formatting.
pub fn write_observations<W: Write>(writer: W, obs: &[DopplerObservation]) -> Result<(), ObservationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OBSERVATION_COLUMNS)?;
    for o in obs {
        let [x, y, z] = match o.reported_position {
            Some(p) => p.to_array().map(Some),
            None => [None; 3],
        };
        w.write_record([
            o.station_id.clone(),
            o.time.to_string(),
            o.sat.norad().map(|n| n.to_string()).unwrap_or_default(),
            fmt_opt(x),
            fmt_opt(y),
            fmt_opt(z),
            o.base_frequency.to_string(),
            o.measured_frequency.to_string(),
            fmt_opt(o.snr_db),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_observations(path: &Path, obs: &[DopplerObservation]) -> Result<(), ObservationError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_observations(f, obs)
}

pub fn read_stations<R: Read>(reader: R) -> Result<Vec<StationMeta>, ObservationError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(rdr.headers()?, &STATION_COLUMNS)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| ObservationError::RowParseError { row, reason: e.to_string() })?;
        let role = match rec[1].trim() {
            "base" => StationRole::Base,
            "rover" => StationRole::Rover,
            other => return Err(ObservationError::RowParseError { row, reason: format!("role {other:?}") }),
        };
        let coords = [
            parse_opt_f64(&rec[2], row, "lat_deg")?,
            parse_opt_f64(&rec[3], row, "lon_deg")?,
            parse_opt_f64(&rec[4], row, "alt_m")?,
        ];
        let known_position = match coords {
            [Some(lat), Some(lon), Some(alt)] => Some(
                GeodeticPosition::new(lat, lon, alt)
                    .map_err(|e| ObservationError::InvariantViolation { row, reason: e.to_string() })?,
            ),
            [None, None, None] => None,
            _ => return Err(ObservationError::RowParseError { row, reason: "position partially present".into() }),
        };
        let clock_disciplined = match rec[5].trim() {
            "true" | "1" => true,
            "false" | "0" | "" => false,
            other => {
                return Err(ObservationError::RowParseError { row, reason: format!("clock_disciplined {other:?}") })
            }
        };
        let meta = StationMeta { station_id: rec[0].trim().to_string(), role, known_position, clock_disciplined };
        meta.validate().map_err(|reason| ObservationError::InvariantViolation { row, reason })?;
        out.push(meta);
    }
    Ok(out)
}

pub fn load_stations(path: &Path) -> Result<Vec<StationMeta>, ObservationError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    read_stations(f)
}

pub fn write_stations<W: Write>(writer: W, stations: &[StationMeta]) -> Result<(), ObservationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(STATION_COLUMNS)?;
    for s in stations {
        let p = s.known_position;
        w.write_record([
            s.station_id.clone(),
            match s.role {
                StationRole::Base => "base".to_string(),
                StationRole::Rover => "rover".to_string(),
            },
            fmt_opt(p.map(|p| p.latitude_deg)),
            fmt_opt(p.map(|p| p.longitude_deg)),
            fmt_opt(p.map(|p| p.altitude_m)),
            s.clock_disciplined.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_stations(path: &Path, stations: &[StationMeta]) -> Result<(), ObservationError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    write_stations(f, stations)
}

/// A run of closely spaced observations from one station and satellite.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub burst_id: u32,
    pub station_id: String,
    pub sat: SatelliteRef,
    pub observations: Vec<DopplerObservation>,
    pub start: f64,
    pub end: f64,
}

impl Burst {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Grouping key: matched satellites by catalog number, unmatched ones by carrier channel.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum BurstKey {
    Norad(u32),
    Channel(u64),
}

fn burst_key(o: &DopplerObservation) -> BurstKey {
    match o.sat {
        SatelliteRef::Norad(n) => BurstKey::Norad(n),
        SatelliteRef::Unmatched => BurstKey::Channel(o.base_frequency.to_bits()),
    }
}

/// Partitions observations per (station, satellite) into bursts separated by
/// gaps of at least `gap_threshold` seconds. Burst ids are dense from 0 in
/// order of (start time, station, satellite).
pub fn group_into_bursts(obs: &[DopplerObservation], gap_threshold: f64) -> Vec<Burst> {
    let mut streams: BTreeMap<(String, BurstKey), Vec<DopplerObservation>> = BTreeMap::new();
    for o in obs {
        streams.entry((o.station_id.clone(), burst_key(o))).or_default().push(o.clone());
    }
    let mut bursts = Vec::new();
    for (_, mut stream) in streams {
        stream.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut current: Vec<DopplerObservation> = Vec::new();
        for o in stream {
            if let Some(last) = current.last() {
                if o.time - last.time >= gap_threshold {
                    bursts.push(std::mem::take(&mut current));
                }
            }
            current.push(o);
        }
        if !current.is_empty() {
            bursts.push(current);
        }
    }
    let mut bursts: Vec<Burst> = bursts
        .into_iter()
        .map(|o| Burst {
            burst_id: 0,
            station_id: o[0].station_id.clone(),
            sat: o[0].sat,
            start: o[0].time,
            end: o[o.len() - 1].time,
            observations: o,
        })
        .collect();
    bursts.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then_with(|| a.station_id.cmp(&b.station_id))
            .then_with(|| burst_key(&a.observations[0]).cmp(&burst_key(&b.observations[0])))
    });
    for (i, b) in bursts.iter_mut().enumerate() {
        b.burst_id = i as u32;
        for o in &mut b.observations {
            o.burst_id = Some(b.burst_id);
        }
    }
    bursts
}

/// Writes burst ids from [`group_into_bursts`] back onto `obs` in place.
pub fn assign_burst_ids(obs: &mut [DopplerObservation], gap_threshold: f64) {
    let mut lookup: BTreeMap<(String, BurstKey, u64), u32> = BTreeMap::new();
    for b in group_into_bursts(obs, gap_threshold) {
        for o in &b.observations {
            lookup.insert((o.station_id.clone(), burst_key(o), o.time.to_bits()), b.burst_id);
        }
    }
    for o in obs.iter_mut() {
        o.burst_id = lookup.get(&(o.station_id.clone(), burst_key(o), o.time.to_bits())).copied();
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("no candidate satellites")]
    EmptyCatalog,
    #[error("nearest candidate {norad_id} is {distance_m:.0} m away (limit {max_distance_m:.0} m)")]
    NoCandidate { norad_id: u32, distance_m: f64, max_distance_m: f64 },
    #[error("ambiguous match: {best_id} at {best_distance_m:.0} m vs {second_id} at {second_distance_m:.0} m")]
    AmbiguousMatch { best_id: u32, best_distance_m: f64, second_id: u32, second_distance_m: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatMatch {
    pub norad_id: u32,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchOptions {
    pub max_distance_m: f64,
    pub ambiguity_ratio: f64,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self { max_distance_m: DEFAULT_MATCH_MAX_DISTANCE_M, ambiguity_ratio: DEFAULT_AMBIGUITY_RATIO }
    }
}

/// Nearest-candidate test with the distance limit and the ratio test.
/// Candidates are (catalog number, predicted position); ties break on the
/// lower catalog number so the result does not depend on input order.
pub fn match_position(
    reported: EcefVector,
    candidates: &[(u32, EcefVector)],
    options: &MatchOptions,
) -> Result<SatMatch, MatchError> {
    let mut ranked: Vec<(f64, u32)> = candidates.iter().map(|&(id, p)| (p.distance(reported), id)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let &(best_d, best_id) = ranked.first().ok_or(MatchError::EmptyCatalog)?;
    if !(best_d <= options.max_distance_m) {
        return Err(MatchError::NoCandidate { norad_id: best_id, distance_m: best_d, max_distance_m: options.max_distance_m });
    }
    if let Some(&(second_d, second_id)) = ranked.get(1) {
        if !(second_d >= options.ambiguity_ratio * best_d) {
            return Err(MatchError::AmbiguousMatch {
                best_id,
                best_distance_m: best_d,
                second_id,
                second_distance_m: second_d,
            });
        }
    }
    Ok(SatMatch { norad_id: best_id, distance_m: best_d })
}

/// Predicted positions of every catalog entry at `t`; entries that fail to propagate are left out.
pub fn candidate_positions(ephemeris: &dyn Ephemeris, t: f64) -> Vec<(u32, EcefVector)> {
    ephemeris
        .norad_ids()
        .into_iter()
        .filter_map(|id| ephemeris.state(id, t).ok().map(|s| (id, s.position)))
        .collect()
}

/// Identifies the satellite whose propagated position at `t` is nearest to `reported`.
pub fn match_satellite(
    reported: EcefVector,
    t: f64,
    tles: &[TleRecord],
    max_distance_m: f64,
    ambiguity_ratio: f64,
) -> Result<SatMatch, MatchError> {
    if tles.is_empty() {
        return Err(MatchError::EmptyCatalog);
    }
    let candidates: Vec<(u32, EcefVector)> = tles
        .iter()
        .filter_map(|r| crate::orbits::propagate_to(r, t).ok().map(|s| (r.norad_id, s.position)))
        .collect();
    match_position(reported, &candidates, &MatchOptions { max_distance_m, ambiguity_ratio })
}

/// Outcome for one observation row during batch matching.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    /// 0-based index into the observation list.
    pub index: usize,
    pub time: f64,
    pub status: MatchStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MatchStatus {
    AlreadyMatched { norad_id: u32 },
    Matched { norad_id: u32, distance_m: f64 },
    Ambiguous { best_id: u32, best_distance_m: f64, second_id: u32, second_distance_m: f64 },
    NoCandidate { nearest_id: Option<u32>, distance_m: Option<f64> },
    NoReportedPosition,
}

/// Fills `sat` on every unmatched observation that passes the matcher.
/// Rows that fail stay unmatched and are listed in the returned records.
pub fn match_observations(
    obs: &mut [DopplerObservation],
    catalog: &TleCatalog,
    options: &MatchOptions,
) -> Vec<MatchRecord> {
    let mut cache: BTreeMap<u64, Vec<(u32, EcefVector)>> = BTreeMap::new();
    obs.iter_mut()
        .enumerate()
        .map(|(index, o)| {
            let status = match (o.sat, o.reported_position) {
                (SatelliteRef::Norad(norad_id), _) => MatchStatus::AlreadyMatched { norad_id },
                (SatelliteRef::Unmatched, None) => MatchStatus::NoReportedPosition,
                (SatelliteRef::Unmatched, Some(p)) => {
                    let cands = cache.entry(o.time.to_bits()).or_insert_with(|| candidate_positions(catalog, o.time));
                    match match_position(p, cands, options) {
                        Ok(m) => {
                            o.sat = SatelliteRef::Norad(m.norad_id);
                            MatchStatus::Matched { norad_id: m.norad_id, distance_m: m.distance_m }
                        }
                        Err(MatchError::AmbiguousMatch { best_id, best_distance_m, second_id, second_distance_m }) => {
                            MatchStatus::Ambiguous { best_id, best_distance_m, second_id, second_distance_m }
                        }
                        Err(MatchError::NoCandidate { norad_id, distance_m, .. }) => {
                            MatchStatus::NoCandidate { nearest_id: Some(norad_id), distance_m: Some(distance_m) }
                        }
                        Err(MatchError::EmptyCatalog) => MatchStatus::NoCandidate { nearest_id: None, distance_m: None },
                    }
                }
            };
            MatchRecord { index, time: o.time, status }
        })
        .collect()
}
