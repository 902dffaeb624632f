//! Two-line element sets and SGP4 propagation to Earth-fixed coordinates.
//!
//! Propagation runs the near-Earth SGP4 branch (WGS-72 gravity, the constants
//! TLEs are fitted with) in TEME, then rotates into a pseudo Earth-fixed
//! frame by Greenwich Mean Sidereal Time. Polar motion and nutation are
//! neglected; their Doppler contribution at L-band is far below 1 Hz.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sgp4::chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use thiserror::Error;

use crate::geodesy::EcefVector;
use crate::time::{self, elapsed_si_seconds, SECONDS_PER_DAY};

/// Earth rotation rate consistent with the IAU-1982 GMST polynomial (rad/s).
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_146_706_979e-5;

/// Default maximum |t − epoch| accepted by the propagator.
pub const DEFAULT_STALENESS_LIMIT_S: f64 = 7.0 * SECONDS_PER_DAY;

/// Orbits with a period at or above this use the deep-space branch, which is unsupported.
pub const DEEP_SPACE_PERIOD_MIN: f64 = 225.0;

const TLE_LINE_LEN: usize = 69;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TleError {
    #[error("line {line}: checksum mismatch (expected {expected}, found {found})")]
    ChecksumMismatch { line: usize, expected: u32, found: char },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
}

impl TleError {
    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        TleError::MalformedLine { line, reason: reason.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrbitError {
    #[error("satellite {norad_id}: period {period_min:.1} min needs the deep-space propagator")]
    DeepSpaceUnsupported { norad_id: u32, period_min: f64 },
    #[error("satellite {norad_id}: |t - epoch| = {age_days:.3} d exceeds the {limit_days:.3} d staleness limit")]
    StaleEpoch { norad_id: u32, age_days: f64, limit_days: f64 },
    #[error("satellite {norad_id}: propagation diverged ({reason})")]
    PropagationDiverged { norad_id: u32, reason: String },
    #[error("satellite {norad_id}: invalid elements ({reason})")]
    InvalidElements { norad_id: u32, reason: String },
    #[error("no ephemeris for satellite {0}")]
    MissingEphemeris(u32),
}

/// One parsed element set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TleLines", into = "TleLines")]
pub struct TleRecord {
    pub norad_id: u32,
    pub name: Option<String>,
    pub classification: char,
    pub international_designator: String,
    /// Four-digit epoch year.
    pub epoch_year: i32,
    /// Fractional day of year, 1.0 = January 1st 00:00 UTC.
    pub epoch_day: f64,
    /// Epoch as UTC Unix seconds.
    pub epoch: f64,
    /// First derivative of mean motion over two, rev/day².
    pub mean_motion_dot: f64,
    /// Second derivative of mean motion over six, rev/day³.
    pub mean_motion_ddot: f64,
    /// Drag term, inverse Earth radii.
    pub bstar: f64,
    pub ephemeris_type: u8,
    pub element_set_number: u32,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub eccentricity: f64,
    pub arg_perigee_deg: f64,
    pub mean_anomaly_deg: f64,
    /// Revolutions per day.
    pub mean_motion: f64,
    pub revolution_number: u32,
}

/// Text form of a [`TleRecord`], used for serde.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TleLines {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub line1: String,
    pub line2: String,
}

impl TryFrom<TleLines> for TleRecord {
    type Error = TleError;
    fn try_from(l: TleLines) -> Result<Self, TleError> {
        parse_element_set(l.name, &l.line1, &l.line2, 1)
    }
}

impl From<TleRecord> for TleLines {
    fn from(r: TleRecord) -> Self {
        let (line1, line2) = r.to_lines();
        TleLines { name: r.name, line1, line2 }
    }
}

/// Result of a lenient parse: the accepted records plus the skipped sets.
#[derive(Debug, Clone, Default)]
pub struct TleParse {
    pub records: Vec<TleRecord>,
    pub skipped: Vec<TleError>,
}

/// Modulo-10 checksum over the first 68 columns: digits count their value, '-' counts 1.
pub fn tle_checksum(line: &str) -> u32 {
    line.bytes()
        .take(TLE_LINE_LEN - 1)
        .map(|b| match b {
            b'0'..=b'9' => u32::from(b - b'0'),
            b'-' => 1,
            _ => 0,
        })
        .sum::<u32>()
        % 10
}

/// Parses 2-line or name-prefixed 3-line element sets.
///
/// With `strict` the first bad set aborts the parse; otherwise bad sets are
/// skipped and reported in [`TleParse::skipped`].
pub fn parse_tle(text: &str, strict: bool) -> Result<TleParse, TleError> {
    let mut out = TleParse::default();
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut pending_name: Option<String> = None;
    let mut i = 0;
    while i < lines.len() {
        let (n, line) = lines[i];
        if line.starts_with("1 ") {
            let outcome = match lines.get(i + 1) {
                Some(&(n2, l2)) if l2.starts_with("2 ") => {
                    i += 2;
                    parse_element_set(pending_name.take(), line, l2, n).map_err(|e| match e {
                        // errors on the second line carry its own number
                        TleError::ChecksumMismatch { line, expected, found } if line == n + 1 => {
                            TleError::ChecksumMismatch { line: n2, expected, found }
                        }
                        TleError::MalformedLine { line, reason } if line == n + 1 => {
                            TleError::MalformedLine { line: n2, reason }
                        }
                        other => other,
                    })
                }
                _ => {
                    i += 1;
                    pending_name = None;
                    Err(TleError::malformed(n, "line 1 without a following line 2"))
                }
            };
            match outcome {
                Ok(rec) => out.records.push(rec),
                Err(e) if strict => return Err(e),
                Err(e) => out.skipped.push(e),
            }
        } else if line.starts_with("2 ") {
            i += 1;
            pending_name = None;
            let e = TleError::malformed(n, "line 2 without a preceding line 1");
            if strict {
                return Err(e);
            }
            out.skipped.push(e);
        } else {
            let name = line.strip_prefix("0 ").unwrap_or(line).trim();
            pending_name = Some(name.to_string());
            i += 1;
        }
    }
    Ok(out)
}

/// Parses one element set. `first_line_no` is the 1-based number of `line1`
/// in the source text; `line2` is reported as `first_line_no + 1`.
pub fn parse_element_set(
    name: Option<String>,
    line1: &str,
    line2: &str,
    first_line_no: usize,
) -> Result<TleRecord, TleError> {
    let l1 = first_line_no;
    let l2 = first_line_no + 1;
    check_line(line1, '1', l1)?;
    check_line(line2, '2', l2)?;

    let norad_id: u32 = field(line1, 2..7, l1, "catalog number")?;
    let norad_id2: u32 = field(line2, 2..7, l2, "catalog number")?;
    if norad_id != norad_id2 {
        return Err(TleError::malformed(l2, format!("catalog number {norad_id2} differs from line 1 ({norad_id})")));
    }
    let classification = line1.as_bytes()[7] as char;
    let international_designator = line1[9..17].trim_end().to_string();
    let yy: i32 = field(line1, 18..20, l1, "epoch year")?;
    let epoch_year = if yy < 57 { 2000 + yy } else { 1900 + yy };
    let epoch_day: f64 = field(line1, 20..32, l1, "epoch day")?;
    let days_in_year = if time::is_leap_year(epoch_year) { 366.0 } else { 365.0 };
    if !(1.0..days_in_year + 1.0).contains(&epoch_day) {
        return Err(TleError::malformed(l1, format!("epoch day {epoch_day} out of range")));
    }
    let mean_motion_dot = parse_decimal_point(&line1[33..43]).ok_or_else(|| TleError::malformed(l1, "bad mean motion derivative"))?;
    let mean_motion_ddot = parse_implied_exponent(&line1[44..52]).ok_or_else(|| TleError::malformed(l1, "bad second derivative"))?;
    let bstar = parse_implied_exponent(&line1[53..61]).ok_or_else(|| TleError::malformed(l1, "bad drag term"))?;
    let ephemeris_type = match line1.as_bytes()[62] {
        b' ' => 0,
        b @ b'0'..=b'9' => b - b'0',
        _ => return Err(TleError::malformed(l1, "bad ephemeris type")),
    };
    let element_set_number: u32 = field(line1, 64..68, l1, "element set number")?;

    let inclination_deg: f64 = field(line2, 8..16, l2, "inclination")?;
    let raan_deg: f64 = field(line2, 17..25, l2, "right ascension")?;
    let ecc_digits = &line2[26..33];
    if !ecc_digits.bytes().all(|b| b.is_ascii_digit() || b == b' ') {
        return Err(TleError::malformed(l2, "bad eccentricity"));
    }
    let eccentricity: f64 = format!("0.{}", ecc_digits.trim())
        .parse()
        .map_err(|_| TleError::malformed(l2, "bad eccentricity"))?;
    let arg_perigee_deg: f64 = field(line2, 34..42, l2, "argument of perigee")?;
    let mean_anomaly_deg: f64 = field(line2, 43..51, l2, "mean anomaly")?;
    let mean_motion: f64 = field(line2, 52..63, l2, "mean motion")?;
    let revolution_number: u32 = if line2[63..68].trim().is_empty() {
        0
    } else {
        field(line2, 63..68, l2, "revolution number")?
    };

    if !(0.0..=180.0).contains(&inclination_deg) {
        return Err(TleError::malformed(l2, format!("inclination {inclination_deg} outside [0, 180]")));
    }
    if !(0.0..1.0).contains(&eccentricity) {
        return Err(TleError::malformed(l2, format!("eccentricity {eccentricity} outside [0, 1)")));
    }
    if !(mean_motion > 0.0) {
        return Err(TleError::malformed(l2, "mean motion must be positive"));
    }
    for (label, v) in [("right ascension", raan_deg), ("argument of perigee", arg_perigee_deg), ("mean anomaly", mean_anomaly_deg)] {
        if !(0.0..360.0).contains(&v) {
            return Err(TleError::malformed(l2, format!("{label} {v} outside [0, 360)")));
        }
    }

    Ok(TleRecord {
        norad_id,
        name: name.filter(|n| !n.is_empty()),
        classification,
        international_designator,
        epoch_year,
        epoch_day,
        epoch: time::unix_from_year_day(epoch_year, epoch_day),
        mean_motion_dot,
        mean_motion_ddot,
        bstar,
        ephemeris_type,
        element_set_number,
        inclination_deg,
        raan_deg,
        eccentricity,
        arg_perigee_deg,
        mean_anomaly_deg,
        mean_motion,
        revolution_number,
    })
}

fn check_line(line: &str, number: char, line_no: usize) -> Result<(), TleError> {
    if !line.is_ascii() {
        return Err(TleError::malformed(line_no, "non-ASCII characters"));
    }
    if line.len() != TLE_LINE_LEN {
        return Err(TleError::malformed(line_no, format!("length {} (expected {TLE_LINE_LEN})", line.len())));
    }
    if !line.starts_with(number) {
        return Err(TleError::malformed(line_no, format!("expected line number {number}")));
    }
    let found = line.as_bytes()[68] as char;
    let expected = tle_checksum(line);
    if found.to_digit(10) != Some(expected) {
        return Err(TleError::ChecksumMismatch { line: line_no, expected, found });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(line: &str, cols: std::ops::Range<usize>, line_no: usize, what: &str) -> Result<T, TleError> {
    line[cols]
        .trim()
        .parse()
        .map_err(|_| TleError::malformed(line_no, format!("bad {what}")))
}

/// " .00000023" / "-.00002218" style fields.
fn parse_decimal_point(s: &str) -> Option<f64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let v: f64 = if body.starts_with('.') { format!("0{body}").parse().ok()? } else { body.parse().ok()? };
    Some(if neg { -v } else { v })
}

/// "-11606-4" style fields: sign, five mantissa digits with an implied
/// leading decimal point, exponent sign and digit.
fn parse_implied_exponent(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return Some(0.0);
    }
    let (sign, body) = match s.as_bytes()[0] {
        b'-' => ("-", &s[1..]),
        b'+' => ("", &s[1..]),
        _ => ("", s),
    };
    let split = body.rfind(['-', '+'])?;
    let (mantissa, exponent) = body.split_at(split);
    if mantissa.is_empty() || !mantissa.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let exponent: i32 = exponent.parse().ok()?;
    format!("{sign}0.{mantissa}e{exponent}").parse().ok()
}

fn format_implied_exponent(v: f64) -> String {
    if v == 0.0 {
        return " 00000-0".to_string();
    }
    let sign = if v < 0.0 { '-' } else { ' ' };
    let a = v.abs();
    let mut exp = a.log10().floor() as i32 + 1;
    let mut mant = (a / 10f64.powi(exp) * 1e5).round() as i64;
    if mant >= 100_000 {
        mant /= 10;
        exp += 1;
    }
    let exp_sign = if exp < 0 { '-' } else { '+' };
    format!("{sign}{mant:05}{exp_sign}{}", exp.abs())
}

fn format_decimal_point(v: f64) -> String {
    let sign = if v < 0.0 { '-' } else { ' ' };
    let body = format!("{:.8}", v.abs());
    format!("{sign}{}", body.trim_start_matches('0'))
}

impl TleRecord {
    /// Renders the record as two 69-column lines with fresh checksums.
    pub fn to_lines(&self) -> (String, String) {
        let mut l1 = String::with_capacity(TLE_LINE_LEN);
        write!(
            l1,
            "1 {:05}{} {:<8} {:02}{:012.8} {} {} {} {} {:>4}",
            self.norad_id,
            self.classification,
            self.international_designator,
            self.epoch_year.rem_euclid(100),
            self.epoch_day,
            format_decimal_point(self.mean_motion_dot),
            format_implied_exponent(self.mean_motion_ddot),
            format_implied_exponent(self.bstar),
            self.ephemeris_type,
            self.element_set_number % 10_000,
        )
        .expect("write to String");
        l1.push(char::from_digit(tle_checksum(&l1), 10).expect("digit"));

        let mut l2 = String::with_capacity(TLE_LINE_LEN);
        write!(
            l2,
            "2 {:05} {:>8.4} {:>8.4} {:07} {:>8.4} {:>8.4} {:>11.8}{:>5}",
            self.norad_id,
            self.inclination_deg,
            self.raan_deg,
            (self.eccentricity * 1e7).round() as u64,
            self.arg_perigee_deg,
            self.mean_anomaly_deg,
            self.mean_motion,
            self.revolution_number % 100_000,
        )
        .expect("write to String");
        l2.push(char::from_digit(tle_checksum(&l2), 10).expect("digit"));
        (l1, l2)
    }

    /// Orbital period in minutes.
    pub fn period_minutes(&self) -> f64 {
        1440.0 / self.mean_motion
    }

    fn sgp4_elements(&self) -> Result<sgp4::Elements, OrbitError> {
        let jan1 = NaiveDate::from_yo_opt(self.epoch_year, 1).ok_or_else(|| OrbitError::InvalidElements {
            norad_id: self.norad_id,
            reason: format!("epoch year {}", self.epoch_year),
        })?;
        let nanos = ((self.epoch_day - 1.0) * SECONDS_PER_DAY * 1e9).round() as i64;
        let datetime: NaiveDateTime = jan1.and_hms_opt(0, 0, 0).expect("midnight") + TimeDelta::nanoseconds(nanos);
        Ok(sgp4::Elements {
            object_name: self.name.clone(),
            international_designator: Some(self.international_designator.clone()),
            norad_id: u64::from(self.norad_id),
            classification: sgp4::Classification::Unclassified,
            datetime,
            mean_motion_dot: self.mean_motion_dot,
            mean_motion_ddot: self.mean_motion_ddot,
            drag_term: self.bstar,
            element_set_number: u64::from(self.element_set_number),
            inclination: self.inclination_deg,
            right_ascension: self.raan_deg,
            eccentricity: self.eccentricity,
            argument_of_perigee: self.arg_perigee_deg,
            mean_anomaly: self.mean_anomaly_deg,
            mean_motion: self.mean_motion,
            revolution_number: u64::from(self.revolution_number),
            ephemeris_type: self.ephemeris_type,
        })
    }
}

/// Satellite state in the Earth-fixed frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatStateEcef {
    /// UTC Unix seconds.
    pub time: f64,
    /// Meters.
    pub position: EcefVector,
    /// Meters per second, Earth-fixed (includes the frame-rotation term).
    pub velocity: EcefVector,
}

impl SatStateEcef {
    /// Physical orbit-shell check: 6.4e6 ≤ |r| ≤ 5e7 m, 1e3 ≤ |v| ≤ 1.1e4 m/s.
    pub fn is_physical(&self) -> bool {
        let r = self.position.norm();
        let v = self.velocity.norm();
        (6.4e6..=5.0e7).contains(&r) && (1.0e3..=1.1e4).contains(&v)
    }
}

/// TEME state in kilometers and km/s, straight from SGP4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemeState {
    pub position_km: [f64; 3],
    pub velocity_km_s: [f64; 3],
}

/// SGP4 propagator initialised from one element set.
#[derive(Debug, Clone)]
pub struct Propagator {
    norad_id: u32,
    epoch: f64,
    staleness_limit_s: f64,
    constants: sgp4::Constants,
}

impl Propagator {
    pub fn new(tle: &TleRecord) -> Result<Self, OrbitError> {
        let period_min = tle.period_minutes();
        if period_min >= DEEP_SPACE_PERIOD_MIN {
            return Err(OrbitError::DeepSpaceUnsupported { norad_id: tle.norad_id, period_min });
        }
        let elements = tle.sgp4_elements()?;
        let constants = sgp4::Constants::from_elements_afspc_compatibility_mode(&elements).map_err(|e| {
            OrbitError::InvalidElements { norad_id: tle.norad_id, reason: e.to_string() }
        })?;
        Ok(Self { norad_id: tle.norad_id, epoch: tle.epoch, staleness_limit_s: DEFAULT_STALENESS_LIMIT_S, constants })
    }

    pub fn with_staleness_limit(mut self, limit_s: f64) -> Self {
        self.staleness_limit_s = limit_s;
        self
    }

    pub fn norad_id(&self) -> u32 {
        self.norad_id
    }

    pub fn epoch(&self) -> f64 {
        self.epoch
    }

    /// Raw SGP4 output `minutes` after epoch. No staleness check.
    pub fn propagate_teme(&self, minutes: f64) -> Result<TemeState, OrbitError> {
        let p = self
            .constants
            .propagate_afspc_compatibility_mode(sgp4::MinutesSinceEpoch(minutes))
            .map_err(|e| OrbitError::PropagationDiverged { norad_id: self.norad_id, reason: e.to_string() })?;
        Ok(TemeState { position_km: p.position, velocity_km_s: p.velocity })
    }

    /// Earth-fixed state at UTC instant `t`.
    pub fn propagate_to(&self, t: f64) -> Result<SatStateEcef, OrbitError> {
        let dt = elapsed_si_seconds(self.epoch, t);
        if !(dt.abs() <= self.staleness_limit_s) {
            return Err(OrbitError::StaleEpoch {
                norad_id: self.norad_id,
                age_days: dt.abs() / SECONDS_PER_DAY,
                limit_days: self.staleness_limit_s / SECONDS_PER_DAY,
            });
        }
        let teme = self.propagate_teme(dt / 60.0)?;
        let state = teme_to_ecef(&teme, t);
        if !state.is_physical() {
            return Err(OrbitError::PropagationDiverged {
                norad_id: self.norad_id,
                reason: format!("non-physical state |r| = {:.0} m, |v| = {:.0} m/s", state.position.norm(), state.velocity.norm()),
            });
        }
        Ok(state)
    }
}

/// Propagates `tle` to UTC instant `t` with the default staleness limit.
pub fn propagate_to(tle: &TleRecord, t: f64) -> Result<SatStateEcef, OrbitError> {
    Propagator::new(tle)?.propagate_to(t)
}

/// Samples at `t0`, `t0 + step`, … up to and including `t1`.
pub fn propagate_series(tle: &TleRecord, t0: f64, t1: f64, step: f64) -> Result<Vec<SatStateEcef>, OrbitError> {
    let prop = Propagator::new(tle)?;
    sample_times(t0, t1, step).into_iter().map(|t| prop.propagate_to(t)).collect()
}

/// `t0 + k·step` for k = 0, 1, … while the sample does not pass `t1`.
pub fn sample_times(t0: f64, t1: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(t1 >= t0) {
        return Vec::new();
    }
    let n = ((t1 - t0) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 * step).collect()
}

/// IAU-1982 Greenwich Mean Sidereal Time in radians, wrapped to [0, 2π).
/// UT1 is taken equal to UTC.
pub fn gmst(t: f64) -> f64 {
    let days = (t - time::J2000_UNIX) / SECONDS_PER_DAY;
    let centuries = days / 36_525.0;
    // 67310.54841 s + (876600 h + 8640184.812866 s) T + 0.093104 T² − 6.2e-6 T³,
    // expressed in degrees with the linear term per day.
    // 360.98564736629·d evaluated as 360·frac(d) + 0.98564736629·d
    let frac = days - days.floor();
    let deg = 280.460_618_375_04
        + 360.0 * frac
        + 0.985_647_366_29 * days
        + (0.093_104 * centuries * centuries - 6.2e-6 * centuries * centuries * centuries) / 240.0;
    let rad = deg.rem_euclid(360.0).to_radians();
    if rad >= TAU {
        0.0
    } else {
        rad
    }
}

/// Rotates a TEME state into the Earth-fixed frame at UTC instant `t`.
pub fn teme_to_ecef(teme: &TemeState, t: f64) -> SatStateEcef {
    let theta = gmst(t);
    let (s, c) = theta.sin_cos();
    let [x, y, z] = teme.position_km.map(|v| v * 1e3);
    let [vx, vy, vz] = teme.velocity_km_s.map(|v| v * 1e3);
    let px = c * x + s * y;
    let py = -s * x + c * y;
    SatStateEcef {
        time: t,
        position: EcefVector::new(px, py, z),
        velocity: EcefVector::new(
            c * vx + s * vy + EARTH_ROTATION_RAD_S * py,
            -s * vx + c * vy - EARTH_ROTATION_RAD_S * px,
            vz,
        ),
    }
}
