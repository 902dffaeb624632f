//! Base-station error series and their application to rover observations.
//!
//! The base station sits at a known position, so whatever its measured
//! Doppler disagrees with the model is orbit and propagation error shared with
//! a nearby rover: e(t) = f_meas,B − f_theo,B − f_clock,B. Rover measurements
//! are corrected as f_corr,U = f_meas,U − e(t).

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doppler_model::{self, ModelError, StateVector};
use crate::ephemeris::Ephemeris;
use crate::observations::{DopplerObservation, SatelliteRef, StationMeta, StationRole};

pub const DEFAULT_MAX_EXTRAPOLATION_S: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DifferentialError {
    #[error("station {0} has no known position")]
    UnknownBasePosition(String),
    #[error("base observation {index} is not matched to a satellite")]
    UnmatchedObservation { index: usize },
    #[error("no ephemeris for satellite {0}")]
    MissingEphemeris(u32),
    #[error(transparent)]
    Model(ModelError),
    #[error("satellite {norad_id}: t = {time} is outside the error series coverage")]
    OutOfCoverage { norad_id: u32, time: f64 },
    #[error("no rover observation shares a satellite with the base inside coverage")]
    NoCommonSatellite,
    #[error("error series for satellite {0} is empty")]
    EmptySeries(u32),
}

impl From<ModelError> for DifferentialError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::MissingEphemeris(n) => DifferentialError::MissingEphemeris(n),
            ModelError::UnmatchedObservation { index } => DifferentialError::UnmatchedObservation { index },
            other => DifferentialError::Model(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub time: f64,
    pub error_hz: f64,
}

/// Base-station residual e(t) for one satellite, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub norad_id: u32,
    pub source_station: String,
    pub samples: Vec<ErrorSample>,
}

impl ErrorSeries {
    /// Sorts samples and averages any that share a timestamp.
    pub fn new(norad_id: u32, source_station: impl Into<String>, mut samples: Vec<ErrorSample>) -> Result<Self, DifferentialError> {
        if samples.is_empty() {
            return Err(DifferentialError::EmptySeries(norad_id));
        }
        samples.sort_by(|a, b| a.time.total_cmp(&b.time));
        let mut merged: Vec<(ErrorSample, usize)> = Vec::with_capacity(samples.len());
        for s in samples {
            match merged.last_mut() {
                Some((last, n)) if last.time == s.time => {
                    last.error_hz += s.error_hz;
                    *n += 1;
                }
                _ => merged.push((s, 1)),
            }
        }
        let samples = merged
            .into_iter()
            .map(|(s, n)| ErrorSample { time: s.time, error_hz: s.error_hz / n as f64 })
            .collect();
        Ok(Self { norad_id, source_station: source_station.into(), samples })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.samples[0].time, self.samples[self.samples.len() - 1].time)
    }
}

/// Base receiver clock f_clock,B(t) = offset + drift·(t − reference_epoch).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseClockModel {
    pub offset_hz: f64,
    pub drift_hz_s: f64,
    pub reference_epoch: f64,
}

impl BaseClockModel {
    pub fn at(&self, t: f64) -> f64 {
        self.offset_hz + self.drift_hz_s * (t - self.reference_epoch)
    }
}

/// e(t) per satellite from base observations at the station's known position.
pub fn compute_base_error_series(
    base_obs: &[DopplerObservation],
    base_station: &StationMeta,
    ephemeris: &dyn Ephemeris,
    base_clock: &BaseClockModel,
) -> Result<BTreeMap<u32, ErrorSeries>, DifferentialError> {
    let position = match (base_station.role, base_station.known_position) {
        (StationRole::Base, Some(p)) => p,
        _ => return Err(DifferentialError::UnknownBasePosition(base_station.station_id.clone())),
    };
    let zero_clock = StateVector::from_position(&position, 0.0);
    let states = doppler_model::resolve_states(base_obs, ephemeris)?;
    let residuals = doppler_model::residuals_with_states(&zero_clock, base_obs, &states)?;

    let mut grouped: BTreeMap<u32, Vec<ErrorSample>> = BTreeMap::new();
    for (i, (o, r)) in base_obs.iter().zip(residuals).enumerate() {
        let n = doppler_model::observation_norad(o, i)?;
        grouped.entry(n).or_default().push(ErrorSample { time: o.time, error_hz: r - base_clock.at(o.time) });
    }
    grouped
        .into_iter()
        .map(|(n, samples)| Ok((n, ErrorSeries::new(n, base_station.station_id.clone(), samples)?)))
        .collect()
}

/// Constant base clock offset taken as the mean of e(t) over all satellites.
///
/// Only meaningful when the orbit error averages out across satellites; the
/// default pipeline keeps the base clock at zero.
pub fn estimate_base_clock(series: &BTreeMap<u32, ErrorSeries>) -> BaseClockModel {
    let (sum, n) = series
        .values()
        .flat_map(|s| &s.samples)
        .fold((0.0, 0usize), |(sum, n), s| (sum + s.error_hz, n + 1));
    BaseClockModel { offset_hz: if n > 0 { sum / n as f64 } else { 0.0 }, ..BaseClockModel::default() }
}

/// Piecewise-linear e(t), extrapolated from the end segment up to `max_extrapolation` seconds.
pub fn interpolate_error(series: &ErrorSeries, t: f64, max_extrapolation: f64) -> Result<f64, DifferentialError> {
    let s = &series.samples;
    let out = || DifferentialError::OutOfCoverage { norad_id: series.norad_id, time: t };
    let (first, last) = series.span();
    if !(t >= first - max_extrapolation && t <= last + max_extrapolation) {
        return Err(out());
    }
    if s.len() == 1 {
        return Ok(s[0].error_hz);
    }
    // index of the segment [k, k+1] used for t
    let k = match s.binary_search_by(|p| p.time.total_cmp(&t)) {
        Ok(i) => return Ok(s[i].error_hz),
        Err(0) => 0,
        Err(i) if i >= s.len() => s.len() - 2,
        Err(i) => i - 1,
    };
    let (a, b) = (s[k], s[k + 1]);
    Ok(a.error_hz + (b.error_hz - a.error_hz) * (t - a.time) / (b.time - a.time))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CorrectionStatus {
    Applied { correction_hz: f64 },
    NoCommonSatellite,
    OutOfCoverage,
    Unmatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionEntry {
    /// 0-based index into the rover input.
    pub index: usize,
    pub norad_id: Option<u32>,
    pub time: f64,
    #[serde(flatten)]
    pub status: CorrectionStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub entries: Vec<CorrectionEntry>,
}

impl CorrectionReport {
    pub fn applied(&self) -> usize {
        self.entries.iter().filter(|e| matches!(e.status, CorrectionStatus::Applied { .. })).count()
    }

    pub fn uncorrectable(&self) -> usize {
        self.entries.len() - self.applied()
    }
}

/// Subtracts the interpolated e(t) from each rover observation that has a
/// same-satellite series covering its timestamp. Uncorrectable observations
/// are left out of the returned list and recorded in the report.
pub fn apply_corrections(
    rover_obs: &[DopplerObservation],
    series: &BTreeMap<u32, ErrorSeries>,
    max_extrapolation: f64,
) -> Result<(Vec<DopplerObservation>, CorrectionReport), DifferentialError> {
    let mut corrected = Vec::with_capacity(rover_obs.len());
    let mut report = CorrectionReport::default();
    for (index, o) in rover_obs.iter().enumerate() {
        let status = match o.sat {
            SatelliteRef::Unmatched => CorrectionStatus::Unmatched,
            SatelliteRef::Norad(n) => match series.get(&n) {
                None => CorrectionStatus::NoCommonSatellite,
                Some(s) => match interpolate_error(s, o.time, max_extrapolation) {
                    Ok(e) => {
                        let mut c = o.clone();
                        c.measured_frequency -= e;
                        corrected.push(c);
                        CorrectionStatus::Applied { correction_hz: e }
                    }
                    Err(_) => CorrectionStatus::OutOfCoverage,
                },
            },
        };
        report.entries.push(CorrectionEntry { index, norad_id: o.sat.norad(), time: o.time, status });
    }
    if corrected.is_empty() {
        return Err(DifferentialError::NoCommonSatellite);
    }
    Ok((corrected, report))
}

pub const ERROR_SERIES_COLUMNS: [&str; 3] = ["norad_id", "time_unix_s", "error_hz"];

pub fn write_error_series<W: Write>(writer: W, series: &BTreeMap<u32, ErrorSeries>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ERROR_SERIES_COLUMNS)?;
    for s in series.values() {
        for p in &s.samples {
            w.write_record([s.norad_id.to_string(), p.time.to_string(), p.error_hz.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(points: &[(f64, f64)]) -> ErrorSeries {
        ErrorSeries::new(
            7,
            "base",
            points.iter().map(|&(time, error_hz)| ErrorSample { time, error_hz }).collect(),
        )
        .unwrap()
    }

    fn rover(t: f64, norad: u32, doppler: f64) -> DopplerObservation {
        DopplerObservation {
            station_id: "rover".into(),
            time: t,
            sat: SatelliteRef::Norad(norad),
            reported_position: None,
            base_frequency: 1.626e9,
            measured_frequency: 1.626e9 + doppler,
            burst_id: None,
            snr_db: None,
        }
    }

    #[test]
    fn midpoint_interpolation() {
        let s = series(&[(0.0, 10.0), (1.0, 20.0)]);
        assert_eq!(interpolate_error(&s, 0.5, 10.0).unwrap(), 15.0);
        assert_eq!(interpolate_error(&s, 1.0, 0.0).unwrap(), 20.0);
    }

    #[test]
    fn bounded_extrapolation() {
        let s = series(&[(0.0, 0.0), (9.0, 9.0), (10.0, 12.0)]);
        assert!((interpolate_error(&s, 10.5, 1.0).unwrap() - 13.5).abs() < 1e-12);
        assert!((interpolate_error(&s, -0.5, 1.0).unwrap() + 0.5).abs() < 1e-12);
        assert!(matches!(interpolate_error(&s, 12.0, 1.0), Err(DifferentialError::OutOfCoverage { norad_id: 7, .. })));
    }

    #[test]
    fn single_sample_series() {
        let s = series(&[(5.0, 3.0)]);
        assert_eq!(interpolate_error(&s, 7.0, 2.0).unwrap(), 3.0);
        assert!(interpolate_error(&s, 7.5, 2.0).is_err());
    }

    #[test]
    fn duplicates_averaged_and_sorted() {
        let s = series(&[(2.0, 4.0), (1.0, 1.0), (2.0, 6.0)]);
        assert_eq!(s.samples, vec![ErrorSample { time: 1.0, error_hz: 1.0 }, ErrorSample { time: 2.0, error_hz: 5.0 }]);
        assert!(ErrorSeries::new(1, "b", vec![]).is_err());
    }

    #[test]
    fn correction_subtracts_error() {
        let map = BTreeMap::from([(7, series(&[(0.0, 50.0), (10.0, 50.0)]))]);
        let (out, report) = apply_corrections(&[rover(5.0, 7, 1000.0)], &map, 10.0).unwrap();
        assert!((out[0].doppler() - 950.0).abs() < 1e-6);
        assert_eq!(report.entries[0].status, CorrectionStatus::Applied { correction_hz: 50.0 });
    }

    #[test]
    fn zero_series_is_identity_and_uncorrectable_dropped() {
        let map = BTreeMap::from([(7, series(&[(0.0, 0.0), (10.0, 0.0)]))]);
        let input = vec![rover(1.0, 7, 123.0), rover(2.0, 8, 5.0), rover(100.0, 7, 1.0)];
        let (out, report) = apply_corrections(&input, &map, 10.0).unwrap();
        assert_eq!(out, vec![input[0].clone()]);
        assert_eq!(report.applied(), 1);
        assert_eq!(report.entries[1].status, CorrectionStatus::NoCommonSatellite);
        assert_eq!(report.entries[2].status, CorrectionStatus::OutOfCoverage);
        assert_eq!(apply_corrections(&input[1..2], &map, 10.0), Err(DifferentialError::NoCommonSatellite));
    }

    #[test]
    fn clock_estimate_is_mean() {
        let a = series(&[(0.0, 10.0), (1.0, 20.0)]);
        let mut b = series(&[(0.0, 30.0)]);
        b.norad_id = 8;
        let est = estimate_base_clock(&BTreeMap::from([(7, a), (8, b)]));
        assert_eq!(est.offset_hz, 20.0);
    }
}
