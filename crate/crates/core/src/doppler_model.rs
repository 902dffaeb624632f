//! Forward Doppler model for a static receiver with a linear clock.
//!
//! f_D = s·(f_B/c)·ρ̇ + f_O + ḟ_O·(t − t_ref), with s = −1 so that an
//! approaching satellite (ρ̇ < 0) gives a positive shift.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ephemeris::Ephemeris;
use crate::geodesy::{self, EcefVector, GeodesyError, GeodeticPosition};
use crate::observations::{DopplerObservation, SatelliteRef};
use crate::orbits::{OrbitError, SatStateEcef};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Sign applied to the geometric term.
pub const DOPPLER_SIGN: f64 = -1.0;

/// Default Iridium-class L-band carrier, Hz.
pub const DEFAULT_BASE_FREQUENCY_HZ: f64 = 1.626e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no ephemeris for satellite {0}")]
    MissingEphemeris(u32),
    #[error("observation {index} is not matched to a satellite")]
    UnmatchedObservation { index: usize },
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Geometry(#[from] GeodesyError),
    #[error("empty residual list")]
    EmptyInput,
}

/// The five unknowns plus the epoch of the drift term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
    /// f_O, Hz.
    pub clock_offset_hz: f64,
    /// ḟ_O, Hz/s.
    pub clock_drift_hz_s: f64,
    /// t_ref, UTC Unix seconds.
    pub reference_epoch: f64,
}

impl StateVector {
    pub fn from_position(p: &GeodeticPosition, reference_epoch: f64) -> Self {
        Self {
            latitude_deg: p.latitude_deg,
            longitude_deg: p.longitude_deg,
            altitude_m: p.altitude_m,
            clock_offset_hz: 0.0,
            clock_drift_hz_s: 0.0,
            reference_epoch,
        }
    }

    pub fn position(&self) -> GeodeticPosition {
        GeodeticPosition { latitude_deg: self.latitude_deg, longitude_deg: self.longitude_deg, altitude_m: self.altitude_m }
    }

    /// Clock contribution f_O + ḟ_O·(t − t_ref).
    pub fn clock_at(&self, t: f64) -> f64 {
        self.clock_offset_hz + self.clock_drift_hz_s * (t - self.reference_epoch)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.position().validate().map_err(|e| e.to_string())?;
        if !(self.clock_offset_hz.abs() < 1e6) {
            return Err(format!("clock offset {} Hz out of range", self.clock_offset_hz));
        }
        if !(self.clock_drift_hz_s.abs() < 1e3) {
            return Err(format!("clock drift {} Hz/s out of range", self.clock_drift_hz_s));
        }
        Ok(())
    }
}

/// Geometric term s·(f_B/c)·ρ̇ for a static receiver at `rx`.
pub fn geometric_doppler(sat: &SatStateEcef, rx: EcefVector, f_b: f64) -> Result<f64, GeodesyError> {
    let rho_dot = geodesy::range_rate(sat, rx, EcefVector::ZERO)?;
    Ok(DOPPLER_SIGN * f_b / SPEED_OF_LIGHT * rho_dot)
}

/// Predicted Doppler shift at `t` for the receiver described by `state`.
pub fn predict_doppler(sat: &SatStateEcef, state: &StateVector, f_b: f64, t: f64) -> Result<f64, ModelError> {
    let rx = state.position().to_ecef();
    Ok(geometric_doppler(sat, rx, f_b)? + state.clock_at(t))
}

/// Catalog number of an observation, or an error naming its index.
pub fn observation_norad(o: &DopplerObservation, index: usize) -> Result<u32, ModelError> {
    match o.sat {
        SatelliteRef::Norad(n) => Ok(n),
        SatelliteRef::Unmatched => Err(ModelError::UnmatchedObservation { index }),
    }
}

/// Satellite state at every observation's timestamp.
pub fn resolve_states(obs: &[DopplerObservation], ephemeris: &dyn Ephemeris) -> Result<Vec<SatStateEcef>, ModelError> {
    obs.iter()
        .enumerate()
        .map(|(i, o)| {
            let n = observation_norad(o, i)?;
            ephemeris.state(n, o.time).map_err(|e| match e {
                OrbitError::MissingEphemeris(n) => ModelError::MissingEphemeris(n),
                other => ModelError::Orbit(other),
            })
        })
        .collect()
}

/// Residuals against pre-resolved satellite states (`states[i]` belongs to `obs[i]`).
pub fn residuals_with_states(
    state: &StateVector,
    obs: &[DopplerObservation],
    states: &[SatStateEcef],
) -> Result<Vec<f64>, ModelError> {
    let rx = state.position().to_ecef();
    obs.iter()
        .zip(states)
        .map(|(o, s)| Ok(o.doppler() - geometric_doppler(s, rx, o.base_frequency)? - state.clock_at(o.time)))
        .collect()
}

/// (measured − f_B) − predicted, one entry per observation, in input order.
pub fn residual_vector(
    state: &StateVector,
    obs: &[DopplerObservation],
    ephemeris: &dyn Ephemeris,
) -> Result<Vec<f64>, ModelError> {
    let states = resolve_states(obs, ephemeris)?;
    residuals_with_states(state, obs, &states)
}

pub fn doppler_rmse(residuals: &[f64]) -> Result<f64, ModelError> {
    if residuals.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    Ok((residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lat: f64, lon: f64) -> StateVector {
        StateVector {
            latitude_deg: lat,
            longitude_deg: lon,
            altitude_m: 0.0,
            clock_offset_hz: 0.0,
            clock_drift_hz_s: 0.0,
            reference_epoch: 0.0,
        }
    }

    /// Satellite 800 km above (0°, 0°) moving along the line of sight.
    fn radial_sat(speed: f64) -> SatStateEcef {
        SatStateEcef {
            time: 10.0,
            position: EcefVector::new(geodesy::WGS84_A + 800e3, 0.0, 0.0),
            velocity: EcefVector::new(speed, 0.0, 0.0),
        }
    }

    #[test]
    fn clock_terms_only() {
        let sat = SatStateEcef { velocity: EcefVector::new(0.0, 7000.0, 0.0), ..radial_sat(0.0) };
        let mut s = state(0.0, 0.0);
        s.clock_offset_hz = 100.0;
        s.clock_drift_hz_s = 0.5;
        assert!((predict_doppler(&sat, &s, 1.626e9, 10.0).unwrap() - 105.0).abs() < 1e-12);
    }

    #[test]
    fn approaching_is_positive() {
        // −(1.626e9 / 299792458)·(−7000) = 37966.26 Hz
        let expected: f64 = 1.626e9 / 299_792_458.0 * 7000.0;
        assert!((expected - 37_966.3).abs() < 0.1);
        let s = state(0.0, 0.0);
        let f = predict_doppler(&radial_sat(-7000.0), &s, 1.626e9, 10.0).unwrap();
        assert!((f - 37_966.3).abs() < 0.1, "{f}");
        let g = predict_doppler(&radial_sat(7000.0), &s, 1.626e9, 10.0).unwrap();
        assert!((g + 37_966.3).abs() < 0.1);
    }

    #[test]
    fn rmse_examples() {
        assert!((doppler_rmse(&[3.0, 4.0]).unwrap() - 3.535_533_9).abs() < 1e-4);
        assert_eq!(doppler_rmse(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(doppler_rmse(&[]), Err(ModelError::EmptyInput));
    }

    #[test]
    fn clock_columns_are_exact() {
        let sat = radial_sat(-5000.0);
        let base = state(0.0, 0.0);
        let f0 = predict_doppler(&sat, &base, 1.626e9, 40.0).unwrap();
        let shifted = StateVector { clock_offset_hz: 37.25, clock_drift_hz_s: 0.125, ..base };
        let f1 = predict_doppler(&sat, &shifted, 1.626e9, 40.0).unwrap();
        assert_eq!(f1 - f0, 37.25 + 0.125 * 40.0);
    }
}
