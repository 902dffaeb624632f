//! Satellite state sources shared by the simulator, the matcher and the solvers.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geodesy::EcefVector;
use crate::orbits::{OrbitError, Propagator, SatStateEcef, TleRecord};

/// Anything that yields an Earth-fixed satellite state for a catalog number and instant.
pub trait Ephemeris: Sync {
    fn state(&self, norad_id: u32, t: f64) -> Result<SatStateEcef, OrbitError>;

    /// Catalog numbers available, ascending.
    fn norad_ids(&self) -> Vec<u32>;

    fn contains(&self, norad_id: u32) -> bool {
        self.norad_ids().binary_search(&norad_id).is_ok()
    }
}

/// SGP4 propagators keyed by catalog number.
#[derive(Debug, Clone)]
pub struct TleCatalog {
    records: BTreeMap<u32, TleRecord>,
    propagators: BTreeMap<u32, Propagator>,
}

impl TleCatalog {
    /// Builds one propagator per record. A later record for the same catalog
    /// number replaces an earlier one.
    pub fn new(records: &[TleRecord]) -> Result<Self, OrbitError> {
        Self::with_staleness_limit(records, crate::orbits::DEFAULT_STALENESS_LIMIT_S)
    }

    pub fn with_staleness_limit(records: &[TleRecord], limit_s: f64) -> Result<Self, OrbitError> {
        let mut out = Self { records: BTreeMap::new(), propagators: BTreeMap::new() };
        for r in records {
            let p = Propagator::new(r)?.with_staleness_limit(limit_s);
            out.records.insert(r.norad_id, r.clone());
            out.propagators.insert(r.norad_id, p);
        }
        Ok(out)
    }

    pub fn records(&self) -> impl Iterator<Item = &TleRecord> {
        self.records.values()
    }

    pub fn record(&self, norad_id: u32) -> Option<&TleRecord> {
        self.records.get(&norad_id)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Ephemeris for TleCatalog {
    fn state(&self, norad_id: u32, t: f64) -> Result<SatStateEcef, OrbitError> {
        self.propagators
            .get(&norad_id)
            .ok_or(OrbitError::MissingEphemeris(norad_id))?
            .propagate_to(t)
    }

    fn norad_ids(&self) -> Vec<u32> {
        self.records.keys().copied().collect()
    }

    fn contains(&self, norad_id: u32) -> bool {
        self.records.contains_key(&norad_id)
    }
}

/// Constant offset in a satellite's radial / along-track / cross-track frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RtnOffset {
    pub radial_m: f64,
    pub along_track_m: f64,
    pub cross_track_m: f64,
}

impl RtnOffset {
    pub const ZERO: RtnOffset = RtnOffset { radial_m: 0.0, along_track_m: 0.0, cross_track_m: 0.0 };

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }
}

/// Rodrigues rotation of `v` about unit axis `k` by `angle` radians.
fn rotate(v: EcefVector, k: EcefVector, angle: f64) -> EcefVector {
    let (s, c) = angle.sin_cos();
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}

/// Displaces one state by `offset`.
///
/// The along-track part is applied as a rotation of position and velocity
/// about the orbit normal through angle d/|r|, which is the same as moving the
/// satellite d meters along its track. Radial and cross-track parts are then
/// added as translations.
pub fn perturb_state(state: &SatStateEcef, offset: &RtnOffset) -> SatStateEcef {
    if offset.is_zero() {
        return *state;
    }
    let r = state.position;
    let normal = r.cross(state.velocity).normalized();
    let angle = offset.along_track_m / r.norm();
    let position = rotate(r, normal, angle);
    let velocity = rotate(state.velocity, normal, angle);
    let radial = position.normalized();
    SatStateEcef {
        time: state.time,
        position: position + radial * offset.radial_m + normal * offset.cross_track_m,
        velocity,
    }
}

/// A TLE catalog whose states are displaced by per-satellite RTN offsets.
/// This is the "broadcast" ephemeris that carries a known orbit error.
#[derive(Debug, Clone)]
pub struct PerturbedEphemeris {
    catalog: TleCatalog,
    offsets: BTreeMap<u32, RtnOffset>,
}

impl PerturbedEphemeris {
    pub fn new(catalog: TleCatalog, offsets: BTreeMap<u32, RtnOffset>) -> Self {
        Self { catalog, offsets }
    }

    pub fn catalog(&self) -> &TleCatalog {
        &self.catalog
    }

    pub fn offsets(&self) -> &BTreeMap<u32, RtnOffset> {
        &self.offsets
    }

    pub fn offset(&self, norad_id: u32) -> RtnOffset {
        self.offsets.get(&norad_id).copied().unwrap_or_default()
    }

    pub fn to_file(&self) -> EphemerisFile {
        EphemerisFile {
            tles: self.catalog.records().cloned().collect(),
            offsets: self.offsets.clone(),
        }
    }

    pub fn from_file(file: &EphemerisFile) -> Result<Self, OrbitError> {
        Ok(Self::new(TleCatalog::new(&file.tles)?, file.offsets.clone()))
    }
}

impl Ephemeris for PerturbedEphemeris {
    fn state(&self, norad_id: u32, t: f64) -> Result<SatStateEcef, OrbitError> {
        let s = self.catalog.state(norad_id, t)?;
        Ok(perturb_state(&s, &self.offset(norad_id)))
    }

    fn norad_ids(&self) -> Vec<u32> {
        self.catalog.norad_ids()
    }

    fn contains(&self, norad_id: u32) -> bool {
        self.catalog.contains(norad_id)
    }
}

/// JSON form of a [`PerturbedEphemeris`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EphemerisFile {
    pub tles: Vec<TleRecord>,
    #[serde(default)]
    pub offsets: BTreeMap<u32, RtnOffset>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circular_state() -> SatStateEcef {
        let r = 7.15e6;
        let v = (3.986_004_418e14_f64 / r).sqrt();
        SatStateEcef {
            time: 0.0,
            position: EcefVector::new(r, 0.0, 0.0),
            velocity: EcefVector::new(0.0, v * 0.1, v * 0.995),
        }
    }

    #[test]
    fn zero_offset_is_identity() {
        let s = circular_state();
        assert_eq!(perturb_state(&s, &RtnOffset::ZERO), s);
    }

    #[test]
    fn radial_offset_raises_radius() {
        let s = circular_state();
        let p = perturb_state(&s, &RtnOffset { radial_m: 1000.0, along_track_m: 2500.0, cross_track_m: 0.0 });
        assert!((p.position.norm() - s.position.norm() - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn along_track_moves_along_velocity() {
        let s = circular_state();
        let p = perturb_state(&s, &RtnOffset { along_track_m: 3000.0, ..RtnOffset::ZERO });
        let d = p.position - s.position;
        assert!((d.norm() - 3000.0).abs() < 0.01);
        assert!(d.normalized().dot(s.velocity.normalized()) > 0.999_99);
        assert!((p.velocity.norm() - s.velocity.norm()).abs() < 1e-9);
    }

    #[test]
    fn cross_track_is_normal_to_orbit_plane() {
        let s = circular_state();
        let p = perturb_state(&s, &RtnOffset { cross_track_m: 500.0, ..RtnOffset::ZERO });
        let d = p.position - s.position;
        assert!(d.dot(s.position).abs() < 1e-3);
        assert!(d.dot(s.velocity).abs() < 1e-3);
        assert!((d.norm() - 500.0).abs() < 1e-9);
    }
}
