//! WGS-84 coordinate conversions and line-of-sight geometry.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orbits::SatStateEcef;

/// WGS-84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 semi-minor axis (m).
pub const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);
/// First eccentricity squared.
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

const MIN_ALTITUDE_M: f64 = -1_000.0;
const MAX_ALTITUDE_M: f64 = 1.0e7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("ECEF vector too close to the geocenter (|v| = {norm} m)")]
    DegenerateInput { norm: f64 },
    #[error("satellite and receiver separated by only {separation} m")]
    DegenerateGeometry { separation: f64 },
    #[error("invalid geodetic position: {0}")]
    InvalidPosition(String),
}

/// Cartesian Earth-fixed vector in meters (or m/s when used as a velocity).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EcefVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl EcefVector {
    pub const ZERO: EcefVector = EcefVector { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Self) -> Self {
        Self::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Unit vector in the same direction. Returns the zero vector unchanged.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for EcefVector {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for EcefVector {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl Sub for EcefVector {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for EcefVector {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for EcefVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

/// Position on or above the WGS-84 ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPosition {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

impl GeodeticPosition {
    /// Validated constructor. Longitude is wrapped into (−180, 180].
    pub fn new(latitude_deg: f64, longitude_deg: f64, altitude_m: f64) -> Result<Self, GeodesyError> {
        let p = Self {
            latitude_deg,
            longitude_deg: wrap_longitude(longitude_deg),
            altitude_m,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeodesyError> {
        if !(self.latitude_deg.is_finite() && (-90.0..=90.0).contains(&self.latitude_deg)) {
            return Err(GeodesyError::InvalidPosition(format!(
                "latitude {} outside [-90, 90]",
                self.latitude_deg
            )));
        }
        if !(self.longitude_deg.is_finite() && self.longitude_deg > -180.0 && self.longitude_deg <= 180.0) {
            return Err(GeodesyError::InvalidPosition(format!(
                "longitude {} outside (-180, 180]",
                self.longitude_deg
            )));
        }
        if !(self.altitude_m.is_finite() && (MIN_ALTITUDE_M..=MAX_ALTITUDE_M).contains(&self.altitude_m)) {
            return Err(GeodesyError::InvalidPosition(format!(
                "altitude {} outside [{MIN_ALTITUDE_M}, {MAX_ALTITUDE_M}]",
                self.altitude_m
            )));
        }
        Ok(())
    }

    pub fn to_ecef(&self) -> EcefVector {
        geodetic_to_ecef(self)
    }
}

/// Wraps a longitude in degrees into (−180, 180].
pub fn wrap_longitude(lon_deg: f64) -> f64 {
    let mut l = lon_deg.rem_euclid(360.0);
    if l > 180.0 {
        l -= 360.0;
    }
    if l == -180.0 {
        l = 180.0;
    }
    l
}

/// Closed-form ellipsoidal conversion. Accepts any longitude, wrapped or not.
pub fn geodetic_to_ecef(p: &GeodeticPosition) -> EcefVector {
    let lat = p.latitude_deg.to_radians();
    let lon = p.longitude_deg.to_radians();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    let h = p.altitude_m;
    EcefVector::new(
        (n + h) * cos_lat * cos_lon,
        (n + h) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + h) * sin_lat,
    )
}

/// Fixed-point inversion of [`geodetic_to_ecef`]. On the polar axis the
/// longitude is reported as 0°.
pub fn ecef_to_geodetic(v: EcefVector) -> Result<GeodeticPosition, GeodesyError> {
    let norm = v.norm();
    if !(norm > 1.0e5) {
        return Err(GeodesyError::DegenerateInput { norm });
    }
    let p = v.x.hypot(v.y);
    let lon = if p == 0.0 { 0.0 } else { v.y.atan2(v.x) };

    let mut lat = v.z.atan2(p * (1.0 - WGS84_E2));
    for _ in 0..30 {
        let (sin_lat, cos_lat) = lat.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        let h = p * cos_lat + v.z * sin_lat - WGS84_A * WGS84_A / n;
        let next = v.z.atan2(p * (1.0 - WGS84_E2 * n / (n + h)));
        let done = (next - lat).abs() < 1.0e-15;
        lat = next;
        if done {
            break;
        }
    }
    let height = if p == 0.0 {
        v.z.abs() - WGS84_B
    } else {
        let (sin_lat, cos_lat) = lat.sin_cos();
        let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        p * cos_lat + v.z * sin_lat - WGS84_A * WGS84_A / n
    };
    Ok(GeodeticPosition {
        latitude_deg: lat.to_degrees(),
        longitude_deg: wrap_longitude(lon.to_degrees()),
        altitude_m: height,
    })
}

/// Local east, north and up unit vectors at a geodetic point.
pub fn enu_basis(at: &GeodeticPosition) -> [EcefVector; 3] {
    let lat = at.latitude_deg.to_radians();
    let lon = at.longitude_deg.to_radians();
    let (sl, cl) = lat.sin_cos();
    let (so, co) = lon.sin_cos();
    [
        EcefVector::new(-so, co, 0.0),
        EcefVector::new(-sl * co, -sl * so, cl),
        EcefVector::new(cl * co, cl * so, sl),
    ]
}

/// Expresses `target − origin` in the ENU frame at `origin`.
pub fn ecef_to_enu(target: EcefVector, origin: &GeodeticPosition) -> [f64; 3] {
    let d = target - origin.to_ecef();
    let [e, n, u] = enu_basis(origin);
    [d.dot(e), d.dot(n), d.dot(u)]
}

/// Time derivative of the satellite–receiver range; positive when receding.
pub fn range_rate(sat: &SatStateEcef, rx_pos: EcefVector, rx_vel: EcefVector) -> Result<f64, GeodesyError> {
    let los = sat.position - rx_pos;
    let range = los.norm();
    if !(range > 1.0) {
        return Err(GeodesyError::DegenerateGeometry { separation: range });
    }
    Ok(los.dot(sat.velocity - rx_vel) / range)
}

/// Elevation of `sat_pos` above the local ellipsoidal horizon at `rx`, degrees.
pub fn elevation_angle(sat_pos: EcefVector, rx: &GeodeticPosition) -> f64 {
    let los = sat_pos - rx.to_ecef();
    let up = enu_basis(rx)[2];
    let range = los.norm();
    if range == 0.0 {
        return 90.0;
    }
    (los.dot(up) / range).clamp(-1.0, 1.0).asin().to_degrees()
}

/// East/north separation of `estimate` from `truth` in the ENU frame at `truth`.
pub fn horizontal_error(estimate: &GeodeticPosition, truth: &GeodeticPosition) -> f64 {
    let [e, n, _] = ecef_to_enu(estimate.to_ecef(), truth);
    e.hypot(n)
}

/// Up component of `estimate − truth` in the ENU frame at `truth`.
pub fn vertical_error(estimate: &GeodeticPosition, truth: &GeodeticPosition) -> f64 {
    ecef_to_enu(estimate.to_ecef(), truth)[2]
}
