//! Solar position from time and place.
//!
//! Implements the Astronomical Almanac low-precision solar coordinates as
//! adapted by Michalsky (1988): about 0.01 degree accuracy between 1950 and
//! 2050. The returned position is topocentric (solar parallax applied) and
//! deliberately excludes atmospheric refraction; the simulator injects
//! refraction as a separate disturbance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::UnitVec3;

/// 1950-01-01T00:00:00Z as Unix seconds.
pub const EPOCH_START_UNIX: i64 = -631_152_000;
/// 2051-01-01T00:00:00Z as Unix seconds (exclusive upper bound).
pub const EPOCH_END_UNIX: i64 = 2_556_144_000;

/// Plataforma Solar de Almeria, the default site.
pub const PSA_LATITUDE_DEG: f64 = 37.09;
pub const PSA_LONGITUDE_DEG: f64 = -2.36;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EphemerisError {
    #[error("timestamp {0} s is outside the supported 1950-2050 range")]
    OutOfEpoch(f64),
    #[error("invalid site: latitude {lat} deg, longitude {lon} deg")]
    InvalidSite { lat: f64, lon: f64 },
}

/// A site and an instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTime {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: f64,
}

impl GeoTime {
    pub fn new(latitude_deg: f64, longitude_deg: f64, timestamp: f64) -> Result<Self, EphemerisError> {
        if !(latitude_deg.abs() <= 90.0 && longitude_deg.abs() <= 180.0) {
            return Err(EphemerisError::InvalidSite { lat: latitude_deg, lon: longitude_deg });
        }
        Ok(Self { latitude_deg, longitude_deg, timestamp })
    }

    pub fn psa(timestamp: f64) -> Self {
        Self { latitude_deg: PSA_LATITUDE_DEG, longitude_deg: PSA_LONGITUDE_DEG, timestamp }
    }

    pub fn at(&self, timestamp: f64) -> Self {
        Self { timestamp, ..*self }
    }

    pub fn julian_day(&self) -> f64 {
        self.timestamp / 86_400.0 + 2_440_587.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SunPosition {
    /// Clockwise from North, `[0, 360)`.
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    /// Unit vector toward the Sun in the East-North-Up frame.
    pub direction: UnitVec3,
}

impl SunPosition {
    pub fn from_angles(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Self {
            azimuth_deg: azimuth_deg.rem_euclid(360.0),
            elevation_deg,
            direction: UnitVec3::from_az_el_deg(azimuth_deg, elevation_deg),
        }
    }
}

/// Solar equatorial coordinates needed for the local transformation.
struct Equatorial {
    right_ascension: f64,
    declination: f64,
    gmst_hours: f64,
}

fn equatorial(jd: f64) -> Equatorial {
    let n = jd - 2_451_545.0;
    let mean_longitude = (280.460 + 0.985_647_4 * n).rem_euclid(360.0);
    let mean_anomaly = (357.528 + 0.985_600_3 * n).rem_euclid(360.0).to_radians();
    let ecliptic_longitude = (mean_longitude
        + 1.915 * mean_anomaly.sin()
        + 0.020 * (2.0 * mean_anomaly).sin())
    .rem_euclid(360.0)
    .to_radians();
    let obliquity = (23.439 - 0.000_000_4 * n).to_radians();

    let right_ascension = (obliquity.cos() * ecliptic_longitude.sin())
        .atan2(ecliptic_longitude.cos())
        .rem_euclid(std::f64::consts::TAU);
    let declination = (obliquity.sin() * ecliptic_longitude.sin()).asin();

    // Hour of day in UT, taken from the fractional Julian day.
    let ut_hours = ((jd + 0.5).fract()) * 24.0;
    let gmst_hours = (6.697_375 + 0.065_709_824_2 * n + ut_hours).rem_euclid(24.0);
    Equatorial { right_ascension, declination, gmst_hours }
}

/// Apparent topocentric solar position without refraction.
pub fn sun_direction(gt: &GeoTime) -> Result<SunPosition, EphemerisError> {
    if !(gt.timestamp >= EPOCH_START_UNIX as f64 && gt.timestamp < EPOCH_END_UNIX as f64) {
        return Err(EphemerisError::OutOfEpoch(gt.timestamp));
    }
    if !(gt.latitude_deg.abs() <= 90.0 && gt.longitude_deg.abs() <= 180.0) {
        return Err(EphemerisError::InvalidSite { lat: gt.latitude_deg, lon: gt.longitude_deg });
    }
    let eq = equatorial(gt.julian_day());
    let lmst_hours = (eq.gmst_hours + gt.longitude_deg / 15.0).rem_euclid(24.0);
    let mut hour_angle = (lmst_hours * 15.0).to_radians() - eq.right_ascension;
    // Normalize into (-pi, pi].
    hour_angle = (hour_angle + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;

    let lat = gt.latitude_deg.to_radians();
    let dec = eq.declination;
    let sin_el = dec.sin() * lat.sin() + dec.cos() * lat.cos() * hour_angle.cos();
    let geocentric_el = sin_el.clamp(-1.0, 1.0).asin();
    let azimuth = (-hour_angle.sin() * dec.cos())
        .atan2(dec.sin() * lat.cos() - dec.cos() * hour_angle.cos() * lat.sin());

    // Solar horizontal parallax, 8.794 arcsec.
    let parallax = (8.794 / 3600.0_f64).to_radians() * geocentric_el.cos();
    let elevation_deg = (geocentric_el - parallax).to_degrees();
    Ok(SunPosition::from_angles(azimuth.to_degrees(), elevation_deg))
}
