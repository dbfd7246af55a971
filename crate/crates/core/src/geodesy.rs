//! Great-circle and slant-range distances on a spherical Earth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("altitude {0} is not finite")]
    Altitude(f64),
}

/// WGS-84 latitude/longitude in degrees plus altitude in meters above the
/// local ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeoPosition {
    #[serde(rename = "lat")]
    latitude_deg: f64,
    #[serde(rename = "lon")]
    longitude_deg: f64,
    #[serde(rename = "alt")]
    altitude_m: f64,
}

impl GeoPosition {
    pub fn new(latitude_deg: f64, longitude_deg: f64, altitude_m: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&latitude_deg) {
            return Err(GeoError::Latitude(latitude_deg));
        }
        if !(-180.0..=180.0).contains(&longitude_deg) {
            return Err(GeoError::Longitude(longitude_deg));
        }
        if !altitude_m.is_finite() {
            return Err(GeoError::Altitude(altitude_m));
        }
        Ok(Self {
            latitude_deg,
            longitude_deg,
            altitude_m,
        })
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude_deg
    }

    pub fn longitude_deg(&self) -> f64 {
        self.longitude_deg
    }

    pub fn altitude_m(&self) -> f64 {
        self.altitude_m
    }

    /// Same horizontal location at a different altitude.
    pub fn with_altitude(&self, altitude_m: f64) -> Result<Self, GeoError> {
        Self::new(self.latitude_deg, self.longitude_deg, altitude_m)
    }
}

impl<'de> Deserialize<'de> for GeoPosition {
    fn deserialize<D>(deserializer: D) -> Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            lat: f64,
            lon: f64,
            #[serde(default)]
            alt: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        GeoPosition::new(raw.lat, raw.lon, raw.alt).map_err(serde::de::Error::custom)
    }
}

/// Central angle between two positions in radians.
fn central_angle(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let phi1 = a.latitude_deg.to_radians();
    let phi2 = b.latitude_deg.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.longitude_deg - a.longitude_deg).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * h.sqrt().min(1.0).asin()
}

/// Ground distance along the great circle, altitude ignored.
pub fn haversine_distance(a: &GeoPosition, b: &GeoPosition) -> f64 {
    EARTH_RADIUS_M * central_angle(a, b)
}

/// Straight-line separation with altitude difference added in quadrature.
pub fn slant_distance(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let ground = haversine_distance(a, b);
    let dz = a.altitude_m - b.altitude_m;
    ground.hypot(dz)
}

/// Initial great-circle bearing from `a` to `b`, degrees clockwise from north in [0, 360).
pub fn initial_bearing_deg(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let phi1 = a.latitude_deg.to_radians();
    let phi2 = b.latitude_deg.to_radians();
    let dlambda = (b.longitude_deg - a.longitude_deg).to_radians();
    let y = dlambda.sin() * phi2.cos();
    let x = phi1.cos() * phi2.sin() - phi1.sin() * phi2.cos() * dlambda.cos();
    y.atan2(x).to_degrees().rem_euclid(360.0)
}

/// Point at `fraction` of the way from `a` to `b`: great-circle horizontally,
/// linear in altitude. Ground and slant length of any sub-interval are then
/// proportional to the fraction covered.
pub fn interpolate(a: &GeoPosition, b: &GeoPosition, fraction: f64) -> GeoPosition {
    let f = fraction.clamp(0.0, 1.0);
    if f == 0.0 {
        return *a;
    }
    if f == 1.0 {
        return *b;
    }
    let alt = a.altitude_m + (b.altitude_m - a.altitude_m) * f;
    let delta = central_angle(a, b);
    if delta < 1e-15 {
        return GeoPosition {
            altitude_m: alt,
            ..*a
        };
    }
    let (phi1, l1) = (a.latitude_deg.to_radians(), a.longitude_deg.to_radians());
    let (phi2, l2) = (b.latitude_deg.to_radians(), b.longitude_deg.to_radians());
    let sd = delta.sin();
    let wa = ((1.0 - f) * delta).sin() / sd;
    let wb = (f * delta).sin() / sd;
    let x = wa * phi1.cos() * l1.cos() + wb * phi2.cos() * l2.cos();
    let y = wa * phi1.cos() * l1.sin() + wb * phi2.cos() * l2.sin();
    let z = wa * phi1.sin() + wb * phi2.sin();
    let lat = z.atan2(x.hypot(y)).to_degrees().clamp(-90.0, 90.0);
    let lon = y.atan2(x).to_degrees().clamp(-180.0, 180.0);
    GeoPosition {
        latitude_deg: lat,
        longitude_deg: lon,
        altitude_m: alt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lat: f64, lon: f64, alt: f64) -> GeoPosition {
        GeoPosition::new(lat, lon, alt).unwrap()
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(GeoPosition::new(90.5, 0.0, 0.0), Err(GeoError::Latitude(90.5)));
        assert_eq!(GeoPosition::new(0.0, -181.0, 0.0), Err(GeoError::Longitude(-181.0)));
        assert!(GeoPosition::new(f64::NAN, 0.0, 0.0).is_err());
        assert!(GeoPosition::new(0.0, 0.0, f64::INFINITY).is_err());
        assert!(GeoPosition::new(-90.0, 180.0, 0.0).is_ok());
    }

    #[test]
    fn identity_is_zero() {
        let a = p(35.7, -78.7, 12.0);
        assert_eq!(haversine_distance(&a, &a), 0.0);
    }

    #[test]
    fn one_degree_on_equator() {
        let d = haversine_distance(&p(0.0, 0.0, 0.0), &p(0.0, 1.0, 0.0));
        assert!((d - 111_194.93).abs() <= 0.01, "{d}");
    }

    #[test]
    fn antipodal() {
        let d = haversine_distance(&p(0.0, 0.0, 0.0), &p(0.0, 180.0, 0.0));
        assert!((d - 20_015_086.8).abs() <= 0.1, "{d}");
    }

    #[test]
    fn slant_cases() {
        let a = p(35.0, -78.0, 0.0);
        assert!((slant_distance(&a, &p(35.0, -78.0, 100.0)) - 100.0).abs() < 1e-9);
        let b = p(35.001, -78.002, 0.0);
        assert_eq!(slant_distance(&a, &b), haversine_distance(&a, &b));
    }

    #[test]
    fn three_four_five() {
        // 300 m due north: 300 / R radians of latitude.
        let a = p(10.0, 20.0, 0.0);
        let dlat = (300.0 / EARTH_RADIUS_M).to_degrees();
        let b = p(10.0 + dlat, 20.0, 400.0);
        assert!((haversine_distance(&a, &b) - 300.0).abs() < 1e-6);
        assert!((slant_distance(&a, &b) - 500.0).abs() < 1e-6);
    }

    #[test]
    fn bearing_cardinal() {
        let o = p(0.0, 0.0, 0.0);
        assert!((initial_bearing_deg(&o, &p(1.0, 0.0, 0.0)) - 0.0).abs() < 1e-9);
        assert!((initial_bearing_deg(&o, &p(0.0, 1.0, 0.0)) - 90.0).abs() < 1e-9);
        assert!((initial_bearing_deg(&o, &p(-1.0, 0.0, 0.0)) - 180.0).abs() < 1e-9);
        assert!((initial_bearing_deg(&o, &p(0.0, -1.0, 0.0)) - 270.0).abs() < 1e-9);
    }

    #[test]
    fn interpolation_endpoints_and_midpoint() {
        let a = p(35.7270, -78.6960, 30.0);
        let b = p(35.7290, -78.6920, 50.0);
        assert_eq!(interpolate(&a, &b, 0.0), a);
        assert_eq!(interpolate(&a, &b, 1.0), b);
        let m = interpolate(&a, &b, 0.5);
        let total = slant_distance(&a, &b);
        assert!((slant_distance(&a, &m) - total / 2.0).abs() < 1e-6);
        assert!((slant_distance(&m, &b) - total / 2.0).abs() < 1e-6);
        assert!((m.altitude_m() - 40.0).abs() < 1e-12);
    }

    fn arb_pos() -> impl Strategy<Value = GeoPosition> {
        (-89.0..89.0f64, -179.0..179.0f64, 0.0..500.0f64).prop_map(|(a, b, c)| p(a, b, c))
    }

    proptest! {
        #[test]
        fn slant_dominates_ground(a in arb_pos(), b in arb_pos()) {
            let g = haversine_distance(&a, &b);
            let s = slant_distance(&a, &b);
            prop_assert!(s >= g);
            if a.altitude_m() == b.altitude_m() {
                prop_assert_eq!(s, g);
            }
        }

        #[test]
        fn interpolation_is_uniform(a in arb_pos(), f in 0.0..1.0f64) {
            let dlat = (400.0 / EARTH_RADIUS_M).to_degrees();
            let b = p((a.latitude_deg() + dlat).min(89.9), a.longitude_deg() + 0.003, a.altitude_m() + 20.0);
            let m = interpolate(&a, &b, f);
            let total = slant_distance(&a, &b);
            prop_assert!((slant_distance(&a, &m) - f * total).abs() <= 1e-6 * total.max(1.0));
        }
    }
}
