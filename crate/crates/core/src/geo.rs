//! Great-circle geometry, community radius, and the bundling predicate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod index;

pub use index::JourneyIndex;

/// Mean earth radius in meters (spherical model).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// 100 yards.
pub const DEFAULT_MIN_RADIUS_M: f64 = 91.44;
/// 30 miles.
pub const DEFAULT_MAX_RADIUS_M: f64 = 48_280.32;
pub const DEFAULT_DIVISOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("community divisor must be > 1, got {0}")]
    Divisor(f64),
    #[error("community radius bounds must satisfy 0 < min <= max, got [{min}, {max}]")]
    RadiusBounds { min: f64, max: f64 },
}

/// A validated latitude/longitude pair in decimal degrees.
///
/// Longitude is normalized to the half-open interval `[-180, 180)`, so the
/// antimeridian has a single representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lng: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lng: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;

    fn try_from(raw: RawPoint) -> Result<Self, Self::Error> {
        GeoPoint::new(raw.lat, raw.lng)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lng: p.lng }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lng: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lng.is_finite() || !(-180.0..=180.0).contains(&lng) {
            return Err(GeoError::Longitude(lng));
        }
        let lng = if lng == 180.0 { -180.0 } else { lng };
        // -0.0 and 0.0 compare equal but would hash differently downstream.
        Ok(GeoPoint {
            lat: lat + 0.0,
            lng: lng + 0.0,
        })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lng(&self) -> f64 {
        self.lng
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.5}, {:.5}", self.lat, self.lng)
    }
}

/// Crow-flies distance in meters between two points on the spherical earth.
pub fn haversine_distance(p: GeoPoint, q: GeoPoint) -> f64 {
    let lat1 = p.lat.to_radians();
    let lat2 = q.lat.to_radians();
    let dlat = (q.lat - p.lat).to_radians();
    let dlng = (q.lng - p.lng).to_radians();

    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlng / 2.0).sin().powi(2);
    // Rounding can push h a hair past 1 for near-antipodal points.
    let h = h.clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_M * h.sqrt().atan2((1.0 - h).sqrt())
}

/// Constants controlling how wide a journey's community is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCommunityConfig", into = "RawCommunityConfig")]
pub struct CommunityConfig {
    divisor: f64,
    min_radius_m: f64,
    max_radius_m: f64,
}

#[derive(Serialize, Deserialize)]
struct RawCommunityConfig {
    #[serde(default = "default_divisor")]
    divisor: f64,
    #[serde(default = "default_min_radius")]
    min_radius_m: f64,
    #[serde(default = "default_max_radius")]
    max_radius_m: f64,
}

fn default_divisor() -> f64 {
    DEFAULT_DIVISOR
}

fn default_min_radius() -> f64 {
    DEFAULT_MIN_RADIUS_M
}

fn default_max_radius() -> f64 {
    DEFAULT_MAX_RADIUS_M
}

impl TryFrom<RawCommunityConfig> for CommunityConfig {
    type Error = GeoError;

    fn try_from(raw: RawCommunityConfig) -> Result<Self, Self::Error> {
        CommunityConfig::new(raw.divisor, raw.min_radius_m, raw.max_radius_m)
    }
}

impl From<CommunityConfig> for RawCommunityConfig {
    fn from(c: CommunityConfig) -> Self {
        RawCommunityConfig {
            divisor: c.divisor,
            min_radius_m: c.min_radius_m,
            max_radius_m: c.max_radius_m,
        }
    }
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig {
            divisor: DEFAULT_DIVISOR,
            min_radius_m: DEFAULT_MIN_RADIUS_M,
            max_radius_m: DEFAULT_MAX_RADIUS_M,
        }
    }
}

impl CommunityConfig {
    pub fn new(divisor: f64, min_radius_m: f64, max_radius_m: f64) -> Result<Self, GeoError> {
        if !(divisor.is_finite() && divisor > 1.0) {
            return Err(GeoError::Divisor(divisor));
        }
        if !(min_radius_m.is_finite() && max_radius_m.is_finite())
            || min_radius_m <= 0.0
            || min_radius_m > max_radius_m
        {
            return Err(GeoError::RadiusBounds {
                min: min_radius_m,
                max: max_radius_m,
            });
        }
        Ok(CommunityConfig {
            divisor,
            min_radius_m,
            max_radius_m,
        })
    }

    pub fn divisor(&self) -> f64 {
        self.divisor
    }

    pub fn min_radius_m(&self) -> f64 {
        self.min_radius_m
    }

    pub fn max_radius_m(&self) -> f64 {
        self.max_radius_m
    }
}

/// Radius of the community around a journey of length `length_m`: a fixed
/// fraction of the length, clamped to the configured bounds.
pub fn community_radius(length_m: f64, cfg: &CommunityConfig) -> f64 {
    (length_m / cfg.divisor)
        .max(cfg.min_radius_m)
        .min(cfg.max_radius_m)
}

/// The directed origin/destination pair that identifies a journey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
}

impl Endpoints {
    pub fn new(origin: GeoPoint, destination: GeoPoint) -> Self {
        Endpoints {
            origin,
            destination,
        }
    }

    pub fn length_m(&self) -> f64 {
        haversine_distance(self.origin, self.destination)
    }

    pub fn reversed(&self) -> Self {
        Endpoints::new(self.destination, self.origin)
    }
}

/// Whether `other` belongs to the community seen from `viewer`.
///
/// The radius comes from the viewer's length only, so the relation is not
/// symmetric: a long journey can see a short one that cannot see it back.
pub fn is_bundled(viewer: &Endpoints, other: &Endpoints, cfg: &CommunityConfig) -> bool {
    let r = community_radius(viewer.length_m(), cfg);
    within_radius(viewer, other, r)
}

pub(crate) fn within_radius(a: &Endpoints, b: &Endpoints, radius_m: f64) -> bool {
    haversine_distance(a.origin, b.origin) <= radius_m
        && haversine_distance(a.destination, b.destination) <= radius_m
}
