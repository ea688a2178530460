//! Typeahead suggestions for journey endpoints.

use std::path::Path;

use journeys_core::geo::{haversine_distance, GeoPoint};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_SUGGESTIONS: usize = 10;

/// Distance at which a suggestion's rank is halved.
pub const HALF_RANK_DISTANCE_M: f64 = 10_000.0;

#[derive(Debug, Error)]
#[error("geocoder unavailable: {0}")]
pub struct GeocoderError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Place {
    pub label: String,
    pub location: GeoPoint,
}

/// A venue or address lookup backend.
pub trait GeocoderAdapter: Send + Sync {
    fn venue_search(&self, query: &str, near: GeoPoint) -> Result<Vec<Place>, GeocoderError>;
    fn address_search(&self, query: &str, near: GeoPoint) -> Result<Vec<Place>, GeocoderError>;
}

/// Offline geocoder answering from a fixed list of places.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
pub struct FixtureGeocoder {
    pub venues: Vec<Place>,
    pub addresses: Vec<Place>,
}

impl FixtureGeocoder {
    pub fn shipped() -> Self {
        serde_json::from_str(include_str!("../data/geocoder_fixture.json")).expect("shipped fixture parses")
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    fn search(places: &[Place], query: &str) -> Vec<Place> {
        places
            .iter()
            .filter(|p| text_score(query, &p.label) > 0.0)
            .cloned()
            .collect()
    }
}

impl GeocoderAdapter for FixtureGeocoder {
    fn venue_search(&self, query: &str, _near: GeoPoint) -> Result<Vec<Place>, GeocoderError> {
        Ok(Self::search(&self.venues, query))
    }

    fn address_search(&self, query: &str, _near: GeoPoint) -> Result<Vec<Place>, GeocoderError> {
        Ok(Self::search(&self.addresses, query))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaceKind {
    Venue,
    Address,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointSuggestion {
    pub label: String,
    pub kind: PlaceKind,
    pub location: GeoPoint,
    pub rank_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Suggestions {
    pub suggestions: Vec<EndpointSuggestion>,
    /// True when a backend failed and its half of the results is missing.
    pub degraded: bool,
    pub unavailable: Vec<PlaceKind>,
}

/// 1 for a label prefix, 0.75 for a word prefix, 0.5 for any other
/// substring, 0 for no match. Case-insensitive.
pub fn text_score(query: &str, label: &str) -> f64 {
    let q = query.trim().to_lowercase();
    if q.is_empty() {
        return 0.0;
    }
    let l = label.to_lowercase();
    if l.starts_with(&q) {
        1.0
    } else if l
        .match_indices(&q)
        .any(|(i, _)| !l[..i].ends_with(|c: char| c.is_alphanumeric()))
    {
        0.75
    } else if l.contains(&q) {
        0.5
    } else {
        0.0
    }
}

pub fn rank_score(text: f64, distance_m: f64) -> f64 {
    text / (1.0 + distance_m / HALF_RANK_DISTANCE_M)
}

/// Merged venue and address suggestions, best first.
pub fn suggest_endpoints(query: &str, near: GeoPoint, adapter: &dyn GeocoderAdapter) -> Suggestions {
    let mut out = Suggestions::default();
    if query.trim().is_empty() {
        return out;
    }
    let halves = [
        (PlaceKind::Venue, adapter.venue_search(query, near)),
        (PlaceKind::Address, adapter.address_search(query, near)),
    ];
    for (kind, result) in halves {
        match result {
            Ok(places) => out.suggestions.extend(places.into_iter().filter_map(|p| {
                let text = text_score(query, &p.label);
                (text > 0.0).then(|| EndpointSuggestion {
                    rank_score: rank_score(text, haversine_distance(near, p.location)),
                    label: p.label,
                    kind,
                    location: p.location,
                })
            })),
            Err(_) => {
                out.degraded = true;
                out.unavailable.push(kind);
            }
        }
    }
    out.suggestions.sort_by(|a, b| {
        b.rank_score
            .total_cmp(&a.rank_score)
            .then_with(|| a.label.cmp(&b.label))
    });
    out.suggestions.truncate(MAX_SUGGESTIONS);
    out
}
