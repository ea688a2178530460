use std::collections::HashMap;
use std::hash::Hash;

use super::{community_radius, within_radius, CommunityConfig, Endpoints, GeoPoint, EARTH_RADIUS_M};

const DEFAULT_CELL_DEG: f64 = 0.1;

/// Grid of journey origins with an exact haversine filter on top.
///
/// Candidate cells cover a conservative bounding box of the query circle, so
/// the result is identical to scanning every entry.
#[derive(Debug, Clone)]
pub struct JourneyIndex<Id> {
    cell_deg: f64,
    lat_cells: i64,
    lng_cells: i64,
    entries: HashMap<Id, Endpoints>,
    cells: HashMap<(i64, i64), Vec<Id>>,
}

impl<Id> Default for JourneyIndex<Id> {
    fn default() -> Self {
        Self::with_cell_size(DEFAULT_CELL_DEG)
    }
}

impl<Id> JourneyIndex<Id> {
    pub fn new() -> Self {
        Self::default()
    }

    /// # Panics
    /// If `cell_deg` is not in `(0, 180]`.
    pub fn with_cell_size(cell_deg: f64) -> Self {
        assert!(cell_deg > 0.0 && cell_deg <= 180.0, "bad cell size {cell_deg}");
        JourneyIndex {
            cell_deg,
            lat_cells: (180.0 / cell_deg).ceil() as i64,
            lng_cells: (360.0 / cell_deg).ceil() as i64,
            entries: HashMap::new(),
            cells: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lat_cell(&self, lat: f64) -> i64 {
        (((lat + 90.0) / self.cell_deg).floor() as i64).clamp(0, self.lat_cells - 1)
    }

    fn lng_cell(&self, lng: f64) -> i64 {
        (((lng + 180.0) / self.cell_deg).floor() as i64).rem_euclid(self.lng_cells)
    }

    fn cell_of(&self, p: GeoPoint) -> (i64, i64) {
        (self.lat_cell(p.lat()), self.lng_cell(p.lng()))
    }
}

impl<Id: Copy + Eq + Hash + Ord> JourneyIndex<Id> {
    /// Adds a journey. Returns `false` (and leaves the index untouched) when
    /// the id is already present.
    pub fn insert(&mut self, id: Id, endpoints: Endpoints) -> bool {
        if self.entries.contains_key(&id) {
            return false;
        }
        let cell = self.cell_of(endpoints.origin);
        self.entries.insert(id, endpoints);
        self.cells.entry(cell).or_default().push(id);
        true
    }

    pub fn get(&self, id: &Id) -> Option<&Endpoints> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &Id) -> bool {
        self.entries.contains_key(id)
    }

    /// Ids whose origin and destination are both within `radius_m` of the
    /// corresponding endpoint of `probe`, sorted ascending.
    pub fn within(&self, probe: &Endpoints, radius_m: f64) -> Vec<Id> {
        let mut out: Vec<Id> = self
            .candidates(probe.origin, radius_m)
            .filter(|id| within_radius(probe, &self.entries[id], radius_m))
            .collect();
        out.sort_unstable();
        out
    }

    /// The community of `viewer`: every indexed journey bundled with it.
    pub fn community(&self, viewer: &Endpoints, cfg: &CommunityConfig) -> Vec<Id> {
        self.within(viewer, community_radius(viewer.length_m(), cfg))
    }

    fn candidates<'a>(&'a self, center: GeoPoint, radius_m: f64) -> Box<dyn Iterator<Item = Id> + 'a> {
        match self.cell_window(center, radius_m) {
            Some((lat_range, lng_range)) => {
                let (lat_lo, lat_hi) = lat_range;
                let cells = lat_range_len(lat_range) * lng_range.map_or(self.lng_cells, |(lo, hi)| hi - lo + 1);
                if cells as usize > self.entries.len() {
                    return Box::new(self.entries.keys().copied());
                }
                let lng_cells = self.lng_cells;
                let all_lng = 0..lng_cells;
                Box::new((lat_lo..=lat_hi).flat_map(move |la| {
                    let lngs: Box<dyn Iterator<Item = i64>> = match lng_range {
                        Some((lo, hi)) => Box::new((lo..=hi).map(move |c| c.rem_euclid(lng_cells))),
                        None => Box::new(all_lng.clone()),
                    };
                    lngs.filter_map(move |lo| self.cells.get(&(la, lo)))
                        .flat_map(|ids| ids.iter().copied())
                }))
            }
            None => Box::new(self.entries.keys().copied()),
        }
    }

    /// Cell window covering every point within `radius_m` of `center`.
    /// Longitude bounds are unwrapped (may exceed the cell count) and `None`
    /// means every longitude column. Returns `None` overall when the circle
    /// is large enough that a full scan is simpler.
    #[allow(clippy::type_complexity)]
    fn cell_window(&self, center: GeoPoint, radius_m: f64) -> Option<((i64, i64), Option<(i64, i64)>)> {
        // Pad the angular radius so float error never drops a boundary point.
        let delta = (radius_m / EARTH_RADIUS_M) * (1.0 + 1e-9) + 1e-12;
        if !delta.is_finite() || delta >= std::f64::consts::FRAC_PI_2 {
            return None;
        }
        let delta_deg = delta.to_degrees();
        let lat = center.lat();
        let lat_lo = self.lat_cell((lat - delta_deg).max(-90.0));
        let lat_hi = self.lat_cell((lat + delta_deg).min(90.0));

        let touches_pole = lat + delta_deg >= 90.0 || lat - delta_deg <= -90.0;
        let lng_range = if touches_pole {
            None
        } else {
            let ratio = delta.sin() / lat.to_radians().cos();
            if ratio >= 1.0 {
                None
            } else {
                // Pad for the same reason as above.
                let dlng = ratio.asin().to_degrees() * (1.0 + 1e-9) + 1e-9;
                if 2.0 * dlng >= 360.0 {
                    None
                } else {
                    let lo = ((center.lng() - dlng + 180.0) / self.cell_deg).floor() as i64;
                    let hi = ((center.lng() + dlng + 180.0) / self.cell_deg).floor() as i64;
                    if hi - lo + 1 >= self.lng_cells {
                        None
                    } else {
                        Some((lo, hi))
                    }
                }
            }
        };
        Some(((lat_lo, lat_hi), lng_range))
    }
}

fn lat_range_len((lo, hi): (i64, i64)) -> i64 {
    hi - lo + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::is_bundled;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(lat: f64, lng: f64) -> GeoPoint {
        GeoPoint::new(lat, lng).unwrap()
    }

    fn scan(items: &[(u32, Endpoints)], viewer: &Endpoints, cfg: &CommunityConfig) -> Vec<u32> {
        let mut v: Vec<u32> = items
            .iter()
            .filter(|(_, e)| is_bundled(viewer, e, cfg))
            .map(|(id, _)| *id)
            .collect();
        v.sort_unstable();
        v
    }

    #[test]
    fn empty_index_has_empty_community() {
        let idx: JourneyIndex<u32> = JourneyIndex::new();
        let j = Endpoints::new(pt(1.0, 1.0), pt(1.1, 1.1));
        assert!(idx.community(&j, &CommunityConfig::default()).is_empty());
    }

    #[test]
    fn identical_journey_is_found() {
        let mut idx = JourneyIndex::new();
        let j = Endpoints::new(pt(47.6, -122.3), pt(47.7, -122.2));
        assert!(idx.insert(7u32, j));
        assert_eq!(idx.community(&j, &CommunityConfig::default()), vec![7]);
    }

    #[test]
    fn duplicate_id_rejected() {
        let mut idx = JourneyIndex::new();
        let j = Endpoints::new(pt(0.0, 0.0), pt(0.0, 1.0));
        assert!(idx.insert(1u32, j));
        assert!(!idx.insert(1u32, j.reversed()));
        assert_eq!(idx.get(&1), Some(&j));
        assert_eq!(idx.len(), 1);
    }

    #[test]
    fn antimeridian_and_poles_match_scan() {
        let cfg = CommunityConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut idx = JourneyIndex::new();
        let mut items = Vec::new();
        for id in 0..3000u32 {
            let (lat, lng) = if id % 2 == 0 {
                (rng.random_range(-10.0..10.0), rng.random_range(179.0..180.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            } else {
                (rng.random_range(89.0..=90.0), rng.random_range(-180.0..180.0))
            };
            let o = pt(lat, lng);
            let d = pt(
                (lat + rng.random_range(-0.5..0.5f64)).clamp(-90.0, 90.0),
                lng,
            );
            let e = Endpoints::new(o, d);
            idx.insert(id, e);
            items.push((id, e));
        }
        for (_, viewer) in items.iter().step_by(37) {
            assert_eq!(idx.community(viewer, &cfg), scan(&items, viewer, &cfg));
        }
    }

    #[test]
    fn within_uses_both_endpoints() {
        let mut idx = JourneyIndex::new();
        let a = Endpoints::new(pt(10.0, 10.0), pt(10.0, 10.5));
        idx.insert(1u32, a);
        idx.insert(2u32, a.reversed());
        assert_eq!(idx.within(&a, 10.0), vec![1]);
    }
}
