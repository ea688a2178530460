//! Journeys, check-ins and the per-user journey history.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engagement::{milestones, Distance, WelcomeContext, WelcomeEngine, WelcomeMessage};
use crate::geo::{haversine_distance, Endpoints, GeoPoint};
use crate::ids::{CheckinId, JourneyId, UserId};
use crate::notes::{feed_for, NoteView};
use crate::store::{Batch, Event, State, Store};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitMode {
    Car,
    Bus,
    Train,
    Airplane,
    Walk,
    Bicycle,
    Ferry,
    Motorcycle,
    Skateboard,
    Horse,
    Wheelchair,
    Rocket,
}

impl TransitMode {
    pub const ALL: [TransitMode; 12] = [
        TransitMode::Car,
        TransitMode::Bus,
        TransitMode::Train,
        TransitMode::Airplane,
        TransitMode::Walk,
        TransitMode::Bicycle,
        TransitMode::Ferry,
        TransitMode::Motorcycle,
        TransitMode::Skateboard,
        TransitMode::Horse,
        TransitMode::Wheelchair,
        TransitMode::Rocket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransitMode::Car => "car",
            TransitMode::Bus => "bus",
            TransitMode::Train => "train",
            TransitMode::Airplane => "airplane",
            TransitMode::Walk => "walk",
            TransitMode::Bicycle => "bicycle",
            TransitMode::Ferry => "ferry",
            TransitMode::Motorcycle => "motorcycle",
            TransitMode::Skateboard => "skateboard",
            TransitMode::Horse => "horse",
            TransitMode::Wheelchair => "wheelchair",
            TransitMode::Rocket => "rocket",
        }
    }

    /// Icon identifier shown as the author's avatar on notes.
    pub fn avatar(self) -> &'static str {
        match self {
            TransitMode::Car => "avatar-car",
            TransitMode::Bus => "avatar-bus",
            TransitMode::Train => "avatar-train",
            TransitMode::Airplane => "avatar-airplane",
            TransitMode::Walk => "avatar-walk",
            TransitMode::Bicycle => "avatar-bicycle",
            TransitMode::Ferry => "avatar-ferry",
            TransitMode::Motorcycle => "avatar-motorcycle",
            TransitMode::Skateboard => "avatar-skateboard",
            TransitMode::Horse => "avatar-horse",
            TransitMode::Wheelchair => "avatar-wheelchair",
            TransitMode::Rocket => "avatar-rocket",
        }
    }
}

impl fmt::Display for TransitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransitMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid("mode", format!("unknown transit mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Journey {
    pub id: JourneyId,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub origin_label: String,
    pub destination_label: String,
    /// Crow-flies length in meters.
    pub length_m: f64,
    pub created_by: UserId,
    pub created_at: DateTime<Utc>,
}

impl Journey {
    pub fn new(
        id: JourneyId,
        endpoints: Endpoints,
        origin_label: String,
        destination_label: String,
        created_by: UserId,
        created_at: DateTime<Utc>,
    ) -> Self {
        Journey {
            id,
            origin: endpoints.origin,
            destination: endpoints.destination,
            origin_label,
            destination_label,
            length_m: endpoints.length_m(),
            created_by,
            created_at,
        }
    }

    pub fn endpoints(&self) -> Endpoints {
        Endpoints::new(self.origin, self.destination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkin {
    pub id: CheckinId,
    pub user_id: UserId,
    pub journey_id: JourneyId,
    pub mode: TransitMode,
    pub at: DateTime<Utc>,
    pub trailblazer: bool,
}

/// Where a check-in goes: a (possibly new) pair of endpoints, or a journey
/// the user has been on before.
#[derive(Debug, Clone, PartialEq)]
pub enum CheckinTarget {
    Endpoints {
        endpoints: Endpoints,
        origin_label: Option<String>,
        destination_label: Option<String>,
    },
    Previous(JourneyId),
}

impl CheckinTarget {
    /// Builds a target from loosely typed request fields.
    pub fn from_parts(
        origin: Option<GeoPoint>,
        destination: Option<GeoPoint>,
        origin_label: Option<String>,
        destination_label: Option<String>,
        previous: Option<JourneyId>,
    ) -> Result<Self> {
        match (origin, destination, previous) {
            (Some(o), Some(d), None) => Ok(CheckinTarget::Endpoints {
                endpoints: Endpoints::new(o, d),
                origin_label,
                destination_label,
            }),
            (None, None, Some(id)) => Ok(CheckinTarget::Previous(id)),
            (None, None, None) => Err(Error::invalid(
                "checkin",
                "either origin and destination or previous_journey_id is required",
            )),
            (Some(_), Some(_), Some(_)) => Err(Error::invalid(
                "checkin",
                "give endpoints or previous_journey_id, not both",
            )),
            _ => Err(Error::invalid("checkin", "origin and destination go together")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckinRequest {
    pub target: CheckinTarget,
    pub mode: TransitMode,
}

/// A journey as one user sees it. Carries no creator identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JourneyView {
    pub journey_id: JourneyId,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub origin_label: String,
    pub destination_label: String,
    pub length_m: f64,
    pub your_trips: u64,
    pub your_modes: BTreeMap<TransitMode, u64>,
    /// Distinct other users who checked in anywhere in this community.
    pub other_travellers: usize,
    pub community_size: usize,
}

impl JourneyView {
    pub fn endpoints(&self) -> Endpoints {
        Endpoints::new(self.origin, self.destination)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckinResult {
    pub checkin: Checkin,
    pub journey: JourneyView,
    pub welcome: WelcomeMessage,
    pub trailblazer: bool,
    pub feed: Vec<NoteView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JourneyCard {
    pub journey_id: JourneyId,
    pub origin_label: String,
    pub destination_label: String,
    pub trips: u64,
    pub modes: BTreeMap<TransitMode, u64>,
    pub last_checkin_at: DateTime<Utc>,
}

fn label_or_coords(label: Option<String>, p: GeoPoint) -> String {
    match label {
        Some(l) if !l.trim().is_empty() => l.trim().to_owned(),
        _ => p.to_string(),
    }
}

/// Finds the journey these endpoints refer to, staging a new one if none is
/// within the dedup radius. Ties go to the smaller summed endpoint distance,
/// then to the older journey.
pub(crate) fn resolve_journey(
    state: &State,
    batch: &mut Batch,
    endpoints: Endpoints,
    origin_label: Option<String>,
    destination_label: Option<String>,
    creator: UserId,
) -> Journey {
    let best = state
        .index()
        .within(&endpoints, state.policy().dedup_radius_m)
        .into_iter()
        .filter_map(|id| state.journey(id))
        .min_by(|a, b| {
            let da = haversine_distance(a.origin, endpoints.origin)
                + haversine_distance(a.destination, endpoints.destination);
            let db = haversine_distance(b.origin, endpoints.origin)
                + haversine_distance(b.destination, endpoints.destination);
            da.total_cmp(&db)
                .then(a.created_at.cmp(&b.created_at))
                .then(a.id.cmp(&b.id))
        });
    if let Some(journey) = best {
        return journey.clone();
    }
    let journey = Journey::new(
        JourneyId(batch.next_id()),
        endpoints,
        label_or_coords(origin_label, endpoints.origin),
        label_or_coords(destination_label, endpoints.destination),
        creator,
        batch.now(),
    );
    batch.push(Event::JourneyCreated(journey.clone()));
    journey
}

/// Id of the journey with these endpoints, creating it if needed.
pub fn canonicalize_journey(
    store: &Store,
    origin: GeoPoint,
    destination: GeoPoint,
    origin_label: Option<String>,
    destination_label: Option<String>,
    creator: UserId,
) -> Result<JourneyId> {
    store.write(|state, batch| {
        Ok(resolve_journey(
            state,
            batch,
            Endpoints::new(origin, destination),
            origin_label,
            destination_label,
            creator,
        )
        .id)
    })
}

/// True when nobody else has checked in anywhere in the journey's community
/// and the user has never checked in to this journey.
pub fn is_trailblazer(state: &State, journey: &Journey, user: UserId) -> bool {
    if state.checkins_on(journey.id).any(|c| c.user_id == user) {
        return false;
    }
    !state
        .community(&journey.endpoints())
        .into_iter()
        .any(|j| state.checkins_on(j).any(|c| c.user_id != user))
}

pub(crate) fn journey_view(state: &State, journey: &Journey, user: UserId) -> JourneyView {
    let community = state.community(&journey.endpoints());
    let others: HashSet<UserId> = community
        .iter()
        .flat_map(|j| state.checkins_on(*j))
        .map(|c| c.user_id)
        .filter(|u| *u != user)
        .collect();
    let per_journey = state.stats(user).and_then(|s| s.journeys.get(&journey.id));
    JourneyView {
        journey_id: journey.id,
        origin: journey.origin,
        destination: journey.destination,
        origin_label: journey.origin_label.clone(),
        destination_label: journey.destination_label.clone(),
        length_m: journey.length_m,
        your_trips: per_journey.map_or(0, |j| j.trips),
        your_modes: per_journey
            .map(|j| j.modes.iter().map(|(m, t)| (*m, t.count)).collect())
            .unwrap_or_default(),
        other_travellers: others.len(),
        community_size: community.len(),
    }
}

/// Checks `user` in. Any earlier current check-in is replaced.
pub fn check_in<R: Rng + ?Sized>(
    store: &Store,
    user: UserId,
    request: CheckinRequest,
    welcome: &WelcomeEngine,
    rng: &mut R,
) -> Result<CheckinResult> {
    let mode = request.mode;
    store.write_then(
        |state, batch| {
            state.user(user).ok_or(Error::NotFound("user"))?;
            let journey = match request.target {
                CheckinTarget::Endpoints {
                    endpoints,
                    origin_label,
                    destination_label,
                } => resolve_journey(state, batch, endpoints, origin_label, destination_label, user),
                CheckinTarget::Previous(id) => {
                    state.journey(id).cloned().ok_or(Error::NotFound("journey"))?
                }
            };
            let trailblazer = is_trailblazer(state, &journey, user);
            let prev_mode_distance = state
                .stats(user)
                .and_then(|s| s.modes.get(&mode))
                .map_or(Distance::ZERO, |t| t.distance);
            let checkin = Checkin {
                id: CheckinId(batch.next_id()),
                user_id: user,
                journey_id: journey.id,
                mode,
                at: batch.now(),
                trailblazer,
            };
            batch.push(Event::CheckedIn(checkin.clone()));
            Ok((checkin, journey, prev_mode_distance))
        },
        |state, (checkin, journey, prev_mode_distance)| {
            let view = journey_view(state, &journey, user);
            let new_mode_distance = state
                .stats(user)
                .and_then(|s| s.modes.get(&mode))
                .map_or(Distance::ZERO, |t| t.distance);
            let ctx = WelcomeContext {
                journey_length_m: journey.length_m,
                trips_by_user: view.your_trips,
                other_travellers: view.other_travellers,
                milestones: milestones(mode, view.your_trips, prev_mode_distance, new_mode_distance),
            };
            let message = welcome.select(&ctx, rng);
            let feed = feed_for(state, &journey);
            CheckinResult {
                trailblazer: checkin.trailblazer,
                checkin,
                journey: view,
                welcome: message,
                feed,
            }
        },
    )
}

/// The user's current check-in and its journey, if any.
pub fn current(store: &Store, user: UserId) -> Option<(Checkin, JourneyView)> {
    store.read(|state| {
        let checkin = state.current_checkin(user)?.clone();
        let journey = state.journey(checkin.journey_id)?;
        let view = journey_view(state, journey, user);
        Some((checkin, view))
    })
}

/// One card per journey the user has been on, most recent first.
pub fn journey_history(store: &Store, user: UserId) -> Vec<JourneyCard> {
    store.read(|state| {
        let mut cards: HashMap<JourneyId, (CheckinId, JourneyCard)> = HashMap::new();
        for c in state.checkins_of(user) {
            let (last, card) = cards.entry(c.journey_id).or_insert_with(|| {
                let j = state.journey(c.journey_id).expect("check-ins reference journeys");
                (
                    c.id,
                    JourneyCard {
                        journey_id: j.id,
                        origin_label: j.origin_label.clone(),
                        destination_label: j.destination_label.clone(),
                        trips: 0,
                        modes: BTreeMap::new(),
                        last_checkin_at: c.at,
                    },
                )
            });
            card.trips += 1;
            *card.modes.entry(c.mode).or_default() += 1;
            if c.id >= *last {
                *last = c.id;
                card.last_checkin_at = c.at;
            }
        }
        let mut cards: Vec<_> = cards.into_values().collect();
        cards.sort_by_key(|(last, _)| std::cmp::Reverse(*last));
        cards.into_iter().map(|(_, card)| card).collect()
    })
}
