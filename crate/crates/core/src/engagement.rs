//! Travel statistics and the welcome message shown on check-in.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::JourneyId;
use crate::journeys::{Checkin, TransitMode};
use crate::notes::NoteCategory;

/// 40 km/h.
pub const DEFAULT_BIRD_SPEED_MPS: f64 = 40_000.0 / 3_600.0;

/// A distance held as whole millimeters so totals add up exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distance(u64);

impl Distance {
    pub const ZERO: Distance = Distance(0);

    pub fn from_meters(m: f64) -> Self {
        Distance((m.max(0.0) * 1000.0).round() as u64)
    }

    pub fn from_millimeters(mm: u64) -> Self {
        Distance(mm)
    }

    pub fn millimeters(self) -> u64 {
        self.0
    }

    pub fn meters(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl std::ops::Add for Distance {
    type Output = Distance;

    fn add(self, rhs: Distance) -> Distance {
        Distance(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Distance {
    fn add_assign(&mut self, rhs: Distance) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Distance {
    fn sum<I: Iterator<Item = Distance>>(iter: I) -> Distance {
        iter.fold(Distance::ZERO, |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ModeTotals {
    pub count: u64,
    pub distance: Distance,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct JourneyStats {
    pub trips: u64,
    pub modes: BTreeMap<TransitMode, ModeTotals>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct UserStats {
    pub modes: BTreeMap<TransitMode, ModeTotals>,
    pub journeys: BTreeMap<JourneyId, JourneyStats>,
}

impl UserStats {
    pub fn record_checkin(&mut self, checkin: &Checkin, journey_length_m: f64) {
        let d = Distance::from_meters(journey_length_m);
        let total = self.modes.entry(checkin.mode).or_default();
        total.count += 1;
        total.distance += d;
        let j = self.journeys.entry(checkin.journey_id).or_default();
        j.trips += 1;
        let jm = j.modes.entry(checkin.mode).or_default();
        jm.count += 1;
        jm.distance += d;
    }

    /// Stats rebuilt from a full check-in log.
    pub fn from_log<'a>(log: impl IntoIterator<Item = (&'a Checkin, f64)>) -> Self {
        log.into_iter().fold(UserStats::default(), |mut s, (c, len)| {
            s.record_checkin(c, len);
            s
        })
    }

    pub fn total_checkins(&self) -> u64 {
        self.modes.values().map(|t| t.count).sum()
    }

    pub fn total_distance(&self) -> Distance {
        self.modes.values().map(|t| t.distance).sum()
    }
}

/// Functional form of [`UserStats::record_checkin`].
pub fn record_checkin_stats(mut stats: UserStats, checkin: &Checkin, journey_length_m: f64) -> UserStats {
    stats.record_checkin(checkin, journey_length_m);
    stats
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: TransitMode,
    pub count: u64,
    pub distance_m: f64,
}

/// Per-mode totals in mode order, skipping modes never used.
pub fn mode_summary(stats: &UserStats) -> Vec<ModeSummary> {
    stats
        .modes
        .iter()
        .filter(|(_, t)| t.count > 0)
        .map(|(mode, t)| ModeSummary {
            mode: *mode,
            count: t.count,
            distance_m: t.distance.meters(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceUnit {
    #[default]
    Metric,
    Imperial,
}

const METERS_PER_MILE: f64 = 1_609.344;

impl DistanceUnit {
    pub fn format(self, meters: f64) -> String {
        match self {
            DistanceUnit::Metric => format!("{} km", trim_number(meters / 1000.0)),
            DistanceUnit::Imperial => format!("{} miles", trim_number(meters / METERS_PER_MILE)),
        }
    }
}

fn trim_number(x: f64) -> String {
    if (x - x.round()).abs() < 0.05 {
        format!("{}", x.round() as i64)
    } else {
        format!("{x:.1}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Milestone {
    /// Every tenth trip on the same journey.
    NthTrip { trips: u64 },
    /// Cumulative distance for a mode crossed a power-of-ten kilometers.
    ModeDistance { mode: TransitMode, km: u64 },
}

/// Milestones reached by the check-in that took a journey's trip count to
/// `trips` and a mode's total from `before` to `after`.
pub fn milestones(mode: TransitMode, trips: u64, before: Distance, after: Distance) -> Vec<Milestone> {
    let mut out = Vec::new();
    if trips > 0 && trips.is_multiple_of(10) {
        out.push(Milestone::NthTrip { trips });
    }
    let mut km: u64 = 1;
    while km.saturating_mul(1_000_000) <= after.millimeters() {
        let mm = km * 1_000_000;
        if before.millimeters() < mm {
            out.push(Milestone::ModeDistance { mode, km });
        }
        km = match km.checked_mul(10) {
            Some(k) => k,
            None => break,
        };
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WelcomeKind {
    Stats,
    Haiku,
    FunFact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WelcomeMessage {
    pub kind: WelcomeKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Haiku {
    pub lines: [String; 3],
    pub section: NoteCategory,
}

impl Haiku {
    pub fn text(&self) -> String {
        self.lines.join("\n")
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("haiku record {record}: {reason}")]
    Record { record: usize, reason: String },
    #[error("corpus has {total} haikus and {min_per_section} in its thinnest section; need 45 and 3")]
    Coverage { total: usize, min_per_section: usize },
}

/// Travel haikus, each tagged with the note section that inspired it.
///
/// File format: three lines of verse, a `[section-slug]` line, then a blank
/// line before the next record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HaikuCorpus {
    entries: Vec<Haiku>,
}

impl HaikuCorpus {
    pub fn shipped() -> Self {
        HaikuCorpus::parse(include_str!("../data/haiku.txt")).expect("shipped corpus parses")
    }

    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut entries = Vec::new();
        let mut block: Vec<&str> = Vec::new();
        let lines = text.lines().map(str::trim_end).chain(std::iter::once(""));
        for line in lines {
            if !line.trim().is_empty() {
                block.push(line);
                continue;
            }
            if block.is_empty() {
                continue;
            }
            let record = entries.len() + 1;
            let err = |reason: String| CorpusError::Record { record, reason };
            if block.len() != 4 {
                return Err(err(format!("expected 4 lines, found {}", block.len())));
            }
            let tag = block[3].trim();
            let slug = tag
                .strip_prefix('[')
                .and_then(|t| t.strip_suffix(']'))
                .ok_or_else(|| err(format!("bad section tag {tag:?}")))?;
            let section = slug.parse().map_err(|_| err(format!("unknown section {slug:?}")))?;
            entries.push(Haiku {
                lines: [block[0].into(), block[1].into(), block[2].into()],
                section,
            });
            block.clear();
        }
        Ok(HaikuCorpus { entries })
    }

    pub fn entries(&self) -> &[Haiku] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// At least 45 haikus with at least 3 for every section.
    pub fn check_coverage(&self) -> Result<(), CorpusError> {
        let min = NoteCategory::ALL
            .iter()
            .map(|c| self.entries.iter().filter(|h| h.section == *c).count())
            .min()
            .unwrap_or(0);
        if self.entries.len() < 45 || min < 3 {
            return Err(CorpusError::Coverage {
                total: self.entries.len(),
                min_per_section: min,
            });
        }
        Ok(())
    }
}

/// How long a bird would take to fly `length_m`, in words.
pub fn fun_fact(length_m: f64, bird_speed_mps: f64) -> String {
    if length_m <= 0.0 {
        return "A bird would fly this journey in no time at all.".to_owned();
    }
    format!(
        "A bird flying at {} km/h would cross this journey in {}.",
        trim_number(bird_speed_mps * 3.6),
        humanize_seconds(length_m / bird_speed_mps)
    )
}

fn plural(n: i64, unit: &str) -> String {
    if n == 1 {
        format!("about 1 {unit}")
    } else {
        format!("about {n} {unit}s")
    }
}

fn humanize_seconds(secs: f64) -> String {
    if secs < 30.0 {
        return "less than a minute".to_owned();
    }
    let minutes = (secs / 60.0).round() as i64;
    if minutes < 60 {
        return plural(minutes, "minute");
    }
    let hours = (secs / 3600.0).round() as i64;
    if hours < 48 {
        return plural(hours, "hour");
    }
    plural((secs / 86_400.0).round() as i64, "day")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WelcomeContext {
    pub journey_length_m: f64,
    /// Including the check-in being welcomed.
    pub trips_by_user: u64,
    pub other_travellers: usize,
    pub milestones: Vec<Milestone>,
}

#[derive(Debug, Clone)]
pub struct WelcomeEngine {
    pub corpus: HaikuCorpus,
    pub bird_speed_mps: f64,
    pub units: DistanceUnit,
}

impl WelcomeEngine {
    pub fn new(corpus: HaikuCorpus) -> Self {
        WelcomeEngine {
            corpus,
            bird_speed_mps: DEFAULT_BIRD_SPEED_MPS,
            units: DistanceUnit::Metric,
        }
    }

    /// Picks one of the three kinds uniformly. An empty corpus turns a haiku
    /// draw into a stats message.
    pub fn select<R: Rng + ?Sized>(&self, ctx: &WelcomeContext, rng: &mut R) -> WelcomeMessage {
        let kind = match rng.random_range(0..3u8) {
            0 => WelcomeKind::Stats,
            1 => WelcomeKind::Haiku,
            _ => WelcomeKind::FunFact,
        };
        match kind {
            WelcomeKind::Haiku if !self.corpus.is_empty() => {
                let h = &self.corpus.entries[rng.random_range(0..self.corpus.len())];
                WelcomeMessage {
                    kind,
                    text: h.text(),
                }
            }
            WelcomeKind::FunFact => WelcomeMessage {
                kind,
                text: fun_fact(ctx.journey_length_m, self.bird_speed_mps),
            },
            _ => WelcomeMessage {
                kind: WelcomeKind::Stats,
                text: self.stats_text(ctx),
            },
        }
    }

    fn stats_text(&self, ctx: &WelcomeContext) -> String {
        let times = if ctx.trips_by_user == 1 { "time" } else { "times" };
        let others = if ctx.other_travellers == 1 {
            "other traveller has"
        } else {
            "other travellers have"
        };
        let mut text = format!(
            "You have travelled this journey {} {times}, and {} {others} been here too.",
            ctx.trips_by_user, ctx.other_travellers
        );
        for m in &ctx.milestones {
            text.push(' ');
            text.push_str(&self.milestone_text(m));
        }
        text
    }

    fn milestone_text(&self, m: &Milestone) -> String {
        match m {
            Milestone::NthTrip { trips } => format!("Milestone: trip number {trips} on this journey!"),
            Milestone::ModeDistance { mode, km } => format!(
                "Milestone: over {} by {mode}!",
                self.units.format(*km as f64 * 1000.0)
            ),
        }
    }
}

impl fmt::Display for WelcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WelcomeKind::Stats => "stats",
            WelcomeKind::Haiku => "haiku",
            WelcomeKind::FunFact => "fun-fact",
        })
    }
}
