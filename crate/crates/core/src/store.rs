//! Event-sourced state with an append-only journal.
//!
//! Every write runs under the state's write lock, stages events against the
//! current state, appends them to the journal as one record, and only then
//! applies them. A failed stage or a failed append leaves nothing behind.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SubsecRound, TimeDelta, Utc};
use parking_lot::{Mutex, RwLock, RwLockWriteGuard};
use serde::{Deserialize, Serialize};

use crate::engagement::UserStats;
use crate::geo::{CommunityConfig, Endpoints, JourneyIndex};
use crate::identity::{ApiToken, Pseudonym, UserRecord};
use crate::ids::{CheckinId, CommentId, JourneyId, NoteId, UserId};
use crate::journeys::{Checkin, Journey};
use crate::notes::{Comment, Note};
use crate::{Error, Result};

/// Journey identity radius: endpoints closer than this are the same place.
pub const DEFAULT_DEDUP_RADIUS_M: f64 = 10.0;

/// Deployment-wide rules the store applies when answering spatial queries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub community: CommunityConfig,
    pub dedup_radius_m: f64,
}

impl Default for Policy {
    fn default() -> Self {
        Policy {
            community: CommunityConfig::default(),
            dedup_radius_m: DEFAULT_DEDUP_RADIUS_M,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "data", rename_all = "snake_case")]
pub enum Event {
    UserRegistered(UserRecord),
    JourneyCreated(Journey),
    CheckedIn(Checkin),
    NoteComposed(Note),
    CommentAdded(Comment),
    SeedImported { digest: String },
}

/// Durable sink for committed events.
pub trait Journal: Send {
    /// Persists one batch. Must either store the whole batch or nothing.
    fn append(&mut self, batch: &[Event]) -> io::Result<()>;
}

/// Keeps nothing; state lives only as long as the process.
#[derive(Debug, Default)]
pub struct MemoryJournal;

impl Journal for MemoryJournal {
    fn append(&mut self, _batch: &[Event]) -> io::Result<()> {
        Ok(())
    }
}

/// One JSON array of events per line.
#[derive(Debug)]
pub struct FileJournal {
    file: File,
    path: PathBuf,
}

impl FileJournal {
    /// Opens (or creates) the journal and returns the batches already in it.
    /// A torn final line from an interrupted append is truncated away.
    pub fn open(path: &Path) -> Result<(Self, Vec<Event>)> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut events = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&mut file);
        let mut line = String::new();
        let mut lineno = 0;
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            lineno += 1;
            if !line.ends_with('\n') {
                break;
            }
            let batch: Vec<Event> =
                serde_json::from_str(line.trim_end()).map_err(|e| Error::CorruptJournal {
                    line: lineno,
                    reason: e.to_string(),
                })?;
            events.extend(batch);
            good_len += n as u64;
        }
        drop(reader);
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((
            FileJournal {
                file,
                path: path.to_owned(),
            },
            events,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Journal for FileJournal {
    fn append(&mut self, batch: &[Event]) -> io::Result<()> {
        let mut line = serde_json::to_vec(batch)?;
        line.push(b'\n');
        let before = self.file.metadata()?.len();
        let res = self.file.write_all(&line).and_then(|_| self.file.sync_data());
        if res.is_err() {
            // Drop whatever part of the line made it to disk.
            let _ = self.file.set_len(before);
        }
        res
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Everything the store knows, rebuilt from events.
#[derive(Debug, Default)]
pub struct State {
    policy: Policy,
    next_id: u64,
    last_at: Option<DateTime<Utc>>,
    users: HashMap<UserId, UserRecord>,
    by_pseudonym: HashMap<Pseudonym, UserId>,
    by_token: HashMap<ApiToken, UserId>,
    journeys: BTreeMap<JourneyId, Journey>,
    index: JourneyIndex<JourneyId>,
    checkins: BTreeMap<CheckinId, Checkin>,
    checkins_by_user: HashMap<UserId, Vec<CheckinId>>,
    checkins_by_journey: HashMap<JourneyId, Vec<CheckinId>>,
    current: HashMap<UserId, CheckinId>,
    stats: HashMap<UserId, UserStats>,
    notes: BTreeMap<NoteId, Note>,
    notes_by_journey: HashMap<JourneyId, Vec<NoteId>>,
    comments: BTreeMap<CommentId, Comment>,
    comments_by_note: HashMap<NoteId, Vec<CommentId>>,
    seed_digests: HashSet<String>,
}

impl State {
    fn new(policy: Policy) -> Self {
        State {
            policy,
            ..State::default()
        }
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn user(&self, id: UserId) -> Option<&UserRecord> {
        self.users.get(&id)
    }

    pub fn user_by_pseudonym(&self, p: &Pseudonym) -> Option<&UserRecord> {
        self.by_pseudonym.get(p).and_then(|id| self.users.get(id))
    }

    pub fn user_by_token(&self, t: &ApiToken) -> Option<&UserRecord> {
        self.by_token.get(t).and_then(|id| self.users.get(id))
    }

    pub fn users(&self) -> impl Iterator<Item = &UserRecord> {
        self.users.values()
    }

    pub fn journey(&self, id: JourneyId) -> Option<&Journey> {
        self.journeys.get(&id)
    }

    pub fn journeys(&self) -> impl Iterator<Item = &Journey> {
        self.journeys.values()
    }

    pub fn index(&self) -> &JourneyIndex<JourneyId> {
        &self.index
    }

    /// Journeys bundled with `viewer` under the store's community rules.
    pub fn community(&self, viewer: &Endpoints) -> Vec<JourneyId> {
        self.index.community(viewer, &self.policy.community)
    }

    pub fn checkin(&self, id: CheckinId) -> Option<&Checkin> {
        self.checkins.get(&id)
    }

    /// All check-ins in commit order.
    pub fn checkins(&self) -> impl Iterator<Item = &Checkin> {
        self.checkins.values()
    }

    /// A user's check-ins, oldest first.
    pub fn checkins_of(&self, user: UserId) -> impl Iterator<Item = &Checkin> {
        self.checkins_by_user
            .get(&user)
            .into_iter()
            .flatten()
            .map(|id| &self.checkins[id])
    }

    pub fn checkins_on(&self, journey: JourneyId) -> impl Iterator<Item = &Checkin> {
        self.checkins_by_journey
            .get(&journey)
            .into_iter()
            .flatten()
            .map(|id| &self.checkins[id])
    }

    pub fn current_checkin(&self, user: UserId) -> Option<&Checkin> {
        self.current.get(&user).map(|id| &self.checkins[id])
    }

    pub fn stats(&self, user: UserId) -> Option<&UserStats> {
        self.stats.get(&user)
    }

    pub fn note(&self, id: NoteId) -> Option<&Note> {
        self.notes.get(&id)
    }

    pub fn notes(&self) -> impl Iterator<Item = &Note> {
        self.notes.values()
    }

    pub fn notes_on(&self, journey: JourneyId) -> impl Iterator<Item = &Note> {
        self.notes_by_journey
            .get(&journey)
            .into_iter()
            .flatten()
            .map(|id| &self.notes[id])
    }

    /// Comments on a note, oldest first.
    pub fn comments_on(&self, note: NoteId) -> impl Iterator<Item = &Comment> {
        self.comments_by_note
            .get(&note)
            .into_iter()
            .flatten()
            .map(|id| &self.comments[id])
    }

    pub fn comment_count(&self, note: NoteId) -> usize {
        self.comments_by_note.get(&note).map_or(0, Vec::len)
    }

    pub fn has_seed(&self, digest: &str) -> bool {
        self.seed_digests.contains(digest)
    }

    fn bump(&mut self, id: u64, at: DateTime<Utc>) {
        self.next_id = self.next_id.max(id + 1);
        self.last_at = Some(self.last_at.map_or(at, |t| t.max(at)));
    }

    fn apply(&mut self, event: Event) -> Result<()> {
        let corrupt = |reason: String| Error::CorruptJournal { line: 0, reason };
        match event {
            Event::UserRegistered(user) => {
                if self.users.contains_key(&user.id) || self.by_pseudonym.contains_key(&user.pseudonym) {
                    return Err(corrupt(format!("duplicate user {}", user.id)));
                }
                self.bump(user.id.0, user.created_at);
                self.by_pseudonym.insert(user.pseudonym.clone(), user.id);
                self.by_token.insert(user.token.clone(), user.id);
                self.users.insert(user.id, user);
            }
            Event::JourneyCreated(journey) => {
                if !self.index.insert(journey.id, journey.endpoints()) {
                    return Err(corrupt(format!("duplicate journey {}", journey.id)));
                }
                self.bump(journey.id.0, journey.created_at);
                self.journeys.insert(journey.id, journey);
            }
            Event::CheckedIn(checkin) => {
                let length = self
                    .journeys
                    .get(&checkin.journey_id)
                    .ok_or_else(|| corrupt(format!("check-in on unknown journey {}", checkin.journey_id)))?
                    .length_m;
                self.bump(checkin.id.0, checkin.at);
                self.stats
                    .entry(checkin.user_id)
                    .or_default()
                    .record_checkin(&checkin, length);
                self.checkins_by_user.entry(checkin.user_id).or_default().push(checkin.id);
                self.checkins_by_journey.entry(checkin.journey_id).or_default().push(checkin.id);
                self.current.insert(checkin.user_id, checkin.id);
                self.checkins.insert(checkin.id, checkin);
            }
            Event::NoteComposed(note) => {
                if !self.journeys.contains_key(&note.journey_id) {
                    return Err(corrupt(format!("note on unknown journey {}", note.journey_id)));
                }
                self.bump(note.id.0, note.created_at);
                self.notes_by_journey.entry(note.journey_id).or_default().push(note.id);
                self.notes.insert(note.id, note);
            }
            Event::CommentAdded(comment) => {
                if !self.notes.contains_key(&comment.note_id) {
                    return Err(corrupt(format!("comment on unknown note {}", comment.note_id)));
                }
                self.bump(comment.id.0, comment.created_at);
                self.comments_by_note.entry(comment.note_id).or_default().push(comment.id);
                self.comments.insert(comment.id, comment);
            }
            Event::SeedImported { digest } => {
                self.seed_digests.insert(digest);
            }
        }
        Ok(())
    }
}

/// Pending events of one write, plus id and timestamp allocation.
pub struct Batch {
    events: Vec<Event>,
    next_id: u64,
    now: DateTime<Utc>,
}

impl Batch {
    pub fn next_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Commit timestamp shared by every event in the batch.
    pub fn now(&self) -> DateTime<Utc> {
        self.now
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }
}

pub struct Store {
    state: RwLock<State>,
    journal: Mutex<Box<dyn Journal>>,
    clock: Box<dyn Clock>,
}

impl Store {
    pub fn in_memory(policy: Policy) -> Self {
        Store::with_journal(policy, Box::new(MemoryJournal), Vec::new())
            .expect("empty history always applies")
    }

    /// File-backed store; replays whatever the journal already holds.
    pub fn open(path: &Path, policy: Policy) -> Result<Self> {
        let (journal, history) = FileJournal::open(path)?;
        Store::with_journal(policy, Box::new(journal), history)
    }

    pub fn with_journal(policy: Policy, journal: Box<dyn Journal>, history: Vec<Event>) -> Result<Self> {
        let mut state = State::new(policy);
        for event in history {
            state.apply(event)?;
        }
        Ok(Store {
            state: RwLock::new(state),
            journal: Mutex::new(journal),
            clock: Box::new(SystemClock),
        })
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn policy(&self) -> Policy {
        self.state.read().policy
    }

    /// Runs `f` against a consistent snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&State) -> T) -> T {
        f(&self.state.read())
    }

    /// Stages and commits one atomic batch.
    pub fn write<T>(&self, stage: impl FnOnce(&State, &mut Batch) -> Result<T>) -> Result<T> {
        self.write_then(stage, |_, staged| staged)
    }

    /// Like [`Store::write`], then runs `finish` on the post-commit state
    /// before any other writer can get in.
    pub fn write_then<P, T>(
        &self,
        stage: impl FnOnce(&State, &mut Batch) -> Result<P>,
        finish: impl FnOnce(&State, P) -> T,
    ) -> Result<T> {
        let mut guard = self.state.write();
        let mut now = self.clock.now().trunc_subsecs(6);
        if let Some(last) = guard.last_at {
            if now <= last {
                now = last + TimeDelta::microseconds(1);
            }
        }
        let mut batch = Batch {
            events: Vec::new(),
            next_id: guard.next_id.max(1),
            now,
        };
        let staged = stage(&guard, &mut batch)?;
        if !batch.events.is_empty() {
            self.journal.lock().append(&batch.events)?;
            for event in batch.events {
                guard.apply(event)?;
            }
        }
        let guard = RwLockWriteGuard::downgrade(guard);
        Ok(finish(&guard, staged))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use crate::journeys::TransitMode;

    fn journey(id: u64, at: DateTime<Utc>) -> Journey {
        let a = GeoPoint::new(1.0, 1.0).unwrap();
        let b = GeoPoint::new(1.0, 1.1).unwrap();
        Journey::new(JourneyId(id), Endpoints::new(a, b), "a".into(), "b".into(), UserId(0), at)
    }

    #[test]
    fn timestamps_strictly_increase() {
        struct Frozen;
        impl Clock for Frozen {
            fn now(&self) -> DateTime<Utc> {
                DateTime::UNIX_EPOCH
            }
        }
        let store = Store::in_memory(Policy::default()).with_clock(Box::new(Frozen));
        let mut times = Vec::new();
        for _ in 0..3 {
            let t = store
                .write(|_, b| {
                    let id = b.next_id();
                    let now = b.now();
                    b.push(Event::JourneyCreated(journey(id, now)));
                    Ok(now)
                })
                .unwrap();
            times.push(t);
        }
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn failed_stage_leaves_no_trace() {
        let store = Store::in_memory(Policy::default());
        let res: Result<()> = store.write(|_, b| {
            let id = b.next_id();
            let now = b.now();
            b.push(Event::JourneyCreated(journey(id, now)));
            Err(Error::NotFound("thing"))
        });
        assert!(res.is_err());
        assert_eq!(store.read(|s| s.journeys().count()), 0);
    }

    struct Broken;
    impl Journal for Broken {
        fn append(&mut self, _: &[Event]) -> io::Result<()> {
            Err(io::Error::other("disk full"))
        }
    }

    #[test]
    fn failed_append_leaves_no_trace() {
        let store = Store::with_journal(Policy::default(), Box::new(Broken), Vec::new()).unwrap();
        let res = store.write(|_, b| {
            let id = b.next_id();
            let now = b.now();
            b.push(Event::JourneyCreated(journey(id, now)));
            Ok(())
        });
        assert!(matches!(res, Err(Error::Journal(_))));
        assert_eq!(store.read(|s| s.journeys().count()), 0);
    }

    #[test]
    fn file_journal_replays_and_drops_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        {
            let store = Store::open(&path, Policy::default()).unwrap();
            store
                .write(|_, b| {
                    let id = b.next_id();
                    let now = b.now();
                    b.push(Event::JourneyCreated(journey(id, now)));
                    let cid = b.next_id();
                    b.push(Event::CheckedIn(Checkin {
                        id: CheckinId(cid),
                        user_id: UserId(0),
                        journey_id: JourneyId(id),
                        mode: TransitMode::Car,
                        at: now,
                        trailblazer: true,
                    }));
                    Ok(())
                })
                .unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"[{\"event\":\"journey_cre").unwrap();
        drop(f);

        let store = Store::open(&path, Policy::default()).unwrap();
        assert_eq!(store.read(|s| s.journeys().count()), 1);
        assert_eq!(store.read(|s| s.current_checkin(UserId(0)).map(|c| c.mode)), Some(TransitMode::Car));
        // Ids continue after the replayed ones.
        let next = store.write(|_, b| Ok(b.next_id())).unwrap();
        assert_eq!(next, 3);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        std::fs::write(&path, "not json\n[]\n").unwrap();
        assert!(matches!(
            Store::open(&path, Policy::default()),
            Err(Error::CorruptJournal { line: 1, .. })
        ));
    }
}
