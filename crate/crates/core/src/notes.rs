//! Notes left on journeys, their comments, and the read-time visibility rule.
//!
//! A note belongs to the journey it was written on. Whether someone can see
//! it is decided when they read: the note's journey has to be in the
//! community of the reader's current journey.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geo::{is_bundled, Endpoints};
use crate::identity::{ApiToken, Pseudonym, UserRecord};
use crate::ids::{CommentId, JourneyId, NoteId, UserId};
use crate::journeys::{resolve_journey, Journey, TransitMode};
use crate::store::{Event, State, Store};
use crate::{Error, Result};

pub const MAX_TEXT_CHARS: usize = 250;

/// Shown instead of a pseudonym on anonymous notes and comments.
pub const ANONYMOUS: &str = "anonymous";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoteCategory {
    #[default]
    NotesAndVisitors,
    SecretsAndStories,
    LoveAndHate,
    MissedConnections,
    TipsAndTricks,
}

impl NoteCategory {
    pub const ALL: [NoteCategory; 5] = [
        NoteCategory::NotesAndVisitors,
        NoteCategory::SecretsAndStories,
        NoteCategory::LoveAndHate,
        NoteCategory::MissedConnections,
        NoteCategory::TipsAndTricks,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            NoteCategory::NotesAndVisitors => "notes-and-visitors",
            NoteCategory::SecretsAndStories => "secrets-and-stories",
            NoteCategory::LoveAndHate => "love-and-hate",
            NoteCategory::MissedConnections => "missed-connections",
            NoteCategory::TipsAndTricks => "tips-and-tricks",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            NoteCategory::NotesAndVisitors => "Notes & Visitors",
            NoteCategory::SecretsAndStories => "Secrets & Stories",
            NoteCategory::LoveAndHate => "Love & Hate",
            NoteCategory::MissedConnections => "Missed Connections",
            NoteCategory::TipsAndTricks => "Tips & Tricks",
        }
    }

    pub fn color_tag(self) -> &'static str {
        match self {
            NoteCategory::NotesAndVisitors => "sky",
            NoteCategory::SecretsAndStories => "dusk",
            NoteCategory::LoveAndHate => "ember",
            NoteCategory::MissedConnections => "fern",
            NoteCategory::TipsAndTricks => "sand",
        }
    }
}

impl fmt::Display for NoteCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for NoteCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NoteCategory::ALL
            .into_iter()
            .find(|c| c.slug() == s)
            .ok_or_else(|| Error::invalid("category", format!("unknown category {s:?}")))
    }
}

/// Trims trailing whitespace and enforces 1..=250 Unicode scalar values.
pub fn validate_text(text: &str) -> Result<String> {
    let text = text.trim_end();
    let chars = text.chars().count();
    if chars == 0 {
        return Err(Error::invalid("text", "empty"));
    }
    if chars > MAX_TEXT_CHARS {
        return Err(Error::invalid(
            "text",
            format!("{chars} characters, limit is {MAX_TEXT_CHARS}"),
        ));
    }
    Ok(text.to_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub id: NoteId,
    pub journey_id: JourneyId,
    /// Kept even for anonymous notes; only views drop it.
    pub author_id: UserId,
    pub anonymous: bool,
    pub category: NoteCategory,
    pub text: String,
    pub created_at: DateTime<Utc>,
    /// Mode of the author's check-in when writing. Seeded notes have none.
    pub mode: Option<TransitMode>,
    #[serde(default)]
    pub seeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: CommentId,
    pub note_id: NoteId,
    pub author_id: UserId,
    pub anonymous: bool,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

/// What readers see of a note.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteView {
    pub note_id: NoteId,
    pub author: String,
    pub mode: Option<TransitMode>,
    pub avatar: Option<&'static str>,
    pub category: NoteCategory,
    pub color_tag: &'static str,
    pub text: String,
    pub created_at: DateTime<Utc>,
    pub comment_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommentView {
    pub comment_id: CommentId,
    pub author: String,
    pub text: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoteDetail {
    pub note: NoteView,
    /// Oldest first.
    pub comments: Vec<CommentView>,
}

fn display_author(state: &State, author: UserId, anonymous: bool) -> String {
    if anonymous {
        return ANONYMOUS.to_owned();
    }
    state
        .user(author)
        .map_or_else(|| ANONYMOUS.to_owned(), |u| u.pseudonym.to_string())
}

pub fn note_view(state: &State, note: &Note) -> NoteView {
    NoteView {
        note_id: note.id,
        author: display_author(state, note.author_id, note.anonymous),
        mode: note.mode,
        avatar: note.mode.map(TransitMode::avatar),
        category: note.category,
        color_tag: note.category.color_tag(),
        text: note.text.clone(),
        created_at: note.created_at,
        comment_count: state.comment_count(note.id),
    }
}

/// Notes on every journey in `journey`'s community, newest first.
pub fn feed_for(state: &State, journey: &Journey) -> Vec<NoteView> {
    let mut notes: Vec<&Note> = state
        .community(&journey.endpoints())
        .into_iter()
        .flat_map(|j| state.notes_on(j))
        .collect();
    notes.sort_by_key(|n| std::cmp::Reverse((n.created_at, n.id)));
    notes.into_iter().map(|n| note_view(state, n)).collect()
}

fn current_journey(state: &State, user: UserId) -> Result<&Journey> {
    let checkin = state.current_checkin(user).ok_or(Error::NoCurrentCheckin)?;
    state.journey(checkin.journey_id).ok_or(Error::NotFound("journey"))
}

/// The note, if it can be seen from `viewer`'s journey. Invisible and
/// nonexistent notes are reported identically.
fn visible_note<'a>(state: &'a State, viewer: &Journey, id: NoteId) -> Result<&'a Note> {
    let note = state.note(id).ok_or(Error::NotFound("note"))?;
    let home = state.journey(note.journey_id).ok_or(Error::NotFound("note"))?;
    if is_bundled(&viewer.endpoints(), &home.endpoints(), &state.policy().community) {
        Ok(note)
    } else {
        Err(Error::NotFound("note"))
    }
}

/// Writes a note on the user's current journey.
pub fn compose_note(
    store: &Store,
    user: UserId,
    text: &str,
    category: Option<NoteCategory>,
    anonymous: bool,
) -> Result<Note> {
    store.write(|state, batch| {
        let checkin = state.current_checkin(user).ok_or(Error::NoCurrentCheckin)?;
        let text = validate_text(text)?;
        let note = Note {
            id: NoteId(batch.next_id()),
            journey_id: checkin.journey_id,
            author_id: user,
            anonymous,
            category: category.unwrap_or_default(),
            text,
            created_at: batch.now(),
            mode: Some(checkin.mode),
            seeded: false,
        };
        batch.push(Event::NoteComposed(note.clone()));
        Ok(note)
    })
}

pub fn journey_feed(store: &Store, user: UserId) -> Result<Vec<NoteView>> {
    store.read(|state| Ok(feed_for(state, current_journey(state, user)?)))
}

pub fn note_detail(store: &Store, user: UserId, note: NoteId) -> Result<NoteDetail> {
    store.read(|state| {
        let viewer = current_journey(state, user)?;
        let note = visible_note(state, viewer, note)?;
        let comments = state
            .comments_on(note.id)
            .map(|c| CommentView {
                comment_id: c.id,
                author: display_author(state, c.author_id, c.anonymous),
                text: c.text.clone(),
                created_at: c.created_at,
            })
            .collect();
        Ok(NoteDetail {
            note: note_view(state, note),
            comments,
        })
    })
}

pub fn add_comment(
    store: &Store,
    user: UserId,
    note: NoteId,
    text: &str,
    anonymous: bool,
) -> Result<Comment> {
    store.write(|state, batch| {
        let viewer = current_journey(state, user)?;
        let note = visible_note(state, viewer, note)?;
        let text = validate_text(text)?;
        let comment = Comment {
            id: CommentId(batch.next_id()),
            note_id: note.id,
            author_id: user,
            anonymous,
            text,
            created_at: batch.now(),
        };
        batch.push(Event::CommentAdded(comment.clone()));
        Ok(comment)
    })
}

/// A pre-written note to bootstrap a journey.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedNote {
    pub endpoints: Endpoints,
    pub origin_label: String,
    pub destination_label: String,
    pub text: String,
    pub category: NoteCategory,
    pub author: Pseudonym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedOutcome {
    Imported(NoteId),
    AlreadyPresent,
}

/// Imports one seeded note under `digest`, which identifies the record.
/// Authors become synthetic users on first use; a name held by a real user
/// is refused.
pub fn import_seed_note<R: Rng + ?Sized>(
    store: &Store,
    seed: &SeedNote,
    digest: &str,
    rng: &mut R,
) -> Result<SeedOutcome> {
    let text = validate_text(&seed.text)?;
    store.write(|state, batch| {
        if state.has_seed(digest) {
            return Ok(SeedOutcome::AlreadyPresent);
        }
        let author = match state.user_by_pseudonym(&seed.author) {
            Some(u) if u.synthetic => u.id,
            Some(_) => return Err(Error::PseudonymTaken(seed.author.to_string())),
            None => {
                let mut token = ApiToken::generate(rng);
                while state.user_by_token(&token).is_some() {
                    token = ApiToken::generate(rng);
                }
                let user = UserRecord {
                    id: UserId(batch.next_id()),
                    pseudonym: seed.author.clone(),
                    token,
                    created_at: batch.now(),
                    synthetic: true,
                };
                let id = user.id;
                batch.push(Event::UserRegistered(user));
                id
            }
        };
        let journey = resolve_journey(
            state,
            batch,
            seed.endpoints,
            Some(seed.origin_label.clone()),
            Some(seed.destination_label.clone()),
            author,
        );
        let note = Note {
            id: NoteId(batch.next_id()),
            journey_id: journey.id,
            author_id: author,
            anonymous: false,
            category: seed.category,
            text,
            created_at: batch.now(),
            mode: None,
            seeded: true,
        };
        let id = note.id;
        batch.push(Event::NoteComposed(note));
        batch.push(Event::SeedImported {
            digest: digest.to_owned(),
        });
        Ok(SeedOutcome::Imported(id))
    })
}
