//! Bulk import of pre-written notes from line-delimited JSON.

use std::io::BufRead;

use journeys_core::geo::{Endpoints, GeoPoint};
use journeys_core::identity::Pseudonym;
use journeys_core::notes::{import_seed_note, NoteCategory, SeedNote, SeedOutcome};
use journeys_core::store::Store;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SHIPPED_SEED: &str = include_str!("../data/seed_notes.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRecord {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub origin_label: String,
    pub destination_label: String,
    pub text: String,
    #[serde(default)]
    pub category: NoteCategory,
    pub author: String,
}

impl SeedRecord {
    /// Hex SHA-256 of the record's canonical JSON, so reformatting a line
    /// does not make it a new record.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("records serialize");
        hex::encode(Sha256::digest(&canonical))
    }

    fn to_seed_note(&self) -> journeys_core::Result<SeedNote> {
        Ok(SeedNote {
            endpoints: Endpoints::new(self.origin, self.destination),
            origin_label: self.origin_label.clone(),
            destination_label: self.destination_label.clone(),
            text: self.text.clone(),
            category: self.category,
            author: Pseudonym::new(self.author.as_str())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineFailure {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub ingested: usize,
    pub already_present: usize,
    pub failures: Vec<LineFailure>,
}

/// Imports every record it can. Bad lines are reported by 1-based line
/// number and skipped; blank lines are ignored.
pub fn ingest_seed_notes<R: Rng + ?Sized>(
    store: &Store,
    input: impl BufRead,
    rng: &mut R,
) -> IngestSummary {
    let mut summary = IngestSummary::default();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let fail = |reason: String| LineFailure { line: line_no, reason };
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                summary.failures.push(fail(e.to_string()));
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<SeedRecord>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| {
                let note = r.to_seed_note().map_err(|e| e.to_string())?;
                import_seed_note(store, &note, &r.digest(), rng).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(SeedOutcome::Imported(_)) => summary.ingested += 1,
            Ok(SeedOutcome::AlreadyPresent) => summary.already_present += 1,
            Err(reason) => summary.failures.push(fail(reason)),
        }
    }
    summary
}
