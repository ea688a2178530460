use thiserror::Error;

use crate::geo::GeoError;
use crate::identity::LexiconError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("{0} not found")]
    NotFound(&'static str),
    #[error("user has no current check-in")]
    NoCurrentCheckin,
    #[error("no free pseudonym after {0} attempts")]
    NamespaceExhausted(u32),
    #[error("pseudonym {0:?} belongs to another user")]
    PseudonymTaken(String),
    #[error("journal: {0}")]
    Journal(#[from] std::io::Error),
    #[error("corrupt journal at line {line}: {reason}")]
    CorruptJournal { line: usize, reason: String },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field,
            reason: reason.into(),
        }
    }
}
