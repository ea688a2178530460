//! Install-scoped users with permanent, randomly assigned bird-like pseudonyms.
//!
//! A pseudonym is one descriptor followed by a family name ("marsh wren"), or
//! two distinct physical attributes followed by a family name ("scarlet
//! crested wren"). Descriptors come from three lists: physical attributes,
//! geographic terms and habitats.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::UserId;
use crate::store::{Event, Store};
use crate::Result;

/// How many fresh names `register_user` draws before giving up.
pub const MAX_NAME_ATTEMPTS: u32 = 16;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("{0} list is empty")]
    Empty(&'static str),
    #[error("{list} term {term:?} is not lowercase")]
    NotLowercase { list: &'static str, term: String },
    #[error("{list} term {term:?} contains whitespace")]
    Whitespace { list: &'static str, term: String },
    #[error("term {term:?} appears more than once")]
    Duplicate { term: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    Attribute,
    Geographic,
    Habitat,
}

/// Sizes of the four term lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexiconSizes {
    pub attributes: usize,
    pub geographic: usize,
    pub habitats: usize,
    pub families: usize,
}

/// Number of distinct names the grammar can produce: any single descriptor
/// with any family, plus ordered pairs of distinct attributes.
pub fn namespace_size(sizes: &LexiconSizes) -> Result<u64, LexiconError> {
    for (n, list) in [
        (sizes.attributes, "attributes"),
        (sizes.geographic, "geographic"),
        (sizes.habitats, "habitats"),
        (sizes.families, "families"),
    ] {
        if n == 0 {
            return Err(LexiconError::Empty(list));
        }
    }
    let a = sizes.attributes as u64;
    let singles = (a + sizes.geographic as u64 + sizes.habitats as u64) * sizes.families as u64;
    let pairs = a * (a - 1) * sizes.families as u64;
    Ok(singles + pairs)
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    attributes: Vec<String>,
    geographic: Vec<String>,
    habitats: Vec<String>,
    families: Vec<String>,
}

/// Components of a pseudonym that parsed under a lexicon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameParts<'a> {
    pub descriptors: Vec<(DescriptorKind, &'a str)>,
    pub family: &'a str,
}

impl Lexicon {
    pub fn new(
        attributes: Vec<String>,
        geographic: Vec<String>,
        habitats: Vec<String>,
        families: Vec<String>,
    ) -> Result<Self, LexiconError> {
        let lists = [
            ("attributes", &attributes),
            ("geographic", &geographic),
            ("habitats", &habitats),
            ("families", &families),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(LexiconError::Empty(name));
            }
            for term in list.iter() {
                if term.chars().any(char::is_whitespace) || term.is_empty() {
                    return Err(LexiconError::Whitespace {
                        list: name,
                        term: term.clone(),
                    });
                }
                if term.to_lowercase() != *term {
                    return Err(LexiconError::NotLowercase {
                        list: name,
                        term: term.clone(),
                    });
                }
            }
        }
        let mut seen = HashSet::new();
        for term in attributes.iter().chain(&geographic).chain(&habitats) {
            if !seen.insert(term.as_str()) {
                return Err(LexiconError::Duplicate { term: term.clone() });
            }
        }
        let mut seen = HashSet::new();
        for term in &families {
            if !seen.insert(term.as_str()) {
                return Err(LexiconError::Duplicate { term: term.clone() });
            }
        }
        Ok(Lexicon {
            attributes,
            geographic,
            habitats,
            families,
        })
    }

    /// The lexicon compiled into the crate.
    pub fn shipped() -> Self {
        Lexicon::from_texts(
            include_str!("../data/lexicon/attributes.txt"),
            include_str!("../data/lexicon/geographic.txt"),
            include_str!("../data/lexicon/habitats.txt"),
            include_str!("../data/lexicon/families.txt"),
        )
        .expect("shipped lexicon is valid")
    }

    pub fn from_texts(
        attributes: &str,
        geographic: &str,
        habitats: &str,
        families: &str,
    ) -> Result<Self, LexiconError> {
        Lexicon::new(
            parse_terms(attributes),
            parse_terms(geographic),
            parse_terms(habitats),
            parse_terms(families),
        )
    }

    /// Loads `attributes.txt`, `geographic.txt`, `habitats.txt` and
    /// `families.txt` from `dir`, one term per line.
    pub fn from_dir(dir: &Path) -> Result<Self, LexiconError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| LexiconError::Io { path, source })
        };
        Lexicon::from_texts(
            &read("attributes.txt")?,
            &read("geographic.txt")?,
            &read("habitats.txt")?,
            &read("families.txt")?,
        )
    }

    pub fn sizes(&self) -> LexiconSizes {
        LexiconSizes {
            attributes: self.attributes.len(),
            geographic: self.geographic.len(),
            habitats: self.habitats.len(),
            families: self.families.len(),
        }
    }

    pub fn namespace_size(&self) -> u64 {
        namespace_size(&self.sizes()).expect("validated at construction")
    }

    fn descriptor(&self, i: usize) -> &str {
        let a = self.attributes.len();
        let g = self.geographic.len();
        if i < a {
            &self.attributes[i]
        } else if i < a + g {
            &self.geographic[i - a]
        } else {
            &self.habitats[i - a - g]
        }
    }

    /// The name with ordinal `index` in `0..namespace_size()`. Every index
    /// maps to a distinct name.
    pub fn name_at(&self, index: u64) -> Pseudonym {
        let n = self.namespace_size();
        assert!(index < n, "name index {index} outside namespace of {n}");
        let f = self.families.len() as u64;
        let a = self.attributes.len() as u64;
        let singles = (a + self.geographic.len() as u64 + self.habitats.len() as u64) * f;
        let family = &self.families[(index % f) as usize];
        if index < singles {
            let d = (index / f) as usize;
            Pseudonym(format!("{} {}", self.descriptor(d), family))
        } else {
            let pair = (index - singles) / f;
            let first = pair / (a - 1);
            let mut second = pair % (a - 1);
            if second >= first {
                second += 1;
            }
            Pseudonym(format!(
                "{} {} {}",
                self.attributes[first as usize], self.attributes[second as usize], family
            ))
        }
    }

    /// Draws a name uniformly from the whole namespace.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Pseudonym {
        self.name_at(rng.random_range(0..self.namespace_size()))
    }

    pub fn parse<'a>(&self, name: &'a str) -> Option<NameParts<'a>> {
        let words: Vec<&str> = name.split(' ').collect();
        let (family, descriptors) = words.split_last()?;
        if !self.families.iter().any(|f| f == family) {
            return None;
        }
        let descriptors = match descriptors {
            [one] => vec![(self.kind_of(one)?, *one)],
            [x, y] if x != y => {
                let is_attr = |w: &str| self.attributes.iter().any(|t| t == w);
                if !(is_attr(x) && is_attr(y)) {
                    return None;
                }
                vec![(DescriptorKind::Attribute, *x), (DescriptorKind::Attribute, *y)]
            }
            _ => return None,
        };
        Some(NameParts { descriptors, family })
    }

    fn kind_of(&self, word: &str) -> Option<DescriptorKind> {
        if self.attributes.iter().any(|t| t == word) {
            Some(DescriptorKind::Attribute)
        } else if self.geographic.iter().any(|t| t == word) {
            Some(DescriptorKind::Geographic)
        } else if self.habitats.iter().any(|t| t == word) {
            Some(DescriptorKind::Habitat)
        } else {
            None
        }
    }
}

fn parse_terms(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pseudonym(String);

impl Pseudonym {
    /// Wraps an externally supplied name (seeded content authors).
    pub fn new(text: impl Into<String>) -> crate::Result<Self> {
        let text = text.into();
        let trimmed = text.trim();
        if trimmed.is_empty() {
            return Err(crate::Error::invalid("pseudonym", "empty"));
        }
        Ok(Pseudonym(trimmed.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Pseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// 128-bit bearer secret, hex encoded.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ApiToken(String);

impl ApiToken {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        ApiToken(format!("{:032x}", rng.random::<u128>()))
    }

    pub fn from_header(raw: &str) -> Self {
        ApiToken(raw.trim().to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiToken(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub id: UserId,
    pub pseudonym: Pseudonym,
    pub token: ApiToken,
    pub created_at: DateTime<Utc>,
    /// Authors of seeded content; never handed a usable session.
    #[serde(default)]
    pub synthetic: bool,
}

#[derive(Debug, Clone)]
pub struct Registration {
    pub user: UserRecord,
    /// Draws rejected because the name was already taken.
    pub collisions: u32,
}

/// Registers a fresh install. Each call creates a new user; re-installs are
/// never linked to earlier records.
pub fn register_user<R: Rng + ?Sized>(
    store: &Store,
    lexicon: &Lexicon,
    rng: &mut R,
) -> Result<Registration> {
    let token = ApiToken::generate(rng);
    register_with_names(store, token, || lexicon.generate(rng))
}

/// Registration with an explicit name source; retries on collision up to
/// [`MAX_NAME_ATTEMPTS`] times.
pub fn register_with_names(
    store: &Store,
    token: ApiToken,
    mut next_name: impl FnMut() -> Pseudonym,
) -> Result<Registration> {
    store.write(|state, batch| {
        if state.user_by_token(&token).is_some() {
            return Err(crate::Error::invalid("token", "already issued"));
        }
        for collisions in 0..MAX_NAME_ATTEMPTS {
            let pseudonym = next_name();
            if state.user_by_pseudonym(&pseudonym).is_some() {
                continue;
            }
            let user = UserRecord {
                id: UserId(batch.next_id()),
                pseudonym,
                token,
                created_at: batch.now(),
                synthetic: false,
            };
            batch.push(Event::UserRegistered(user.clone()));
            return Ok(Registration { user, collisions });
        }
        Err(crate::Error::NamespaceExhausted(MAX_NAME_ATTEMPTS))
    })
}
