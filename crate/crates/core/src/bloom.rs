//! Bloom's-taxonomy classification of student questions from digital planning verbs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::StudentRecord;

pub const DEFAULT_VERB_TABLE_JSON: &str = include_str!("../data/bloom_verbs.json");

/// Cognitive levels, lowest to highest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BloomLevel {
    Remembering,
    Understanding,
    Applying,
    Analyzing,
    Evaluating,
    Creating,
}

impl BloomLevel {
    pub const ALL: [BloomLevel; 6] = [
        BloomLevel::Remembering,
        BloomLevel::Understanding,
        BloomLevel::Applying,
        BloomLevel::Analyzing,
        BloomLevel::Evaluating,
        BloomLevel::Creating,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BloomLevel::Remembering => "Remembering",
            BloomLevel::Understanding => "Understanding",
            BloomLevel::Applying => "Applying",
            BloomLevel::Analyzing => "Analyzing",
            BloomLevel::Evaluating => "Evaluating",
            BloomLevel::Creating => "Creating",
        }
    }
}

impl fmt::Display for BloomLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BloomLevel {
    type Err = VerbTableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BloomLevel::ALL
            .into_iter()
            .find(|level| level.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| VerbTableError::UnknownLevel(s.to_owned()))
    }
}

#[derive(Debug, Error)]
pub enum VerbTableError {
    #[error("invalid verb table JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown Bloom level `{0}`")]
    UnknownLevel(String),
    #[error("Bloom level {0} has no verbs")]
    EmptyLevel(BloomLevel),
    #[error("verb `{0}` has no usable stem")]
    EmptyVerb(String),
}

/// One planning verb, reduced to the stems that must all prefix-match some token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbEntry {
    pub verb: String,
    pub stems: Vec<String>,
}

impl VerbEntry {
    fn new(verb: &str) -> Result<Self, VerbTableError> {
        let stems: Vec<String> = tokenize(verb).iter().map(|w| stem(w)).collect();
        if stems.is_empty() {
            return Err(VerbTableError::EmptyVerb(verb.to_owned()));
        }
        Ok(Self {
            verb: verb.to_owned(),
            stems,
        })
    }

    fn matches(&self, tokens: &BTreeSet<String>) -> bool {
        self.stems
            .iter()
            .all(|stem| tokens.iter().any(|token| token.starts_with(stem.as_str())))
    }
}

/// Verb stems per Bloom level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerbTable {
    levels: BTreeMap<BloomLevel, Vec<VerbEntry>>,
}

impl VerbTable {
    /// Parses `{"Remembering": ["Copying", ...], ...}`; all six levels must be present.
    pub fn from_json(json: &str) -> Result<Self, VerbTableError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(json)?;
        let mut levels = BTreeMap::new();
        for (name, verbs) in raw {
            let level: BloomLevel = name.parse()?;
            let entries = verbs
                .iter()
                .map(|v| VerbEntry::new(v))
                .collect::<Result<Vec<_>, _>>()?;
            levels.insert(level, entries);
        }
        for level in BloomLevel::ALL {
            if levels.get(&level).is_none_or(Vec::is_empty) {
                return Err(VerbTableError::EmptyLevel(level));
            }
        }
        Ok(Self { levels })
    }

    pub fn entries(&self, level: BloomLevel) -> &[VerbEntry] {
        self.levels.get(&level).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every level with at least one matching verb.
    pub fn matched_levels(&self, text: &str) -> BTreeSet<BloomLevel> {
        let tokens: BTreeSet<String> = tokenize(text).into_iter().collect();
        self.levels
            .iter()
            .filter(|(_, verbs)| verbs.iter().any(|v| v.matches(&tokens)))
            .map(|(level, _)| *level)
            .collect()
    }

    /// Highest level whose verbs appear in the text, or `None` when no verb matches.
    pub fn classify(&self, text: &str) -> Option<BloomLevel> {
        self.matched_levels(text).into_iter().next_back()
    }
}

impl Default for VerbTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_VERB_TABLE_JSON).expect("bundled verb table is valid")
    }
}

pub fn classify_bloom(text: &str, table: &VerbTable) -> Option<BloomLevel> {
    table.classify(text)
}

/// Lowercases and splits on anything that is not alphanumeric; apostrophes are removed
/// so that contractions stay one token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if c == '\'' || c == '\u{2019}' {
            continue;
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Strips one of the suffixes -ing, -ed, -s, keeping at least three characters.
pub fn stem(word: &str) -> String {
    let word = word.to_lowercase();
    for suffix in ["ing", "ed", "s"] {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.chars().count() >= 3 {
                return base.to_owned();
            }
        }
    }
    word
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgressionPoint {
    pub timestamp: DateTime<Utc>,
    pub level: BloomLevel,
}

/// Time-ordered Bloom levels of a student's classified questions.
pub fn progression_series(record: &StudentRecord) -> Vec<ProgressionPoint> {
    record
        .metric_points
        .iter()
        .filter_map(|p| {
            p.bloom.map(|level| ProgressionPoint {
                timestamp: p.timestamp,
                level,
            })
        })
        .collect()
}
