use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AffectScores;

pub const DEFAULT_LEXICON_JSON: &str = include_str!("../../data/affect_lexicon.json");

/// Topic label used when no syllabus topic can be identified.
pub const GENERAL_TOPIC: &str = "General";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cue {
    pub phrase: String,
    pub weight: u32,
}

/// Weighted cue phrases per affect dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectLexicon {
    pub stress: Vec<Cue>,
    pub curiosity: Vec<Cue>,
    pub confusion: Vec<Cue>,
    pub agitation: Vec<Cue>,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("invalid lexicon JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("empty cue phrase in `{0}` list")]
    EmptyPhrase(&'static str),
    #[error("cue `{phrase}` in `{dimension}` list has weight 0")]
    ZeroWeight {
        dimension: &'static str,
        phrase: String,
    },
}

impl AffectLexicon {
    /// Parses a lexicon document; phrases are normalized the same way message text is.
    pub fn from_json(json: &str) -> Result<Self, LexiconError> {
        let mut lexicon: AffectLexicon = serde_json::from_str(json)?;
        for (dimension, cues) in [
            ("stress", &mut lexicon.stress),
            ("curiosity", &mut lexicon.curiosity),
            ("confusion", &mut lexicon.confusion),
            ("agitation", &mut lexicon.agitation),
        ] {
            for cue in cues.iter_mut() {
                cue.phrase = normalize_text(&cue.phrase);
                if cue.phrase.is_empty() {
                    return Err(LexiconError::EmptyPhrase(dimension));
                }
                if cue.weight == 0 {
                    return Err(LexiconError::ZeroWeight {
                        dimension,
                        phrase: cue.phrase.clone(),
                    });
                }
            }
        }
        Ok(lexicon)
    }

    /// Scores text by summing cue weights over every non-overlapping occurrence.
    pub fn score(&self, text: &str) -> AffectScores {
        let normalized = normalize_text(text);
        AffectScores {
            stress: dimension_score(&normalized, &self.stress),
            curiosity: dimension_score(&normalized, &self.curiosity),
            confusion: dimension_score(&normalized, &self.confusion),
            agitation: dimension_score(&normalized, &self.agitation),
        }
    }
}

impl Default for AffectLexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON_JSON).expect("bundled lexicon is valid")
    }
}

pub fn lexicon_score(text: &str, lexicon: &AffectLexicon) -> AffectScores {
    lexicon.score(text)
}

fn dimension_score(normalized: &str, cues: &[Cue]) -> u8 {
    let total: u64 = cues
        .iter()
        .map(|cue| normalized.matches(cue.phrase.as_str()).count() as u64 * u64::from(cue.weight))
        .fold(1, u64::saturating_add);
    total.min(u64::from(AffectScores::MAX)) as u8
}

/// Lowercases, maps typographic apostrophes to `'` and collapses whitespace runs.
pub fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase().replace('\u{2019}', "'");
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Picks the longest syllabus topic contained in the text.
///
/// Returns the topic and whether the question is exploratory (outside the syllabus);
/// with no match the topic is [`GENERAL_TOPIC`].
pub fn extract_topic(text: &str, syllabus: &[String]) -> (String, bool) {
    let normalized = normalize_text(text);
    let mut best: Option<(&str, usize)> = None;
    for topic in syllabus {
        let needle = normalize_text(topic);
        if needle.is_empty() || !normalized.contains(&needle) {
            continue;
        }
        let len = needle.chars().count();
        if best.is_none_or(|(_, best_len)| len > best_len) {
            best = Some((topic.trim(), len));
        }
    }
    match best {
        Some((topic, _)) => (topic.to_owned(), false),
        None => (GENERAL_TOPIC.to_owned(), true),
    }
}
