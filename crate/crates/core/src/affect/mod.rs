//! Per-message affect scoring (stress, curiosity, confusion, agitation) and topic labelling.
//!
//! Scoring goes through an [`AffectProvider`]. The lexicon provider is deterministic and
//! works offline; the remote provider asks a chat-completions model and falls back to the
//! lexicon when anything goes wrong, marking the analysis as degraded.

mod lexicon;
mod prompt;
pub mod remote;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{
    extract_topic, lexicon_score, normalize_text, AffectLexicon, Cue, LexiconError,
    DEFAULT_LEXICON_JSON, GENERAL_TOPIC,
};
pub use prompt::{
    build_affect_prompt, default_shots, parse_provider_response, ParsedReply, ProviderRequest,
    ReplyError, Shot, Turn, AFFECT_TEMPERATURE, SYSTEM_INSTRUCTION,
};

use crate::bloom::BloomLevel;
use crate::config::CourseConfig;
use crate::window::{estimate_tokens, ConversationWindow};

/// Four integer intensities, each in `1..=10`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffectScores {
    pub stress: u8,
    pub curiosity: u8,
    pub confusion: u8,
    pub agitation: u8,
}

impl AffectScores {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 10;
    pub const BASELINE: AffectScores = AffectScores::new(1, 1, 1, 1);

    pub const fn new(stress: u8, curiosity: u8, confusion: u8, agitation: u8) -> Self {
        Self {
            stress,
            curiosity,
            confusion,
            agitation,
        }
    }

    /// Rounds half-up and clamps into `1..=10`.
    pub fn clamp_score(raw: f64) -> u8 {
        if raw.is_nan() {
            return Self::MIN;
        }
        (raw + 0.5).floor().clamp(f64::from(Self::MIN), f64::from(Self::MAX)) as u8
    }

    pub fn get(&self, dimension: AffectDimension) -> u8 {
        match dimension {
            AffectDimension::Stress => self.stress,
            AffectDimension::Curiosity => self.curiosity,
            AffectDimension::Confusion => self.confusion,
            AffectDimension::Agitation => self.agitation,
        }
    }

    pub fn in_range(&self) -> bool {
        AffectDimension::ALL
            .iter()
            .all(|d| (Self::MIN..=Self::MAX).contains(&self.get(*d)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectDimension {
    Stress,
    Curiosity,
    Confusion,
    Agitation,
}

impl AffectDimension {
    pub const ALL: [AffectDimension; 4] = [
        AffectDimension::Stress,
        AffectDimension::Curiosity,
        AffectDimension::Confusion,
        AffectDimension::Agitation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AffectDimension::Stress => "stress",
            AffectDimension::Curiosity => "curiosity",
            AffectDimension::Confusion => "confusion",
            AffectDimension::Agitation => "agitation",
        }
    }
}

impl std::str::FromStr for AffectDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AffectDimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown affect dimension `{s}`"))
    }
}

/// Everything computed from one student message. Holds no message text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageAnalysis {
    pub affect: AffectScores,
    pub topic: String,
    pub bloom: Option<BloomLevel>,
    /// Topic falls outside the syllabus.
    pub exploratory: bool,
    pub token_count: usize,
    /// Lexicon fallback was used after a provider failure.
    pub degraded: bool,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider request timed out")]
    Timeout,
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {0}")]
    Status(u16),
    #[error("unparseable provider reply: {0}")]
    Reply(#[from] ReplyError),
    #[error("API key environment variable `{0}` is not set")]
    MissingApiKey(&'static str),
}

/// Scores one message given the conversation so far.
pub trait AffectProvider: Send + Sync {
    fn name(&self) -> &'static str;

    fn score(
        &self,
        text: &str,
        window: &ConversationWindow,
        config: &CourseConfig,
    ) -> Result<ParsedReply, ProviderError>;
}

/// Deterministic offline provider backed by the course lexicon and syllabus.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconProvider;

impl AffectProvider for LexiconProvider {
    fn name(&self) -> &'static str {
        "lexicon"
    }

    fn score(
        &self,
        text: &str,
        _window: &ConversationWindow,
        config: &CourseConfig,
    ) -> Result<ParsedReply, ProviderError> {
        Ok(lexicon_reply(text, config))
    }
}

fn lexicon_reply(text: &str, config: &CourseConfig) -> ParsedReply {
    let (topic, _) = extract_topic(text, &config.syllabus_topics);
    ParsedReply {
        affect: config.lexicon.score(text),
        topic,
    }
}

/// Analyzes one message. Never fails: provider errors fall back to the lexicon with
/// `degraded` set.
pub fn analyze_message(
    text: &str,
    window: &ConversationWindow,
    provider: &dyn AffectProvider,
    config: &CourseConfig,
) -> MessageAnalysis {
    let (reply, degraded) = match provider.score(text, window, config) {
        Ok(reply) => (reply, false),
        Err(err) => {
            tracing::warn!(provider = provider.name(), error = %err, "affect provider failed, using lexicon");
            (lexicon_reply(text, config), true)
        }
    };
    let exploratory = !config.is_syllabus_topic(&reply.topic);
    MessageAnalysis {
        affect: reply.affect,
        topic: reply.topic,
        bloom: config.verb_table.classify(text),
        exploratory,
        token_count: estimate_tokens(text),
        degraded,
    }
}
