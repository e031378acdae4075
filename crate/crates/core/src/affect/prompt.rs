//! Few-shot chat prompt for remote affect scoring and parsing of the model's reply.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::lexicon::GENERAL_TOPIC;
use super::AffectScores;
use crate::window::{ConversationWindow, Role};

/// Sampling temperature used for every affect request.
pub const AFFECT_TEMPERATURE: f64 = 1.0;

/// Longest topic label accepted from a provider reply.
const MAX_TOPIC_CHARS: usize = 120;

pub const SYSTEM_INSTRUCTION: &str = "You rate messages that students send to a course teaching assistant. \
For the newest student message only, rate stress, curiosity, confusion and agitation as integers \
from 1 (low intensity) to 10 (high intensity), and name the main course topic the message is about. \
Earlier turns are context. Reply with exactly one JSON object and nothing else, in the form \
{\"stress\": <1-10>, \"curiosity\": <1-10>, \"confusion\": <1-10>, \"agitation\": <1-10>, \"topic\": \"<topic>\"}. \
Use \"General\" as the topic when none is identifiable.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub message: String,
    pub reply: String,
}

/// Worked examples shown to the model before the conversation.
pub fn default_shots() -> Vec<Shot> {
    [
        (
            "I can't understand this and the report is due tomorrow. This is overwhelming.",
            r#"{"stress":9,"curiosity":1,"confusion":8,"agitation":4,"topic":"General"}"#,
        ),
        (
            "Can we explore how the NSPE code handles conflicts of interest in more depth?",
            r#"{"stress":1,"curiosity":9,"confusion":2,"agitation":1,"topic":"Ethical Codes and Guidelines in Engineering"}"#,
        ),
        (
            "Why do I have to repeat this again?? This whistleblowing stuff is pointless.",
            r#"{"stress":4,"curiosity":1,"confusion":3,"agitation":8,"topic":"Reporting Ethical Violations in Engineering"}"#,
        ),
        (
            "What does 'paramount' mean in the public safety clause?",
            r#"{"stress":2,"curiosity":4,"confusion":6,"agitation":1,"topic":"Public Health, Safety, and Welfare in Engineering Ethics"}"#,
        ),
    ]
    .into_iter()
    .map(|(message, reply)| Shot {
        message: message.to_owned(),
        reply: reply.to_owned(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

/// Provider-neutral affect request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderRequest {
    pub system: String,
    pub shots: Vec<Shot>,
    pub history: Vec<Turn>,
    pub message: String,
    pub temperature: f64,
}

impl ProviderRequest {
    /// Chat-completions `messages` array: system, shots, history, then the new message.
    pub fn chat_messages(&self) -> Vec<Value> {
        let mut messages = Vec::with_capacity(2 + 2 * self.shots.len() + self.history.len());
        messages.push(json!({"role": "system", "content": self.system}));
        for shot in &self.shots {
            messages.push(json!({"role": "user", "content": shot.message}));
            messages.push(json!({"role": "assistant", "content": shot.reply}));
        }
        for turn in &self.history {
            let role = match turn.role {
                Role::Student => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": turn.text}));
        }
        messages.push(json!({"role": "user", "content": self.message}));
        messages
    }

    /// Full chat-completions request body.
    pub fn chat_body(&self, model: &str) -> Value {
        json!({
            "model": model,
            "temperature": self.temperature,
            "messages": self.chat_messages(),
        })
    }
}

pub fn build_affect_prompt(text: &str, window: &ConversationWindow, shots: &[Shot]) -> ProviderRequest {
    ProviderRequest {
        system: SYSTEM_INSTRUCTION.to_owned(),
        shots: shots.to_vec(),
        history: window
            .entries()
            .map(|e| Turn {
                role: e.role,
                text: e.text.clone(),
            })
            .collect(),
        message: text.to_owned(),
        temperature: AFFECT_TEMPERATURE,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub affect: AffectScores,
    pub topic: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ReplyError {
    #[error("no JSON object in provider reply")]
    NoObject,
    #[error("provider reply is missing numeric `{0}`")]
    MissingScore(&'static str),
}

/// Extracts the first JSON object in a model reply. Scores are rounded half-up and clamped
/// into range; a missing or blank topic becomes `General`.
pub fn parse_provider_response(raw: &str) -> Result<ParsedReply, ReplyError> {
    let object = first_json_object(raw).ok_or(ReplyError::NoObject)?;
    let score = |field: &'static str| -> Result<u8, ReplyError> {
        object
            .get(field)
            .and_then(Value::as_f64)
            .map(AffectScores::clamp_score)
            .ok_or(ReplyError::MissingScore(field))
    };
    let affect = AffectScores {
        stress: score("stress")?,
        curiosity: score("curiosity")?,
        confusion: score("confusion")?,
        agitation: score("agitation")?,
    };
    let topic = object
        .get("topic")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().take(MAX_TOPIC_CHARS).collect::<String>())
        .unwrap_or_else(|| GENERAL_TOPIC.to_owned());
    Ok(ParsedReply { affect, topic })
}

fn first_json_object(raw: &str) -> Option<Map<String, Value>> {
    raw.char_indices()
        .filter(|(_, c)| *c == '{')
        .find_map(|(start, _)| {
            let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
            match stream.next() {
                Some(Ok(Value::Object(map))) => Some(map),
                _ => None,
            }
        })
}
