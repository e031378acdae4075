//! Session events as submitted by the chatbot front end, and batch parsing.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Every event kind accepted by the ingest schema.
pub const EVENT_KINDS: [&str; 9] = [
    "message_sent",
    "quiz_started",
    "quiz_question_answered",
    "quiz_completed",
    "flashcards_generated",
    "summary_requested",
    "login",
    "logout",
    "ui_noise",
];

/// One timestamped student interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub student_id: String,
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    MessageSent {
        text: String,
    },
    QuizStarted {
        quiz_id: String,
        topic: String,
    },
    QuizQuestionAnswered {
        quiz_id: String,
        question_index: u32,
        elapsed_seconds: f64,
        correct: bool,
    },
    QuizCompleted {
        quiz_id: String,
    },
    FlashcardsGenerated {
        topic: String,
        count: u32,
    },
    SummaryRequested {
        topic: String,
    },
    Login,
    Logout,
    UiNoise {
        description: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::MessageSent { .. } => "message_sent",
            EventKind::QuizStarted { .. } => "quiz_started",
            EventKind::QuizQuestionAnswered { .. } => "quiz_question_answered",
            EventKind::QuizCompleted { .. } => "quiz_completed",
            EventKind::FlashcardsGenerated { .. } => "flashcards_generated",
            EventKind::SummaryRequested { .. } => "summary_requested",
            EventKind::Login => "login",
            EventKind::Logout => "logout",
            EventKind::UiNoise { .. } => "ui_noise",
        }
    }

    /// Quiz id for the three quiz lifecycle kinds.
    pub fn quiz_id(&self) -> Option<&str> {
        match self {
            EventKind::QuizStarted { quiz_id, .. }
            | EventKind::QuizQuestionAnswered { quiz_id, .. }
            | EventKind::QuizCompleted { quiz_id } => Some(quiz_id),
            _ => None,
        }
    }
}

impl SessionEvent {
    pub fn new(
        student_id: impl Into<String>,
        session_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        kind: EventKind,
    ) -> Self {
        Self {
            student_id: student_id.into(),
            session_id: session_id.into(),
            timestamp,
            kind,
        }
    }

    pub fn session_key(&self) -> (&str, &str) {
        (&self.student_id, &self.session_id)
    }
}

/// A batch-level failure: the document could not be read as an event list at all.
#[derive(Debug, Error)]
pub enum BatchError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("event batch must be a JSON array, found {found}")]
    NotAnArray { found: &'static str },
}

/// An event object that was skipped while parsing; the rest of the batch still goes through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// Position in the submitted array.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedBatch {
    pub events: Vec<SessionEvent>,
    pub rejects: Vec<Reject>,
}

impl ParsedBatch {
    pub fn input_len(&self) -> usize {
        self.events.len() + self.rejects.len()
    }
}

/// Parses an ingest document (a JSON array of event objects).
///
/// Unknown kinds and objects with missing or invalid fields are recorded as
/// rejects; only a document that is not valid JSON, or not an array, fails
/// the whole batch.
pub fn parse_event_batch(payload: &str) -> Result<ParsedBatch, BatchError> {
    let doc: Value = serde_json::from_str(payload).map_err(|e| BatchError::Malformed {
        offset: byte_offset(payload, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let items = match doc {
        Value::Array(items) => items,
        other => {
            return Err(BatchError::NotAnArray {
                found: json_type_name(&other),
            })
        }
    };

    let mut batch = ParsedBatch::default();
    for (index, item) in items.into_iter().enumerate() {
        match parse_event(item) {
            Ok(event) => batch.events.push(event),
            Err(reason) => batch.rejects.push(Reject { index, reason }),
        }
    }
    Ok(batch)
}

fn parse_event(item: Value) -> Result<SessionEvent, String> {
    let kind = match item.get("kind") {
        Some(Value::String(kind)) => kind.clone(),
        Some(_) => return Err("field `kind` must be a string".to_owned()),
        None if item.is_object() => return Err("missing field `kind`".to_owned()),
        None => return Err(format!("event must be an object, found {}", json_type_name(&item))),
    };
    if !EVENT_KINDS.contains(&kind.as_str()) {
        return Err("unknown event kind".to_owned());
    }
    let event: SessionEvent =
        serde_json::from_value(item).map_err(|e| format!("invalid `{kind}` event: {}", redact_quoted(&e.to_string())))?;
    validate(&event)?;
    Ok(event)
}

fn validate(event: &SessionEvent) -> Result<(), String> {
    match &event.kind {
        EventKind::QuizQuestionAnswered {
            elapsed_seconds, ..
        } if !(elapsed_seconds.is_finite() && *elapsed_seconds >= 0.0) => {
            Err("elapsed_seconds must be a non-negative number".to_owned())
        }
        EventKind::FlashcardsGenerated { count: 0, .. } => {
            Err("flashcard count must be positive".to_owned())
        }
        _ => Ok(()),
    }
}

/// Replaces double-quoted values in a serde message so submitted text never reaches a
/// response body.
fn redact_quoted(message: &str) -> String {
    let mut out = String::with_capacity(message.len());
    let mut parts = message.split('"');
    if let Some(first) = parts.next() {
        out.push_str(first);
    }
    let rest: Vec<&str> = parts.collect();
    for (i, part) in rest.iter().enumerate() {
        if i % 2 == 0 && i + 1 < rest.len() {
            out.push_str("<redacted>");
        } else if i % 2 == 1 {
            out.push_str(part);
        } else {
            out.push('"');
            out.push_str(part);
        }
    }
    out
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

fn json_type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}
