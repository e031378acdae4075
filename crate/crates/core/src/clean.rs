//! Batch cleaning: irrelevant UI noise, exact duplicates and unfinished quizzes are removed
//! before any metric is computed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::event::{EventKind, SessionEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Irrelevant,
    Duplicate,
    IncompleteQuiz,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::Irrelevant => "irrelevant",
            DropReason::Duplicate => "duplicate",
            DropReason::IncompleteQuiz => "incomplete quiz",
        }
    }
}

impl std::fmt::Display for DropReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dropped {
    pub event: SessionEvent,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cleaned {
    pub kept: Vec<SessionEvent>,
    pub dropped: Vec<Dropped>,
}

/// Stable sort by timestamp; events with equal timestamps keep arrival order.
pub fn sort_events(events: &mut [SessionEvent]) {
    events.sort_by_key(|e| e.timestamp);
}

/// Cleans a batch of events.
///
/// Rules, applied to the time-ordered batch:
/// - `ui_noise` events are dropped as irrelevant;
/// - exact duplicates (same kind, student, session, timestamp and payload) keep their first copy,
///   and a repeated answer to the same quiz question keeps the first answer;
/// - a quiz (keyed by student, session and quiz id) without both a `quiz_started` and a
///   `quiz_completed` is dropped in full, so none of its timings reach metrics.
///
/// The function is total and idempotent.
pub fn clean_events(mut events: Vec<SessionEvent>) -> Cleaned {
    sort_events(&mut events);

    let mut reasons: Vec<Option<DropReason>> = vec![None; events.len()];
    let mut answered: HashSet<(&str, &str, &str, u32)> = HashSet::new();
    let mut started: HashSet<(&str, &str, &str)> = HashSet::new();
    let mut completed: HashSet<(&str, &str, &str)> = HashSet::new();

    for i in 0..events.len() {
        let event = &events[i];
        if matches!(event.kind, EventKind::UiNoise { .. }) {
            reasons[i] = Some(DropReason::Irrelevant);
            continue;
        }
        // Exact duplicates share a timestamp, so only the preceding run of equal timestamps is scanned.
        let is_dup = events[..i]
            .iter()
            .zip(&reasons[..i])
            .rev()
            .take_while(|(prior, _)| prior.timestamp == event.timestamp)
            .any(|(prior, reason)| reason.is_none() && prior == event);
        if is_dup {
            reasons[i] = Some(DropReason::Duplicate);
            continue;
        }
        let (student, session) = (event.student_id.as_str(), event.session_id.as_str());
        match &event.kind {
            EventKind::QuizQuestionAnswered {
                quiz_id,
                question_index,
                ..
            } => {
                if !answered.insert((student, session, quiz_id, *question_index)) {
                    reasons[i] = Some(DropReason::Duplicate);
                }
            }
            EventKind::QuizStarted { quiz_id, .. } => {
                started.insert((student, session, quiz_id));
            }
            EventKind::QuizCompleted { quiz_id } => {
                completed.insert((student, session, quiz_id));
            }
            _ => {}
        }
    }

    for (event, reason) in events.iter().zip(reasons.iter_mut()) {
        if reason.is_some() {
            continue;
        }
        if let Some(quiz_id) = event.kind.quiz_id() {
            let key = (event.student_id.as_str(), event.session_id.as_str(), quiz_id);
            if !(started.contains(&key) && completed.contains(&key)) {
                *reason = Some(DropReason::IncompleteQuiz);
            }
        }
    }

    let mut out = Cleaned::default();
    for (event, reason) in events.into_iter().zip(reasons) {
        match reason {
            Some(reason) => out.dropped.push(Dropped { event, reason }),
            None => out.kept.push(event),
        }
    }
    out
}
