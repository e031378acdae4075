//! End-to-end ingestion of an event batch into the store.

use serde::{Deserialize, Serialize};

use crate::affect::AffectProvider;
use crate::clean::clean_events;
use crate::config::CourseConfig;
use crate::event::{parse_event_batch, BatchError, ParsedBatch, Reject, SessionEvent};
use crate::exec::Execution;
use crate::session::{run_session, SessionOutcome};
use crate::store::StudentStore;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    /// Events that survived parsing and cleaning.
    pub accepted: usize,
    pub rejected: usize,
    pub dropped: usize,
    pub sessions_stored: usize,
    /// Sessions already present in the store (client retries).
    pub sessions_skipped: usize,
    pub rejects: Vec<Reject>,
}

impl IngestReport {
    pub fn input_events(&self) -> usize {
        self.accepted + self.rejected + self.dropped
    }
}

/// Splits events by (student, session), keeping first-appearance order of sessions and
/// arrival order within each.
pub fn group_sessions(events: Vec<SessionEvent>) -> Vec<Vec<SessionEvent>> {
    let mut groups: Vec<Vec<SessionEvent>> = Vec::new();
    let mut index: std::collections::HashMap<(String, String), usize> = Default::default();
    for event in events {
        let key = (event.student_id.clone(), event.session_id.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(event);
    }
    groups
}

struct Processed {
    accepted: usize,
    dropped: usize,
    outcome: Option<SessionOutcome>,
}

fn process_session(
    events: Vec<SessionEvent>,
    provider: &dyn AffectProvider,
    config: &CourseConfig,
) -> Processed {
    let cleaned = clean_events(events);
    let accepted = cleaned.kept.len();
    let dropped = cleaned.dropped.len();
    let outcome = run_session(&cleaned.kept, provider, config).ok().map(|mut outcome| {
        outcome.record_dropped(&cleaned.dropped);
        outcome
    });
    Processed {
        accepted,
        dropped,
        outcome,
    }
}

/// Cleans, analyzes and stores every session in a parsed batch.
pub fn ingest_batch(
    batch: ParsedBatch,
    store: &StudentStore,
    provider: &dyn AffectProvider,
    config: &CourseConfig,
    execution: Execution,
) -> IngestReport {
    let mut report = IngestReport {
        rejected: batch.rejects.len(),
        rejects: batch.rejects,
        ..Default::default()
    };
    let mut fresh = Vec::new();
    for group in group_sessions(batch.events) {
        let (student, session) = group[0].session_key();
        if store.contains_session(student, session) {
            // Retries still pass through cleaning so the event counts add up.
            let cleaned = clean_events(group);
            report.accepted += cleaned.kept.len();
            report.dropped += cleaned.dropped.len();
            report.sessions_skipped += 1;
        } else {
            fresh.push(group);
        }
    }

    let processed = execution.map_owned(fresh, |group| process_session(group, provider, config));
    for p in processed {
        report.accepted += p.accepted;
        report.dropped += p.dropped;
        if let Some(outcome) = p.outcome {
            if store.upsert_outcome(outcome) {
                report.sessions_stored += 1;
            } else {
                report.sessions_skipped += 1;
            }
        }
    }
    report
}

/// Parses an ingest document and stores its sessions.
pub fn ingest_document(
    payload: &str,
    store: &StudentStore,
    provider: &dyn AffectProvider,
    config: &CourseConfig,
    execution: Execution,
) -> Result<IngestReport, BatchError> {
    let batch = parse_event_batch(payload)?;
    Ok(ingest_batch(batch, store, provider, config, execution))
}
