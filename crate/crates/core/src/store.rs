//! Privacy-preserving student store.
//!
//! Records hold metric points, quiz records and counters only. Message text never reaches
//! this module: [`SessionOutcome`] has no field that could carry it.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::sync::RwLock;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{normalize_text, AffectDimension, AffectScores};
use crate::bloom::BloomLevel;
use crate::exec::Execution;
use crate::metrics::{
    quiz_stats, LoginSpan, MethodUse, Period, QuizRecord, StudyMethodDistribution,
};
use crate::session::SessionOutcome;

pub const SNAPSHOT_VERSION: u32 = 1;

/// Metrics of one student message, stored in place of the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub timestamp: DateTime<Utc>,
    pub session_id: String,
    pub affect: AffectScores,
    pub topic: String,
    pub bloom: Option<BloomLevel>,
    pub exploratory: bool,
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfusion {
    pub session_id: String,
    pub repeated_questions: u32,
}

/// Append-only per-student history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_id: String,
    /// Sorted by timestamp.
    pub metric_points: Vec<MetricPoint>,
    pub quiz_records: Vec<QuizRecord>,
    pub study_methods: StudyMethodDistribution,
    pub method_uses: Vec<MethodUse>,
    pub confusion_counts: Vec<SessionConfusion>,
    pub login_spans: Vec<LoginSpan>,
    /// First-seen order, deduplicated case-insensitively.
    pub topics_seen: Vec<String>,
    pub sessions: Vec<String>,
}

impl StudentRecord {
    pub fn new(student_id: impl Into<String>) -> Self {
        Self {
            student_id: student_id.into(),
            metric_points: Vec::new(),
            quiz_records: Vec::new(),
            study_methods: StudyMethodDistribution::default(),
            method_uses: Vec::new(),
            confusion_counts: Vec::new(),
            login_spans: Vec::new(),
            topics_seen: Vec::new(),
            sessions: Vec::new(),
        }
    }

    fn append(&mut self, outcome: SessionOutcome) {
        for point in &outcome.metric_points {
            push_topic(&mut self.topics_seen, &point.topic);
        }
        self.metric_points.extend(outcome.metric_points);
        self.metric_points.sort_by_key(|p| p.timestamp);
        self.quiz_records.extend(outcome.quiz_records);
        self.study_methods += outcome.study_method_increments;
        self.method_uses.extend(outcome.method_uses);
        self.method_uses.sort_by_key(|u| u.timestamp);
        self.confusion_counts.push(SessionConfusion {
            session_id: outcome.session_id.clone(),
            repeated_questions: outcome.repeated_questions,
        });
        self.login_spans.extend(outcome.login_span);
        self.sessions.push(outcome.session_id);
    }

    /// Metric points of one session, in time order.
    pub fn session_points(&self, session_id: &str) -> Vec<MetricPoint> {
        self.metric_points
            .iter()
            .filter(|p| p.session_id == session_id)
            .cloned()
            .collect()
    }
}

/// Appends `topic` unless a case-insensitive equal is already present.
fn push_topic(topics: &mut Vec<String>, topic: &str) -> bool {
    let key = normalize_text(topic);
    if topics.iter().any(|t| normalize_text(t) == key) {
        return false;
    }
    topics.push(topic.to_owned());
    true
}

/// Unique topics in first-seen order; comparison ignores case, the first casing is kept.
pub fn dedup_topics<'a>(topics: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let mut out = Vec::new();
    for topic in topics {
        push_topic(&mut out, topic);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffectBucket {
    pub bucket_start: DateTime<Utc>,
    pub stress: f64,
    pub curiosity: f64,
    pub confusion: f64,
    pub agitation: f64,
    /// Students contributing to this bucket.
    pub students: usize,
}

impl AffectBucket {
    pub fn get(&self, dimension: AffectDimension) -> f64 {
        match dimension {
            AffectDimension::Stress => self.stress,
            AffectDimension::Curiosity => self.curiosity,
            AffectDimension::Confusion => self.confusion,
            AffectDimension::Agitation => self.agitation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizSummary {
    pub quiz_id: String,
    pub topic: String,
    pub attempts: u64,
    pub mean_total_seconds: f64,
    pub mean_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAggregate {
    pub affect_series: Vec<AffectBucket>,
    pub topics: Vec<String>,
    pub study_methods: StudyMethodDistribution,
    pub quiz_summaries: Vec<QuizSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopicScope<'a> {
    Class,
    Student(&'a str),
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("snapshot I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot file is empty")]
    EmptySnapshot,
    #[error("invalid snapshot: {0}")]
    Format(#[from] serde_json::Error),
    #[error("snapshot has no `version` field")]
    MissingVersion,
    #[error("unsupported snapshot version {found} (expected {SNAPSHOT_VERSION})")]
    UnsupportedVersion { found: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct StoreState {
    students: BTreeMap<String, StudentRecord>,
    sessions_seen: BTreeSet<(String, String)>,
    class_topics: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    #[serde(flatten)]
    state: StoreState,
}

/// Thread-safe store. Writes are serialized; readers always see a state between two
/// complete upserts.
#[derive(Debug, Default)]
pub struct StudentStore {
    state: RwLock<StoreState>,
}

impl StudentStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn read<R>(&self, f: impl FnOnce(&StoreState) -> R) -> R {
        f(&self.state.read().unwrap_or_else(|e| e.into_inner()))
    }

    /// Creates or appends to the student's record. Returns `false`, leaving the store
    /// unchanged, when this (student, session) pair was already stored.
    pub fn upsert_outcome(&self, outcome: SessionOutcome) -> bool {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let key = (outcome.student_id.clone(), outcome.session_id.clone());
        if !state.sessions_seen.insert(key) {
            return false;
        }
        for point in &outcome.metric_points {
            push_topic(&mut state.class_topics, &point.topic);
        }
        state
            .students
            .entry(outcome.student_id.clone())
            .or_insert_with(|| StudentRecord::new(outcome.student_id.clone()))
            .append(outcome);
        true
    }

    pub fn contains_session(&self, student_id: &str, session_id: &str) -> bool {
        self.read(|s| {
            s.sessions_seen
                .contains(&(student_id.to_owned(), session_id.to_owned()))
        })
    }

    pub fn student_ids(&self) -> Vec<String> {
        self.read(|s| s.students.keys().cloned().collect())
    }

    pub fn student_count(&self) -> usize {
        self.read(|s| s.students.len())
    }

    pub fn record(&self, student_id: &str) -> Option<StudentRecord> {
        self.read(|s| s.students.get(student_id).cloned())
    }

    /// Consistent copy of every record, ordered by student id.
    pub fn records(&self) -> Vec<StudentRecord> {
        self.read(|s| s.students.values().cloned().collect())
    }

    pub fn dedup_topics(&self, scope: TopicScope<'_>) -> Vec<String> {
        self.read(|s| match scope {
            TopicScope::Class => s.class_topics.clone(),
            TopicScope::Student(id) => s
                .students
                .get(id)
                .map(|r| r.topics_seen.clone())
                .unwrap_or_default(),
        })
    }

    pub fn class_study_methods(&self) -> StudyMethodDistribution {
        self.read(|s| s.students.values().map(|r| r.study_methods).sum())
    }

    /// Every stored attempt at a quiz, as (student id, record), ordered by student then time.
    pub fn quiz_attempts(&self, quiz_id: &str) -> Vec<(String, QuizRecord)> {
        self.read(|s| {
            s.students
                .values()
                .flat_map(|r| {
                    r.quiz_records
                        .iter()
                        .filter(|q| q.quiz_id == quiz_id && q.complete)
                        .map(|q| (r.student_id.clone(), q.clone()))
                })
                .collect()
        })
    }

    pub fn class_aggregate(&self, period: Period, bucket_seconds: i64) -> ClassAggregate {
        self.class_aggregate_with(period, bucket_seconds, Execution::default())
    }

    /// Class view: per bucket, the mean over students of each student's mean in that
    /// bucket. Buckets without data are omitted.
    pub fn class_aggregate_with(
        &self,
        period: Period,
        bucket_seconds: i64,
        execution: Execution,
    ) -> ClassAggregate {
        assert!(bucket_seconds > 0, "bucket width must be positive");
        let (records, topics) = self.read(|s| {
            (
                s.students.values().cloned().collect::<Vec<_>>(),
                s.class_topics.clone(),
            )
        });

        let per_student = execution.map(&records, |r| student_bucket_means(r, period, bucket_seconds));
        let mut sums: BTreeMap<i64, ([f64; 4], usize)> = BTreeMap::new();
        for means in &per_student {
            for (&bucket, mean) in means {
                let entry = sums.entry(bucket).or_insert(([0.0; 4], 0));
                for (acc, v) in entry.0.iter_mut().zip(mean) {
                    *acc += v;
                }
                entry.1 += 1;
            }
        }
        let affect_series = sums
            .into_iter()
            .map(|(bucket, (sum, n))| AffectBucket {
                bucket_start: DateTime::from_timestamp(bucket, 0).unwrap_or_default(),
                stress: sum[0] / n as f64,
                curiosity: sum[1] / n as f64,
                confusion: sum[2] / n as f64,
                agitation: sum[3] / n as f64,
                students: n,
            })
            .collect();

        ClassAggregate {
            affect_series,
            topics,
            study_methods: records.iter().map(|r| r.study_methods).sum(),
            quiz_summaries: quiz_summaries(&records),
        }
    }

    pub fn snapshot_save(&self, path: &Path) -> Result<(), StoreError> {
        let bytes = self.snapshot_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("snapshot")
        ));
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(&bytes)?;
        file.sync_all()?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// The snapshot document exactly as [`snapshot_save`](Self::snapshot_save) writes it.
    pub fn snapshot_bytes(&self) -> Result<Vec<u8>, StoreError> {
        self.read(|state| {
            let snapshot = Snapshot {
                version: SNAPSHOT_VERSION,
                state: state.clone(),
            };
            Ok(serde_json::to_vec_pretty(&snapshot)?)
        })
    }

    pub fn snapshot_load(path: &Path) -> Result<Self, StoreError> {
        Self::from_snapshot_bytes(&std::fs::read(path)?)
    }

    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Err(StoreError::EmptySnapshot);
        }
        let doc: serde_json::Value = serde_json::from_slice(bytes)?;
        let version = doc
            .get("version")
            .ok_or(StoreError::MissingVersion)?
            .as_u64()
            .ok_or(StoreError::MissingVersion)?;
        if version != u64::from(SNAPSHOT_VERSION) {
            return Err(StoreError::UnsupportedVersion { found: version });
        }
        let snapshot: Snapshot = serde_json::from_value(doc)?;
        Ok(Self {
            state: RwLock::new(snapshot.state),
        })
    }
}

fn bucket_of(t: DateTime<Utc>, bucket_seconds: i64) -> i64 {
    t.timestamp().div_euclid(bucket_seconds) * bucket_seconds
}

/// Mean of each affect dimension per bucket for one student.
fn student_bucket_means(record: &StudentRecord, period: Period, bucket_seconds: i64) -> BTreeMap<i64, [f64; 4]> {
    let mut sums: BTreeMap<i64, ([f64; 4], usize)> = BTreeMap::new();
    for p in record.metric_points.iter().filter(|p| period.contains(p.timestamp)) {
        let entry = sums.entry(bucket_of(p.timestamp, bucket_seconds)).or_insert(([0.0; 4], 0));
        for (acc, d) in entry.0.iter_mut().zip(AffectDimension::ALL) {
            *acc += f64::from(p.affect.get(d));
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(bucket, (sum, n))| (bucket, sum.map(|s| s / n as f64)))
        .collect()
}

fn quiz_summaries(records: &[StudentRecord]) -> Vec<QuizSummary> {
    let mut by_quiz: BTreeMap<&str, (String, u64, f64, f64)> = BTreeMap::new();
    for quiz in records.iter().flat_map(|r| &r.quiz_records) {
        let Ok(stats) = quiz_stats(quiz) else { continue };
        let entry = by_quiz
            .entry(&quiz.quiz_id)
            .or_insert_with(|| (quiz.topic.clone(), 0, 0.0, 0.0));
        entry.1 += 1;
        entry.2 += stats.total_seconds;
        if stats.score.total > 0 {
            entry.3 += f64::from(stats.score.correct) / f64::from(stats.score.total);
        }
    }
    by_quiz
        .into_iter()
        .map(|(quiz_id, (topic, attempts, seconds, score))| QuizSummary {
            quiz_id: quiz_id.to_owned(),
            topic,
            attempts,
            mean_total_seconds: seconds / attempts as f64,
            mean_score: score / attempts as f64,
        })
        .collect()
}
