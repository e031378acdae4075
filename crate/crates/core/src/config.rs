//! Course configuration: syllabus, course-event calendar, thresholds, lexicon and verb table.

use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::remote::RemoteConfig;
use crate::affect::{normalize_text, AffectLexicon, LexiconError};
use crate::bloom::{VerbTable, VerbTableError};

/// Topics used when a configuration does not list any.
pub const DEFAULT_SYLLABUS: [&str; 8] = [
    "Engineering Ethics",
    "Impacts of Technological Solutions",
    "Public Health, Safety, and Welfare in Engineering Ethics",
    "Confidentiality and Privacy in Engineering Ethics",
    "Ethical Challenges in Sustainability",
    "Trust and Credibility of Engineers and Ethical Behavior",
    "Ethical Codes and Guidelines in Engineering",
    "Reporting Ethical Violations in Engineering",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CourseEventKind {
    Assignment,
    Quiz,
    Project,
    Exam,
}

/// A dated course milestone drawn as an overlay bar on affect charts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CourseEvent {
    pub date: NaiveDate,
    pub label: String,
    pub kind: CourseEventKind,
}

impl CourseEvent {
    pub fn starts_at(&self) -> DateTime<Utc> {
        self.date.and_time(chrono::NaiveTime::MIN).and_utc()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Token-set Jaccard similarity at which a question counts as a repeat.
    pub repeat_similarity: f64,
    /// Number of trailing metric points used for the recent topic-switch rate.
    pub agitation_window: usize,
    /// Default bucket width for class time series, in seconds.
    pub bucket_seconds: i64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            repeat_similarity: 0.6,
            agitation_window: 5,
            bucket_seconds: 86_400,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid course config: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    VerbTable(#[from] VerbTableError),
    #[error("invalid threshold: {0}")]
    Threshold(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct CourseConfigFile {
    syllabus_topics: Option<Vec<String>>,
    course_events: Vec<CourseEvent>,
    thresholds: Thresholds,
    lexicon_path: Option<PathBuf>,
    verb_table_path: Option<PathBuf>,
    remote: RemoteConfig,
}

/// Fully resolved course configuration. Immutable once loaded and shared across sessions.
#[derive(Debug, Clone)]
pub struct CourseConfig {
    pub syllabus_topics: Vec<String>,
    pub course_events: Vec<CourseEvent>,
    pub thresholds: Thresholds,
    pub lexicon: AffectLexicon,
    pub verb_table: VerbTable,
    pub remote: RemoteConfig,
}

impl Default for CourseConfig {
    fn default() -> Self {
        Self {
            syllabus_topics: DEFAULT_SYLLABUS.iter().map(|s| s.to_string()).collect(),
            course_events: Vec::new(),
            thresholds: Thresholds::default(),
            lexicon: AffectLexicon::default(),
            verb_table: VerbTable::default(),
            remote: RemoteConfig::default(),
        }
    }
}

impl CourseConfig {
    /// Loads a config file; lexicon and verb-table paths are resolved relative to it and
    /// fall back to the bundled defaults when absent.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json_with_base(&text, base)
    }

    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        Self::from_json_with_base(json, Path::new("."))
    }

    fn from_json_with_base(json: &str, base: &Path) -> Result<Self, ConfigError> {
        let file: CourseConfigFile = serde_json::from_str(json)?;
        let lexicon = match &file.lexicon_path {
            Some(p) => AffectLexicon::from_json(&read(&base.join(p))?)?,
            None => AffectLexicon::default(),
        };
        let verb_table = match &file.verb_table_path {
            Some(p) => VerbTable::from_json(&read(&base.join(p))?)?,
            None => VerbTable::default(),
        };
        let t = &file.thresholds;
        if !(t.repeat_similarity > 0.0 && t.repeat_similarity <= 1.0) {
            return Err(ConfigError::Threshold(format!(
                "repeat_similarity must be in (0, 1], got {}",
                t.repeat_similarity
            )));
        }
        if t.bucket_seconds <= 0 {
            return Err(ConfigError::Threshold("bucket_seconds must be positive".into()));
        }
        let mut course_events = file.course_events;
        course_events.sort_by_key(|e| e.date);
        Ok(Self {
            syllabus_topics: file
                .syllabus_topics
                .unwrap_or_else(|| DEFAULT_SYLLABUS.iter().map(|s| s.to_string()).collect()),
            course_events,
            thresholds: file.thresholds,
            lexicon,
            verb_table,
            remote: file.remote,
        })
    }

    /// Case- and whitespace-insensitive syllabus membership.
    pub fn is_syllabus_topic(&self, topic: &str) -> bool {
        let topic = normalize_text(topic);
        self.syllabus_topics
            .iter()
            .any(|t| normalize_text(t) == topic)
    }

    /// Course events whose date falls within `[from, to]`; unbounded ends match everything.
    pub fn events_between(
        &self,
        from: Option<DateTime<Utc>>,
        to: Option<DateTime<Utc>>,
    ) -> Vec<CourseEvent> {
        self.course_events
            .iter()
            .filter(|e| {
                let day_start = e.starts_at();
                let day_end = day_start + chrono::Duration::days(1);
                from.is_none_or(|f| day_end > f) && to.is_none_or(|t| day_start <= t)
            })
            .cloned()
            .collect()
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })
}
