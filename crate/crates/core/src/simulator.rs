//! Seeded synthetic cohorts in the ingest schema.
//!
//! Randomness comes from ChaCha20 (the IETF stream cipher keystream as exposed by
//! `rand_chacha::ChaCha20Rng`), keyed with the scenario seed in little-endian order in the
//! first eight key bytes and zeros elsewhere. Student `i` draws from stream `i + 1`.
//! Integers are sampled by rejection from `next_u64`, floats from its top 53 bits, so a
//! reimplementation with any ChaCha20 library reproduces the same cohort.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, Utc};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{AffectLexicon, Cue};
use crate::bloom::{BloomLevel, VerbTable};
use crate::config::DEFAULT_SYLLABUS;
use crate::event::{EventKind, SessionEvent};
use crate::exec::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodWeights {
    pub question_answering: f64,
    pub quizzes: f64,
    pub summary: f64,
    pub flashcards: f64,
}

impl Default for MethodWeights {
    fn default() -> Self {
        Self {
            question_answering: 6.0,
            quizzes: 2.0,
            summary: 1.0,
            flashcards: 1.0,
        }
    }
}

/// Cohort description. Every field but `students`, `start_date` and `end_date` has a
/// default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub seed: u64,
    pub students: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    #[serde(default = "default_sessions")]
    pub sessions_per_student: usize,
    #[serde(default = "default_min_actions")]
    pub min_actions: usize,
    #[serde(default = "default_max_actions")]
    pub max_actions: usize,
    #[serde(default)]
    pub syllabus_topics: Option<Vec<String>>,
    /// Dates whose sessions (and those up to two days before) carry dense stress cues.
    #[serde(default)]
    pub stress_spike_events: Vec<NaiveDate>,
    #[serde(default)]
    pub study_method_weights: MethodWeights,
    /// Mean probability of answering a quiz question correctly.
    #[serde(default = "default_accuracy")]
    pub quiz_accuracy: f64,
    #[serde(default = "default_noise")]
    pub noise_probability: f64,
    #[serde(default = "default_abandon")]
    pub abandon_probability: f64,
}

fn default_sessions() -> usize {
    4
}
fn default_min_actions() -> usize {
    2
}
fn default_max_actions() -> usize {
    6
}
fn default_accuracy() -> f64 {
    0.7
}
fn default_noise() -> f64 {
    0.15
}
fn default_abandon() -> f64 {
    0.1
}

impl ScenarioSpec {
    pub fn new(seed: u64, students: usize, start_date: NaiveDate, end_date: NaiveDate) -> Self {
        Self {
            seed,
            students,
            start_date,
            end_date,
            sessions_per_student: default_sessions(),
            min_actions: default_min_actions(),
            max_actions: default_max_actions(),
            syllabus_topics: None,
            stress_spike_events: Vec::new(),
            study_method_weights: MethodWeights::default(),
            quiz_accuracy: default_accuracy(),
            noise_probability: default_noise(),
            abandon_probability: default_abandon(),
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        if self.start_date > self.end_date {
            return Err(SimulationError::InvalidDateRange {
                start: self.start_date,
                end: self.end_date,
            });
        }
        if self.students == 0 {
            return Err(SimulationError::Invalid("students must be at least 1".into()));
        }
        if self.min_actions == 0 || self.min_actions > self.max_actions {
            return Err(SimulationError::Invalid("need 1 <= min_actions <= max_actions".into()));
        }
        for (name, p) in [
            ("quiz_accuracy", self.quiz_accuracy),
            ("noise_probability", self.noise_probability),
            ("abandon_probability", self.abandon_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimulationError::Invalid(format!("{name} must be within [0, 1]")));
            }
        }
        let w = &self.study_method_weights;
        let weights = [w.question_answering, w.quizzes, w.summary, w.flashcards];
        if weights.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(SimulationError::Invalid("study method weights must be non-negative with a positive sum".into()));
        }
        if self.syllabus_topics.as_ref().is_some_and(Vec::is_empty) {
            return Err(SimulationError::Invalid("syllabus_topics must not be empty".into()));
        }
        Ok(())
    }

    fn syllabus(&self) -> Vec<String> {
        self.syllabus_topics
            .clone()
            .unwrap_or_else(|| DEFAULT_SYLLABUS.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid date range: {start} is after {end}")]
    InvalidDateRange { start: NaiveDate, end: NaiveDate },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot write cohort: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot serialize cohort: {0}")]
    Json(#[from] serde_json::Error),
}

/// One session's events, as submitted to the ingest endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionBatch {
    pub student_id: String,
    pub session_id: String,
    pub date: NaiveDate,
    pub events: Vec<SessionEvent>,
}

impl SessionBatch {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.events).expect("events serialize")
    }
}

/// Deterministic sampling on top of ChaCha20.
pub struct SimRng(ChaCha20Rng);

impl SimRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        Self(rng)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            if x >= threshold {
                return x % n;
            }
        }
    }

    pub fn between(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len() as u64) as usize]
    }

    fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut x = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

struct Tendencies {
    /// Topic pool as (syllabus position, topic).
    topics: Vec<(usize, String)>,
    /// Per-message probability of a stress, curiosity, confusion and agitation cue.
    cue_rates: [f64; 4],
    method_weights: [f64; 4],
    accuracy: f64,
}

struct Vocabulary {
    lexicon: AffectLexicon,
    verbs: Vec<(BloomLevel, Vec<String>)>,
}

impl Vocabulary {
    fn new() -> Self {
        let table = VerbTable::default();
        Self {
            lexicon: AffectLexicon::default(),
            verbs: BloomLevel::ALL
                .into_iter()
                .map(|level| {
                    (
                        level,
                        table.entries(level).iter().map(|e| e.verb.to_lowercase()).collect(),
                    )
                })
                .collect(),
        }
    }

    fn cues(&self, dimension: usize) -> &[Cue] {
        match dimension {
            0 => &self.lexicon.stress,
            1 => &self.lexicon.curiosity,
            2 => &self.lexicon.confusion,
            _ => &self.lexicon.agitation,
        }
    }
}

const OPENERS: [&str; 4] = ["Can you help me with", "I need help", "Could we work on", "Please walk me through"];

/// Generates one batch per session, ordered by student then session date.
pub fn generate_cohort(spec: &ScenarioSpec) -> Result<Vec<SessionBatch>, SimulationError> {
    generate_cohort_with(spec, Execution::default())
}

pub fn generate_cohort_with(spec: &ScenarioSpec, execution: Execution) -> Result<Vec<SessionBatch>, SimulationError> {
    spec.validate()?;
    let vocab = Vocabulary::new();
    let syllabus = spec.syllabus();
    let students: Vec<usize> = (0..spec.students).collect();
    let per_student = execution.map(&students, |&i| generate_student(spec, &syllabus, &vocab, i));
    Ok(per_student.into_iter().flatten().collect())
}

fn generate_student(spec: &ScenarioSpec, syllabus: &[String], vocab: &Vocabulary, index: usize) -> Vec<SessionBatch> {
    let mut rng = SimRng::new(spec.seed, index as u64 + 1);
    let student_id = format!("student-{:03}", index + 1);

    let mut topics: Vec<(usize, String)> = syllabus.iter().cloned().enumerate().collect();
    let keep = rng.between(topics.len().min(3) as u64, topics.len() as u64) as usize;
    for i in (1..topics.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        topics.swap(i, j);
    }
    topics.truncate(keep.max(1));

    let w = &spec.study_method_weights;
    let base = [w.question_answering, w.quizzes, w.summary, w.flashcards];
    let tendencies = Tendencies {
        topics,
        cue_rates: [
            0.05 + 0.2 * rng.unit(),
            0.1 + 0.4 * rng.unit(),
            0.1 + 0.3 * rng.unit(),
            0.02 + 0.15 * rng.unit(),
        ],
        method_weights: base.map(|b| b * (0.5 + rng.unit())),
        accuracy: (spec.quiz_accuracy + 0.3 * rng.unit() - 0.15).clamp(0.0, 1.0),
    };

    let span_days = (spec.end_date - spec.start_date).num_days() as u64;
    let mut days: Vec<NaiveDate> = spec
        .stress_spike_events
        .iter()
        .copied()
        .filter(|d| (spec.start_date..=spec.end_date).contains(d))
        .collect();
    while days.len() < spec.sessions_per_student {
        days.push(spec.start_date + Duration::days(rng.below(span_days + 1) as i64));
    }
    days.sort();

    days.into_iter()
        .enumerate()
        .map(|(j, day)| {
            let session_id = format!("{student_id}-s{:02}", j + 1);
            let spike = spec
                .stress_spike_events
                .iter()
                .any(|s| (0..=2).contains(&(*s - day).num_days()));
            let events = generate_session(&mut rng, spec, vocab, &tendencies, &student_id, &session_id, day, spike);
            SessionBatch {
                student_id: student_id.clone(),
                session_id,
                date: day,
                events,
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn generate_session(
    rng: &mut SimRng,
    spec: &ScenarioSpec,
    vocab: &Vocabulary,
    tendencies: &Tendencies,
    student_id: &str,
    session_id: &str,
    day: NaiveDate,
    spike: bool,
) -> Vec<SessionEvent> {
    let start: DateTime<Utc> =
        day.and_time(NaiveTime::from_hms_opt(9, 0, 0).expect("valid time")).and_utc() + Duration::minutes(rng.below(600) as i64);
    let mut clock = start;
    let mut events = Vec::new();
    let mut push = |at: DateTime<Utc>, kind: EventKind| {
        events.push(SessionEvent::new(student_id, session_id, at, kind));
    };
    push(clock, EventKind::Login);

    let actions = rng.between(spec.min_actions as u64, spec.max_actions as u64) as usize;
    let mut quizzes_taken: Vec<usize> = Vec::new();
    for action in 0..actions {
        clock += Duration::seconds(rng.between(20, 240) as i64);
        if rng.chance(spec.noise_probability) {
            push(
                clock,
                EventKind::UiNoise {
                    description: "user clicked on a button".into(),
                },
            );
            clock += Duration::seconds(rng.between(1, 10) as i64);
        }
        let (topic_index, topic) = rng.pick(&tendencies.topics).clone();
        // The first action is always a question so every session yields metric points.
        let mut method = if action == 0 { 0 } else { rng.weighted(&tendencies.method_weights) };
        if method == 1 && quizzes_taken.contains(&topic_index) {
            method = 2;
        }
        match method {
            0 => {
                let text = compose_message(rng, vocab, tendencies, &topic, spike);
                push(clock, EventKind::MessageSent { text });
            }
            1 => {
                quizzes_taken.push(topic_index);
                let quiz_id = format!("quiz-{:02}", topic_index + 1);
                push(
                    clock,
                    EventKind::QuizStarted {
                        quiz_id: quiz_id.clone(),
                        topic: topic.clone(),
                    },
                );
                let questions = rng.between(3, 5) as u32;
                for q in 0..questions {
                    let elapsed = rng.between(5, 90);
                    clock += Duration::seconds(elapsed as i64);
                    push(
                        clock,
                        EventKind::QuizQuestionAnswered {
                            quiz_id: quiz_id.clone(),
                            question_index: q,
                            elapsed_seconds: elapsed as f64,
                            correct: rng.chance(tendencies.accuracy),
                        },
                    );
                }
                if !rng.chance(spec.abandon_probability) {
                    clock += Duration::seconds(1);
                    push(clock, EventKind::QuizCompleted { quiz_id });
                }
            }
            2 => push(clock, EventKind::SummaryRequested { topic }),
            _ => {
                let count = rng.between(5, 20) as u32;
                push(clock, EventKind::FlashcardsGenerated { topic, count });
            }
        }
    }
    clock += Duration::seconds(rng.between(30, 300) as i64);
    push(clock, EventKind::Logout);
    events
}

/// Builds a question from an opener, one planning verb, the topic and optional cue phrases.
fn compose_message(rng: &mut SimRng, vocab: &Vocabulary, tendencies: &Tendencies, topic: &str, spike: bool) -> String {
    let (_, verbs) = rng.pick(&vocab.verbs);
    let verb = rng.pick(verbs);
    let opener = rng.pick(&OPENERS);
    let mut text = format!("{opener} {verb} {topic}?");
    for dimension in 0..4 {
        let (rate, repeats) = match (dimension, spike) {
            (0, true) => (1.0, 2),
            _ => (tendencies.cue_rates[dimension], 1),
        };
        if rng.chance(rate) {
            for _ in 0..repeats {
                let cue = rng.pick(vocab.cues(dimension));
                text.push(' ');
                text.push_str(&cue.phrase);
            }
        }
    }
    text
}

/// Writes one `<session_id>.json` file per batch.
pub fn write_cohort(batches: &[SessionBatch], dir: &Path) -> Result<(), SimulationError> {
    std::fs::create_dir_all(dir)?;
    for batch in batches {
        std::fs::write(dir.join(format!("{}.json", batch.session_id)), batch.to_json())?;
    }
    Ok(())
}
