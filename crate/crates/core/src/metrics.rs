//! Engagement, confusion, curiosity and agitation proxies, study-method usage and quiz
//! statistics.

use std::collections::{BTreeSet, HashSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::normalize_text;
use crate::config::CourseConfig;
use crate::store::{MetricPoint, StudentRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMethod {
    QuestionAnswering,
    Quizzes,
    Summary,
    Flashcards,
}

/// Usage counts of the four interaction modes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyMethodDistribution {
    pub question_answering: u64,
    pub quizzes: u64,
    pub summary: u64,
    pub flashcards: u64,
}

impl StudyMethodDistribution {
    pub fn increment(&mut self, method: StudyMethod) {
        *self.slot(method) += 1;
    }

    pub fn get(&self, method: StudyMethod) -> u64 {
        match method {
            StudyMethod::QuestionAnswering => self.question_answering,
            StudyMethod::Quizzes => self.quizzes,
            StudyMethod::Summary => self.summary,
            StudyMethod::Flashcards => self.flashcards,
        }
    }

    fn slot(&mut self, method: StudyMethod) -> &mut u64 {
        match method {
            StudyMethod::QuestionAnswering => &mut self.question_answering,
            StudyMethod::Quizzes => &mut self.quizzes,
            StudyMethod::Summary => &mut self.summary,
            StudyMethod::Flashcards => &mut self.flashcards,
        }
    }

    pub fn total(&self) -> u64 {
        self.question_answering + self.quizzes + self.summary + self.flashcards
    }
}

impl std::ops::Add for StudyMethodDistribution {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            question_answering: self.question_answering + rhs.question_answering,
            quizzes: self.quizzes + rhs.quizzes,
            summary: self.summary + rhs.summary,
            flashcards: self.flashcards + rhs.flashcards,
        }
    }
}

impl std::ops::AddAssign for StudyMethodDistribution {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for StudyMethodDistribution {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

/// One timestamped use of a study method, kept so engagement can be restricted to a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodUse {
    pub timestamp: DateTime<Utc>,
    pub method: StudyMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginSpan {
    pub login: DateTime<Utc>,
    pub logout: DateTime<Utc>,
}

impl LoginSpan {
    pub fn seconds(&self) -> f64 {
        (self.logout - self.login).num_milliseconds() as f64 / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionTiming {
    pub index: u32,
    pub elapsed_seconds: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizRecord {
    pub quiz_id: String,
    pub topic: String,
    pub started: DateTime<Utc>,
    pub completed: DateTime<Utc>,
    /// Sorted by question index; indices are unique.
    pub per_question: Vec<QuestionTiming>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizScore {
    pub correct: u32,
    pub total: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuizStats {
    pub total_seconds: f64,
    pub per_question_seconds: Vec<f64>,
    pub correct_flags: Vec<bool>,
    pub score: QuizScore,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("incomplete quiz reached metrics")]
    IncompleteQuiz,
}

pub fn quiz_stats(quiz: &QuizRecord) -> Result<QuizStats, MetricsError> {
    if !quiz.complete {
        return Err(MetricsError::IncompleteQuiz);
    }
    let per_question_seconds: Vec<f64> = quiz.per_question.iter().map(|q| q.elapsed_seconds).collect();
    let correct_flags: Vec<bool> = quiz.per_question.iter().map(|q| q.correct).collect();
    Ok(QuizStats {
        total_seconds: per_question_seconds.iter().sum(),
        score: QuizScore {
            correct: correct_flags.iter().filter(|c| **c).count() as u32,
            total: correct_flags.len() as u32,
        },
        per_question_seconds,
        correct_flags,
    })
}

/// Half-open time range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Period {
    pub fn new(start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn everything() -> Self {
        Self {
            start: DateTime::<Utc>::MIN_UTC,
            end: DateTime::<Utc>::MAX_UTC,
        }
    }

    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start <= t && t < self.end
    }

    /// Portion of a login span inside the period, if any.
    fn clip(&self, span: &LoginSpan) -> Option<LoginSpan> {
        let login = span.login.max(self.start);
        let logout = span.logout.min(self.end);
        if login < logout || (span.login == span.logout && self.contains(span.login)) {
            Some(LoginSpan { login, logout })
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EngagementSummary {
    pub questions_asked: u64,
    pub flashcard_uses: u64,
    pub quiz_uses: u64,
    pub summary_uses: u64,
    pub total_interaction_seconds: f64,
    pub login_count: u64,
    pub mean_session_seconds: f64,
}

/// Active and passive engagement within a period. Session time is clipped to the period
/// and the mean is taken over the clipped spans.
pub fn engagement_summary(record: &StudentRecord, period: Period) -> EngagementSummary {
    let mut summary = EngagementSummary {
        questions_asked: record
            .metric_points
            .iter()
            .filter(|p| period.contains(p.timestamp))
            .count() as u64,
        ..Default::default()
    };
    for usage in record.method_uses.iter().filter(|u| period.contains(u.timestamp)) {
        match usage.method {
            StudyMethod::Flashcards => summary.flashcard_uses += 1,
            StudyMethod::Quizzes => summary.quiz_uses += 1,
            StudyMethod::Summary => summary.summary_uses += 1,
            StudyMethod::QuestionAnswering => {}
        }
    }
    for span in record.login_spans.iter().filter_map(|s| period.clip(s)) {
        summary.login_count += 1;
        summary.total_interaction_seconds += span.seconds();
    }
    if summary.login_count > 0 {
        summary.mean_session_seconds = summary.total_interaction_seconds / summary.login_count as f64;
    }
    summary
}

/// Normalized token set of a question, as used for repeat detection.
pub fn question_tokens(text: &str) -> BTreeSet<String> {
    crate::bloom::tokenize(text).into_iter().collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Counts questions whose token-set Jaccard similarity to any earlier question of the same
/// session reaches the threshold.
pub fn confusion_index(questions: &[BTreeSet<String>], similarity_threshold: f64) -> u32 {
    questions
        .iter()
        .enumerate()
        .filter(|(i, q)| {
            questions[..*i]
                .iter()
                .any(|earlier| jaccard(earlier, q) >= similarity_threshold)
        })
        .count() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CuriosityIndex {
    pub distinct_topics: u64,
    pub exploratory_questions: u64,
}

/// Topic variety (case-insensitive) and count of questions outside the syllabus.
pub fn curiosity_index(record: &StudentRecord, _config: &CourseConfig) -> CuriosityIndex {
    let topics: HashSet<String> = record
        .metric_points
        .iter()
        .map(|p| normalize_text(&p.topic))
        .collect();
    CuriosityIndex {
        distinct_topics: topics.len() as u64,
        exploratory_questions: record.metric_points.iter().filter(|p| p.exploratory).count() as u64,
    }
}

/// Fraction of consecutive point pairs whose topics differ; 0 for fewer than two points.
pub fn topic_switch_rate(points: &[MetricPoint]) -> f64 {
    if points.len() <= 1 {
        return 0.0;
    }
    let switches = points
        .windows(2)
        .filter(|pair| normalize_text(&pair[0].topic) != normalize_text(&pair[1].topic))
        .count();
    switches as f64 / (points.len() - 1) as f64
}

/// Topic-switch rate over the last `window` points.
pub fn recent_topic_switch_rate(points: &[MetricPoint], window: usize) -> f64 {
    let start = points.len().saturating_sub(window);
    topic_switch_rate(&points[start..])
}

pub fn study_method_distribution(record: &StudentRecord) -> StudyMethodDistribution {
    record.study_methods
}
