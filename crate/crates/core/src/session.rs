//! Per-session analysis: cleaned events in, text-free [`SessionOutcome`] out.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::affect::{analyze_message, AffectProvider};
use crate::clean::{DropReason, Dropped};
use crate::config::CourseConfig;
use crate::event::{EventKind, SessionEvent};
use crate::metrics::{
    confusion_index, question_tokens, LoginSpan, MethodUse, QuestionTiming, QuizRecord, StudyMethod,
    StudyMethodDistribution,
};
use crate::store::MetricPoint;
use crate::window::{ConversationWindow, Role};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSummary {
    pub count: usize,
    pub reasons: BTreeMap<String, usize>,
}

/// Everything a session contributes to a student record. Carries no message text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub student_id: String,
    pub session_id: String,
    /// Non-decreasing in timestamp.
    pub metric_points: Vec<MetricPoint>,
    pub quiz_records: Vec<QuizRecord>,
    pub study_method_increments: StudyMethodDistribution,
    pub method_uses: Vec<MethodUse>,
    pub login_span: Option<LoginSpan>,
    /// Questions repeating an earlier question of the session; cannot be recomputed later.
    pub repeated_questions: u32,
    pub dropped_events: DroppedSummary,
}

impl SessionOutcome {
    /// Records what cleaning removed from this session. Abandoned quizzes still count as a
    /// use of the quiz study method; their timings stay out.
    pub fn record_dropped(&mut self, dropped: &[Dropped]) {
        for d in dropped {
            self.dropped_events.count += 1;
            *self
                .dropped_events
                .reasons
                .entry(d.reason.as_str().to_owned())
                .or_default() += 1;
            if d.reason == DropReason::IncompleteQuiz {
                if let EventKind::QuizStarted { .. } = d.event.kind {
                    self.study_method_increments.increment(StudyMethod::Quizzes);
                    self.method_uses.push(MethodUse {
                        timestamp: d.event.timestamp,
                        method: StudyMethod::Quizzes,
                    });
                }
            }
        }
        self.method_uses.sort_by_key(|u| u.timestamp);
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("session has no events")]
    Empty,
    #[error("events from more than one session: ({0}, {1}) and ({2}, {3})")]
    MixedSessions(String, String, String, String),
}

/// Analyzes one cleaned session.
///
/// Each message is scored while its text is held in the conversation window; the window
/// is dropped on return. Provider failures never abort the session.
pub fn run_session(
    events: &[SessionEvent],
    provider: &dyn AffectProvider,
    config: &CourseConfig,
) -> Result<SessionOutcome, SessionError> {
    let first = events.first().ok_or(SessionError::Empty)?;
    if let Some(other) = events.iter().find(|e| e.session_key() != first.session_key()) {
        return Err(SessionError::MixedSessions(
            first.student_id.clone(),
            first.session_id.clone(),
            other.student_id.clone(),
            other.session_id.clone(),
        ));
    }

    let mut window = ConversationWindow::new();
    let mut questions = Vec::new();
    let mut metric_points = Vec::new();
    let mut increments = StudyMethodDistribution::default();
    let mut method_uses = Vec::new();
    let mut quizzes: BTreeMap<&str, QuizBuilder> = BTreeMap::new();
    let mut login: Option<DateTime<Utc>> = None;
    let mut logout: Option<DateTime<Utc>> = None;

    for event in events {
        let mut used = |method: StudyMethod| {
            increments.increment(method);
            method_uses.push(MethodUse {
                timestamp: event.timestamp,
                method,
            });
        };
        match &event.kind {
            EventKind::MessageSent { text } => {
                used(StudyMethod::QuestionAnswering);
                let analysis = analyze_message(text, &window, provider, config);
                metric_points.push(MetricPoint {
                    timestamp: event.timestamp,
                    session_id: event.session_id.clone(),
                    affect: analysis.affect,
                    topic: analysis.topic,
                    bloom: analysis.bloom,
                    exploratory: analysis.exploratory,
                    degraded: analysis.degraded,
                });
                questions.push(question_tokens(text));
                window.push(Role::Student, text.as_str());
            }
            EventKind::QuizStarted { quiz_id, topic } => {
                used(StudyMethod::Quizzes);
                let quiz = quizzes.entry(quiz_id).or_default();
                if quiz.started.is_none() {
                    quiz.started = Some((event.timestamp, topic.clone()));
                }
            }
            EventKind::QuizQuestionAnswered {
                quiz_id,
                question_index,
                elapsed_seconds,
                correct,
            } => {
                quizzes.entry(quiz_id).or_default().answers.push(QuestionTiming {
                    index: *question_index,
                    elapsed_seconds: *elapsed_seconds,
                    correct: *correct,
                });
            }
            EventKind::QuizCompleted { quiz_id } => {
                let quiz = quizzes.entry(quiz_id).or_default();
                quiz.completed.get_or_insert(event.timestamp);
            }
            EventKind::SummaryRequested { .. } => used(StudyMethod::Summary),
            EventKind::FlashcardsGenerated { .. } => used(StudyMethod::Flashcards),
            EventKind::Login => {
                login.get_or_insert(event.timestamp);
            }
            EventKind::Logout => logout = Some(event.timestamp),
            EventKind::UiNoise { .. } => {}
        }
    }
    window.clear();

    let last = events.last().map_or(first.timestamp, |e| e.timestamp);
    let login = login.unwrap_or(first.timestamp);
    let login_span = LoginSpan {
        login,
        logout: logout.unwrap_or(last).max(login),
    };

    Ok(SessionOutcome {
        student_id: first.student_id.clone(),
        session_id: first.session_id.clone(),
        metric_points,
        quiz_records: quizzes
            .into_iter()
            .filter_map(|(id, q)| q.build(id))
            .collect(),
        study_method_increments: increments,
        method_uses,
        login_span: Some(login_span),
        repeated_questions: confusion_index(&questions, config.thresholds.repeat_similarity),
        dropped_events: DroppedSummary::default(),
    })
}

#[derive(Default)]
struct QuizBuilder {
    started: Option<(DateTime<Utc>, String)>,
    completed: Option<DateTime<Utc>>,
    answers: Vec<QuestionTiming>,
}

impl QuizBuilder {
    /// Only quizzes with a start and a completion become records.
    fn build(mut self, quiz_id: &str) -> Option<QuizRecord> {
        let (started, topic) = self.started?;
        let completed = self.completed?;
        self.answers.sort_by_key(|a| a.index);
        self.answers.dedup_by_key(|a| a.index);
        Some(QuizRecord {
            quiz_id: quiz_id.to_owned(),
            topic,
            started,
            completed: completed.max(started),
            per_question: self.answers,
            complete: true,
        })
    }
}
