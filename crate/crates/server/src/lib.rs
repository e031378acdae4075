//! JSON HTTP API over a [`StudentStore`].

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use classpulse_core::affect::{AffectDimension, AffectProvider, AffectScores};
use classpulse_core::bloom::{progression_series, ProgressionPoint};
use classpulse_core::config::{CourseConfig, CourseEvent};
use classpulse_core::event::{parse_event_batch, BatchError};
use classpulse_core::exec::Execution;
use classpulse_core::metrics::{
    curiosity_index, engagement_summary, quiz_stats, recent_topic_switch_rate,
    study_method_distribution, topic_switch_rate, CuriosityIndex, EngagementSummary, Period,
    QuizStats, StudyMethodDistribution,
};
use classpulse_core::pipeline::{ingest_batch, IngestReport};
use classpulse_core::store::{SessionConfusion, StudentStore, TopicScope};

pub const DISCLAIMER: &str = "This data is not 100% factual and should be used as a reference only.";

pub const DEFAULT_MAX_BODY_BYTES: usize = 8 * 1024 * 1024;

/// Every successful analytics payload is wrapped in this envelope.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub data: T,
    pub disclaimer: String,
}

fn envelope<T: Serialize>(status: StatusCode, data: T) -> Response {
    (
        status,
        Json(Envelope {
            data,
            disclaimer: DISCLAIMER.to_owned(),
        }),
    )
        .into_response()
}

fn ok<T: Serialize>(data: T) -> Response {
    envelope(StatusCode::OK, data)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<StudentStore>,
    pub config: Arc<CourseConfig>,
    pub provider: Arc<dyn AffectProvider>,
    /// Snapshot written after every ingest that stored a session.
    pub store_path: Option<PathBuf>,
    pub auth_token: Option<String>,
    pub max_body_bytes: usize,
    pub execution: Execution,
    save_lock: Arc<Mutex<()>>,
}

impl AppState {
    pub fn new(store: StudentStore, config: CourseConfig, provider: Arc<dyn AffectProvider>) -> Self {
        Self {
            store: Arc::new(store),
            config: Arc::new(config),
            provider,
            store_path: None,
            auth_token: None,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            execution: Execution::default(),
            save_lock: Arc::default(),
        }
    }

    pub fn with_store_path(mut self, path: impl Into<PathBuf>) -> Self {
        self.store_path = Some(path.into());
        self
    }

    pub fn with_auth_token(mut self, token: impl Into<String>) -> Self {
        self.auth_token = Some(token.into());
        self
    }

    pub fn with_max_body_bytes(mut self, limit: usize) -> Self {
        self.max_body_bytes = limit;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.max_body_bytes;
    Router::new()
        .route("/api/ingest/session", post(ingest))
        .route("/api/class/affect", get(class_affect))
        .route("/api/class/topics", get(class_topics))
        .route("/api/class/study-methods", get(class_study_methods))
        .route("/api/course-events", get(course_events))
        .route("/api/students", get(students))
        .route("/api/students/{id}/affect", get(student_affect))
        .route("/api/students/{id}/bloom", get(student_bloom))
        .route("/api/students/{id}/study-methods", get(student_study_methods))
        .route("/api/students/{id}/topics", get(student_topics))
        .route("/api/students/{id}/engagement", get(student_engagement))
        .route("/api/quizzes/{quiz_id}", get(quiz_detail))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn require_token(State(state): State<AppState>, request: Request, next: Next) -> Response {
    if let Some(token) = &state.auth_token {
        let presented = request
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if presented != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "missing or invalid bearer token").into_response();
        }
    }
    next.run(request).await
}

async fn ingest(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let batch = parse_event_batch(text).map_err(|e| match e {
        BatchError::Malformed { offset, .. } => ApiError::bad_request(format!("malformed JSON at byte {offset}")),
        other => ApiError::bad_request(other.to_string()),
    })?;
    if batch.events.is_empty() {
        let message = format!("batch has no valid events ({} rejected)", batch.rejects.len());
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message));
    }

    let worker = state.clone();
    let report: IngestReport = tokio::task::spawn_blocking(move || {
        let report = ingest_batch(batch, &worker.store, worker.provider.as_ref(), &worker.config, worker.execution);
        if report.sessions_stored > 0 {
            if let Some(path) = &worker.store_path {
                let _guard = worker.save_lock.lock().unwrap_or_else(|e| e.into_inner());
                if let Err(err) = worker.store.snapshot_save(path) {
                    tracing::error!(%err, "snapshot save failed");
                }
            }
        }
        report
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("ingest worker failed: {e}")))?;
    Ok(envelope(StatusCode::ACCEPTED, report))
}

#[derive(Debug, Default, Deserialize)]
struct RangeQuery {
    dimension: Option<String>,
    from: Option<String>,
    to: Option<String>,
    bucket: Option<String>,
}

/// Accepts RFC 3339 timestamps or plain dates (midnight UTC).
fn parse_instant(name: &str, value: &str) -> Result<DateTime<Utc>, ApiError> {
    if let Ok(t) = DateTime::parse_from_rfc3339(value) {
        return Ok(t.with_timezone(&Utc));
    }
    value
        .parse::<NaiveDate>()
        .map(|d| d.and_time(chrono::NaiveTime::MIN).and_utc())
        .map_err(|_| ApiError::bad_request(format!("`{name}` must be an RFC 3339 timestamp or a YYYY-MM-DD date")))
}

fn parse_bucket(value: Option<&str>, default: i64) -> Result<i64, ApiError> {
    let seconds = match value {
        None => default,
        Some("hour") => 3_600,
        Some("day") => 86_400,
        Some("week") => 604_800,
        Some(other) => other
            .parse::<i64>()
            .map_err(|_| ApiError::bad_request("`bucket` must be hour, day, week or a number of seconds"))?,
    };
    if seconds <= 0 {
        return Err(ApiError::bad_request("`bucket` must be positive"));
    }
    Ok(seconds)
}

struct Range {
    from: Option<DateTime<Utc>>,
    to: Option<DateTime<Utc>>,
}

impl Range {
    fn parse(q: &RangeQuery) -> Result<Self, ApiError> {
        let from = q.from.as_deref().map(|v| parse_instant("from", v)).transpose()?;
        let to = q.to.as_deref().map(|v| parse_instant("to", v)).transpose()?;
        if let (Some(f), Some(t)) = (from, to) {
            if f > t {
                return Err(ApiError::bad_request("`from` is after `to`"));
            }
        }
        Ok(Self { from, to })
    }

    fn period(&self) -> Period {
        let all = Period::everything();
        Period::new(self.from.unwrap_or(all.start), self.to.unwrap_or(all.end))
    }
}

fn parse_dimension(value: Option<&str>) -> Result<AffectDimension, ApiError> {
    value.unwrap_or("stress").parse().map_err(ApiError::bad_request)
}

#[derive(Serialize)]
struct SeriesPoint {
    bucket_start: DateTime<Utc>,
    value: f64,
    students: usize,
}

#[derive(Serialize)]
struct ClassAffect {
    dimension: AffectDimension,
    bucket_seconds: i64,
    series: Vec<SeriesPoint>,
    course_events: Vec<CourseEvent>,
}

async fn class_affect(State(state): State<AppState>, Query(q): Query<RangeQuery>) -> ApiResult {
    let dimension = parse_dimension(q.dimension.as_deref())?;
    let range = Range::parse(&q)?;
    let bucket_seconds = parse_bucket(q.bucket.as_deref(), state.config.thresholds.bucket_seconds)?;
    let aggregate = state
        .store
        .class_aggregate_with(range.period(), bucket_seconds, state.execution);
    let series = aggregate
        .affect_series
        .iter()
        .map(|b| SeriesPoint {
            bucket_start: b.bucket_start,
            value: b.get(dimension),
            students: b.students,
        })
        .collect();
    Ok(ok(ClassAffect {
        dimension,
        bucket_seconds,
        series,
        course_events: state.config.events_between(range.from, range.to),
    }))
}

#[derive(Serialize)]
struct Topics {
    topics: Vec<TopicRow>,
}

#[derive(Serialize)]
struct TopicRow {
    topic: String,
    in_syllabus: bool,
}

fn topic_rows(state: &AppState, topics: Vec<String>) -> Topics {
    Topics {
        topics: topics
            .into_iter()
            .map(|topic| TopicRow {
                in_syllabus: state.config.is_syllabus_topic(&topic),
                topic,
            })
            .collect(),
    }
}

async fn class_topics(State(state): State<AppState>) -> ApiResult {
    let topics = state.store.dedup_topics(TopicScope::Class);
    Ok(ok(topic_rows(&state, topics)))
}

async fn class_study_methods(State(state): State<AppState>) -> ApiResult {
    Ok(ok(state.store.class_study_methods()))
}

async fn course_events(State(state): State<AppState>) -> ApiResult {
    Ok(ok(&state.config.course_events))
}

#[derive(Serialize)]
struct StudentList {
    students: Vec<String>,
}

async fn students(State(state): State<AppState>) -> ApiResult {
    Ok(ok(StudentList {
        students: state.store.student_ids(),
    }))
}

fn find_student(state: &AppState, id: &str) -> Result<classpulse_core::store::StudentRecord, ApiError> {
    state
        .store
        .record(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown student `{id}`")))
}

#[derive(Serialize)]
struct AffectPoint {
    timestamp: DateTime<Utc>,
    session_id: String,
    #[serde(flatten)]
    affect: AffectScores,
    topic: String,
    exploratory: bool,
    degraded: bool,
}

#[derive(Serialize)]
struct StudentAffect {
    student_id: String,
    points: Vec<AffectPoint>,
    course_events: Vec<CourseEvent>,
}

async fn student_affect(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RangeQuery>,
) -> ApiResult {
    let record = find_student(&state, &id)?;
    let range = Range::parse(&q)?;
    let period = range.period();
    let points = record
        .metric_points
        .into_iter()
        .filter(|p| period.contains(p.timestamp))
        .map(|p| AffectPoint {
            timestamp: p.timestamp,
            session_id: p.session_id,
            affect: p.affect,
            topic: p.topic,
            exploratory: p.exploratory,
            degraded: p.degraded,
        })
        .collect();
    Ok(ok(StudentAffect {
        student_id: record.student_id,
        points,
        course_events: state.config.events_between(range.from, range.to),
    }))
}

#[derive(Serialize)]
struct StudentBloom {
    student_id: String,
    progression: Vec<ProgressionPoint>,
}

async fn student_bloom(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let record = find_student(&state, &id)?;
    Ok(ok(StudentBloom {
        progression: progression_series(&record),
        student_id: record.student_id,
    }))
}

#[derive(Serialize)]
struct StudentMethods {
    student_id: String,
    #[serde(flatten)]
    distribution: StudyMethodDistribution,
}

async fn student_study_methods(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let record = find_student(&state, &id)?;
    Ok(ok(StudentMethods {
        distribution: study_method_distribution(&record),
        student_id: record.student_id,
    }))
}

async fn student_topics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    find_student(&state, &id)?;
    let topics = state.store.dedup_topics(TopicScope::Student(&id));
    Ok(ok(topic_rows(&state, topics)))
}

#[derive(Serialize)]
struct StudentEngagement {
    student_id: String,
    engagement: EngagementSummary,
    curiosity: CuriosityIndex,
    confusion: Vec<SessionConfusion>,
    topic_switch_rate: f64,
    recent_topic_switch_rate: f64,
}

async fn student_engagement(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<RangeQuery>,
) -> ApiResult {
    let record = find_student(&state, &id)?;
    let range = Range::parse(&q)?;
    Ok(ok(StudentEngagement {
        engagement: engagement_summary(&record, range.period()),
        curiosity: curiosity_index(&record, &state.config),
        topic_switch_rate: topic_switch_rate(&record.metric_points),
        recent_topic_switch_rate: recent_topic_switch_rate(
            &record.metric_points,
            state.config.thresholds.agitation_window,
        ),
        confusion: record.confusion_counts,
        student_id: record.student_id,
    }))
}

#[derive(Serialize)]
struct QuizAttempt {
    student_id: String,
    started: DateTime<Utc>,
    #[serde(flatten)]
    stats: QuizStats,
}

#[derive(Serialize)]
struct QuizDetail {
    quiz_id: String,
    topic: String,
    attempts: Vec<QuizAttempt>,
}

async fn quiz_detail(State(state): State<AppState>, Path(quiz_id): Path<String>) -> ApiResult {
    let attempts = state.store.quiz_attempts(&quiz_id);
    let Some((_, first)) = attempts.first() else {
        return Err(ApiError::not_found(format!("no completed attempts for quiz `{quiz_id}`")));
    };
    let topic = first.topic.clone();
    let attempts = attempts
        .into_iter()
        .filter_map(|(student_id, quiz)| {
            quiz_stats(&quiz).ok().map(|stats| QuizAttempt {
                student_id,
                started: quiz.started,
                stats,
            })
        })
        .collect();
    Ok(ok(QuizDetail {
        quiz_id,
        topic,
        attempts,
    }))
}
