//! Acceptance checks, one PASS/FAIL line per criterion.

use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::sync::Arc;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde_json::Value;

use classpulse_core::affect::remote::{ChatTransport, RemoteProvider};
use classpulse_core::affect::{
    analyze_message, lexicon_score, parse_provider_response, AffectDimension, AffectLexicon,
    AffectScores, LexiconProvider, ProviderError, ProviderRequest,
};
use classpulse_core::bloom::{BloomLevel, VerbTable};
use classpulse_core::clean::{clean_events, DropReason};
use classpulse_core::config::{CourseConfig, CourseEvent, CourseEventKind};
use classpulse_core::event::{EventKind, SessionEvent};
use classpulse_core::exec::Execution;
use classpulse_core::metrics::{quiz_stats, Period, QuestionTiming, QuizRecord};
use classpulse_core::pipeline::ingest_document;
use classpulse_core::simulator::{generate_cohort, generate_cohort_with, write_cohort, ScenarioSpec, SimRng};
use classpulse_core::store::{dedup_topics, StudentStore};
use classpulse_core::window::{estimate_tokens, ConversationWindow, Role};
use classpulse_server::{AppState, DISCLAIMER};

type Check = Result<(), String>;
type NamedCheck<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn at(s: &str) -> DateTime<Utc> {
    s.parse().unwrap()
}

// ---------------------------------------------------------------------------------------
// Bloom

const VERB_TABLE: &str = include_str!("../../core/data/bloom_verbs.json");

fn bloom_verb_fidelity() -> Check {
    let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(VERB_TABLE).map_err(|e| e.to_string())?;
    let table = VerbTable::default();
    // Expected label: the highest level whose list contains the verb, by plain string comparison.
    let mut expected: BTreeMap<String, BloomLevel> = BTreeMap::new();
    for (level, verbs) in &raw {
        let level: BloomLevel = level.parse().map_err(|e| format!("{e}"))?;
        for verb in verbs {
            let slot = expected.entry(verb.to_lowercase()).or_insert(level);
            *slot = (*slot).max(level);
        }
    }
    let mut checked = 0;
    for verbs in raw.values() {
        for verb in verbs {
            let want = expected[&verb.to_lowercase()];
            let got = table.classify(verb);
            ensure(got == Some(want), || format!("{verb}: expected {want}, got {got:?}"))?;
            checked += 1;
        }
    }
    ensure(checked == 127, || format!("expected 127 table entries, checked {checked}"))
}

fn bloom_fixture_corpus() -> Check {
    use BloomLevel::*;
    let corpus: [(&str, Option<BloomLevel>); 36] = [
        ("Can you help me with defining engineering ethics?", Some(Remembering)),
        ("I am locating the code of ethics for my report", Some(Remembering)),
        ("Help me with memorizing the safety standards", Some(Remembering)),
        ("Can you help me with summarizing this case?", Some(Understanding)),
        ("I need help paraphrasing the privacy clause", Some(Understanding)),
        ("Help me with comparing two codes of ethics", Some(Understanding)),
        ("How do I go about interpreting this clause?", Some(Understanding)),
        ("Help me with annotating the safety case", Some(Understanding)),
        ("Help me with predicting the outcome of this case", Some(Evaluating)),
        ("Help me with implementing a privacy policy", Some(Applying)),
        ("Can you help me with examining this dilemma?", Some(Applying)),
        ("Help me with sketching a safety plan", Some(Applying)),
        ("Help me with acting out a whistleblower scenario", Some(Applying)),
        ("Help me with calculating the risk", Some(Analyzing)),
        ("Help me with correlating incidents and causes", Some(Analyzing)),
        ("Help me with breaking down this case study", Some(Analyzing)),
        ("Help me with distinguishing duty from loyalty", Some(Analyzing)),
        ("Help me with explaining this clause", Some(Analyzing)),
        ("Help me with assessing the risk of this design", Some(Evaluating)),
        ("Help me with debating this dilemma", Some(Evaluating)),
        ("Help me with reviewing my essay", Some(Evaluating)),
        ("Help me with criticizing this policy", Some(Evaluating)),
        ("Help me with hypothesizing about the cause", Some(Evaluating)),
        ("Help me with composing an essay", Some(Creating)),
        ("Help me with devising a safety plan", Some(Creating)),
        ("Help me with solving this dilemma", Some(Creating)),
        ("Help me with negotiating a fair contract", Some(Creating)),
        ("Help me with defining and solving this dilemma", Some(Creating)),
        ("Help me with summarizing and assessing this case", Some(Evaluating)),
        ("Help me with role playing a whistleblower", Some(Creating)),
        ("Help me with playing a role", Some(Creating)),
        ("What is engineering ethics?", None),
        ("Tell me about privacy in engineering", None),
        ("SUMMARIZING THIS CASE", Some(Understanding)),
        ("Help me with wiki building for the course", Some(Creating)),
        ("Help me with building a bridge", Some(Creating)),
    ];
    let table = VerbTable::default();
    let misses: Vec<String> = corpus
        .iter()
        .filter_map(|(text, want)| {
            let got = table.classify(text);
            (got != *want).then(|| format!("{text:?}: expected {want:?}, got {got:?}"))
        })
        .collect();
    ensure(misses.is_empty(), || misses.join("; "))
}

// ---------------------------------------------------------------------------------------
// Window and tokens

fn words(n: usize, tag: usize) -> String {
    let mut text = format!("m{tag}");
    for _ in 1..n {
        text.push_str(" w");
    }
    if n == 0 {
        String::new()
    } else {
        text
    }
}

fn window_properties() -> Check {
    let mut rng = SimRng::new(2024, 1);
    let mut window = ConversationWindow::new();
    let mut history: Vec<String> = Vec::new();
    for push in 0..12_000usize {
        // Mostly small turns, some large, a few larger than the whole window.
        let n = match rng.below(100) {
            0 => rng.between(6_001, 9_000),
            1..=10 => rng.between(500, 3_000),
            _ => rng.between(1, 200),
        } as usize;
        let text = words(n, push);
        let role = if push % 2 == 0 { Role::Student } else { Role::Assistant };
        window.push(role, text.clone());
        history.push(text);

        let entries: Vec<_> = window.entries().collect();
        let total: usize = entries.iter().map(|e| e.token_count).sum();
        ensure(total == window.total_tokens(), || format!("push {push}: running total drifted"))?;
        ensure(total <= 8192 || entries.len() == 1, || format!("push {push}: {total} tokens in {} entries", entries.len()))?;
        ensure(entries.last().map(|e| &e.text) == history.last(), || format!("push {push}: newest entry missing"))?;
        let suffix = &history[history.len() - entries.len()..];
        ensure(
            entries.iter().map(|e| &e.text).eq(suffix.iter()),
            || format!("push {push}: retained entries are not a suffix of the history"),
        )?;
        // Nothing was evicted that could still have fit.
        if history.len() > entries.len() {
            let previous = estimate_tokens(&history[history.len() - entries.len() - 1]);
            ensure(total + previous > 8192, || format!("push {push}: evicted more than needed"))?;
        }
    }
    Ok(())
}

fn token_ratio() -> Check {
    ensure(estimate_tokens(&words(6000, 0)) == 8192, || "6000 words did not estimate to 8192 tokens".into())?;
    ensure(estimate_tokens("") == 0, || "empty text must be 0 tokens".into())?;
    ensure(estimate_tokens("hello") == 2, || "one word must be ceil(8192/6000) = 2 tokens".into())?;
    let mut rng = SimRng::new(7, 2);
    for _ in 0..1_000 {
        let a = rng.below(8_000) as usize;
        let b = a + rng.below(500) as usize;
        let (ta, tb) = (estimate_tokens(&words(a, 0)), estimate_tokens(&words(b, 0)));
        ensure(ta <= tb, || format!("{a} words -> {ta}, {b} words -> {tb}"))?;
        let oracle = if a == 0 { 0 } else { ((a as u128 * 8192).div_ceil(6000)) as usize };
        ensure(ta == oracle, || format!("{a} words -> {ta}, expected {oracle}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------
// Cleaning

fn random_batch(rng: &mut SimRng) -> Vec<SessionEvent> {
    let base = at("2024-03-01T10:00:00Z");
    let n = rng.between(0, 40) as usize;
    let mut events: Vec<SessionEvent> = Vec::new();
    for _ in 0..n {
        // Coarse timestamps so ties and exact duplicates are common.
        let t = base + Duration::seconds(rng.below(12) as i64 * 10);
        let session = if rng.chance(0.8) { "a" } else { "b" };
        let quiz = format!("q{}", rng.below(3));
        let kind = match rng.below(9) {
            0 => EventKind::Login,
            1 => EventKind::Logout,
            2 => EventKind::UiNoise { description: "user clicked on a button".into() },
            3 => EventKind::MessageSent { text: format!("question {}", rng.below(3)) },
            4 => EventKind::QuizStarted { quiz_id: quiz, topic: "Engineering Ethics".into() },
            5 => EventKind::QuizCompleted { quiz_id: quiz },
            6 | 7 => EventKind::QuizQuestionAnswered {
                quiz_id: quiz,
                question_index: rng.below(3) as u32,
                elapsed_seconds: (rng.below(3) * 15) as f64,
                correct: rng.chance(0.5),
            },
            _ => EventKind::SummaryRequested { topic: "Engineering Ethics".into() },
        };
        let event = SessionEvent::new("s1", session, t, kind);
        if rng.chance(0.15) {
            events.push(event.clone());
        }
        events.push(event);
    }
    // Shuffle so the cleaner has to sort.
    for i in (1..events.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        events.swap(i, j);
    }
    events
}

/// Quadratic reference implementation written from the rules alone.
fn brute_force_clean(events: &[SessionEvent]) -> (Vec<SessionEvent>, Vec<(SessionEvent, DropReason)>) {
    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by(|&a, &b| events[a].timestamp.cmp(&events[b].timestamp).then(a.cmp(&b)));
    let sorted: Vec<&SessionEvent> = order.iter().map(|&i| &events[i]).collect();

    let answer_key = |e: &SessionEvent| match &e.kind {
        EventKind::QuizQuestionAnswered { quiz_id, question_index, .. } => {
            Some((e.student_id.clone(), e.session_id.clone(), quiz_id.clone(), *question_index))
        }
        _ => None,
    };
    let has = |pred: &dyn Fn(&SessionEvent) -> bool| sorted.iter().any(|e| pred(e));

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (pos, event) in sorted.iter().enumerate() {
        let earlier = &sorted[..pos];
        let reason = if matches!(event.kind, EventKind::UiNoise { .. }) {
            Some(DropReason::Irrelevant)
        } else if earlier.iter().any(|e| e == event)
            || (answer_key(event).is_some() && earlier.iter().any(|e| answer_key(e) == answer_key(event)))
        {
            Some(DropReason::Duplicate)
        } else if let Some(quiz) = event.kind.quiz_id() {
            let same = |e: &SessionEvent| {
                e.student_id == event.student_id && e.session_id == event.session_id && e.kind.quiz_id() == Some(quiz)
            };
            let started = has(&|e| same(e) && matches!(e.kind, EventKind::QuizStarted { .. }));
            let completed = has(&|e| same(e) && matches!(e.kind, EventKind::QuizCompleted { .. }));
            (!(started && completed)).then_some(DropReason::IncompleteQuiz)
        } else {
            None
        };
        match reason {
            Some(r) => dropped.push(((*event).clone(), r)),
            None => kept.push((*event).clone()),
        }
    }
    (kept, dropped)
}

fn cleaning_oracle() -> Check {
    let mut rng = SimRng::new(99, 4);
    for round in 0..100 {
        let batch = random_batch(&mut rng);
        let cleaned = clean_events(batch.clone());
        let (kept, dropped) = brute_force_clean(&batch);
        ensure(cleaned.kept == kept, || format!("batch {round}: kept events differ"))?;
        let got: Vec<_> = cleaned.dropped.iter().map(|d| (d.event.clone(), d.reason)).collect();
        ensure(got == dropped, || format!("batch {round}: dropped events differ"))?;
        ensure(cleaned.kept.len() + cleaned.dropped.len() == batch.len(), || format!("batch {round}: events lost"))?;
        let again = clean_events(cleaned.kept.clone());
        ensure(again.kept == cleaned.kept && again.dropped.is_empty(), || format!("batch {round}: not idempotent"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------
// Affect

struct Canned(String);

impl ChatTransport for Canned {
    fn complete(&self, _: &ProviderRequest) -> Result<String, ProviderError> {
        Ok(self.0.clone())
    }
}

const FILLER: [&str; 12] = [
    "what", "is", "the", "code", "ethics", "engineering", "safety", "report", "why", "my", "project", "today",
];

fn affect_bounds_and_monotonicity() -> Check {
    let lexicon = AffectLexicon::default();
    let config = CourseConfig::default();
    let window = ConversationWindow::new();
    let mut rng = SimRng::new(31, 5);
    let cues: Vec<(AffectDimension, String)> = AffectDimension::ALL
        .into_iter()
        .flat_map(|d| {
            let list = match d {
                AffectDimension::Stress => &lexicon.stress,
                AffectDimension::Curiosity => &lexicon.curiosity,
                AffectDimension::Confusion => &lexicon.confusion,
                AffectDimension::Agitation => &lexicon.agitation,
            };
            list.iter().map(move |c| (d, c.phrase.clone()))
        })
        .collect();

    for i in 0..1_500 {
        let mut text = String::new();
        for _ in 0..rng.between(0, 25) {
            if !text.is_empty() {
                text.push(' ');
            }
            if rng.chance(0.2) {
                text.push_str(&rng.pick(&cues).1);
            } else {
                text.push_str(rng.pick(&FILLER));
            }
        }
        let base = lexicon_score(&text, &lexicon);
        ensure(base.in_range(), || format!("text {i}: {base:?} out of range"))?;
        ensure(lexicon_score(&text, &lexicon) == base, || format!("text {i}: not deterministic"))?;
        ensure(lexicon_score(&text.to_uppercase(), &lexicon) == base, || format!("text {i}: case-sensitive"))?;

        let (dimension, cue) = rng.pick(&cues).clone();
        let extended = lexicon_score(&format!("{text} {cue}"), &lexicon);
        for d in AffectDimension::ALL {
            ensure(extended.get(d) >= base.get(d), || format!("text {i}: appending {cue:?} lowered {}", d.as_str()))?;
        }
        ensure(
            base.get(dimension) == AffectScores::MAX || extended.get(dimension) > base.get(dimension),
            || format!("text {i}: appending {cue:?} did not raise {}", dimension.as_str()),
        )?;

        // Adversarial provider replies always end up in range, through clamping or fallback.
        let n = |rng: &mut SimRng| -> String {
            match rng.below(6) {
                0 => format!("{}", -(rng.between(0, 1_000_000) as f64)),
                1 => format!("{}", rng.between(11, 1_000_000)),
                2 => format!("{:.3}", rng.unit() * 12.0),
                3 => "\"seven\"".into(),
                4 => "null".into(),
                _ => format!("{}", rng.between(1, 10)),
            }
        };
        let reply = format!(
            "noise {{\"stress\": {}, \"curiosity\": {}, \"confusion\": {}, \"agitation\": {}, \"topic\": \"x\"}}",
            n(&mut rng),
            n(&mut rng),
            n(&mut rng),
            n(&mut rng)
        );
        if let Ok(parsed) = parse_provider_response(&reply) {
            ensure(parsed.affect.in_range(), || format!("reply {reply:?} parsed out of range"))?;
        }
        let provider = RemoteProvider::new(Canned(reply.clone()), 1);
        let analysis = analyze_message(&text, &window, &provider, &config);
        ensure(analysis.affect.in_range(), || format!("reply {reply:?} produced {:?}", analysis.affect))?;
    }
    let lexicon_only = analyze_message("fine", &window, &LexiconProvider, &config);
    ensure(!lexicon_only.degraded, || "lexicon analysis flagged degraded".into())
}

// ---------------------------------------------------------------------------------------
// Aggregation and simulator

fn ingest_cohort(spec: &ScenarioSpec, config: &CourseConfig) -> Result<StudentStore, String> {
    let store = StudentStore::new();
    for batch in generate_cohort(spec).map_err(|e| e.to_string())? {
        let report = ingest_document(&batch.to_json(), &store, &LexiconProvider, config, Execution::Parallel)
            .map_err(|e| e.to_string())?;
        ensure(report.rejected == 0, || format!("{} rejected simulator events", report.rejected))?;
    }
    Ok(store)
}

fn aggregation_oracle() -> Check {
    let spec = ScenarioSpec {
        sessions_per_student: 6,
        ..ScenarioSpec::new(11, 10, date("2024-03-04"), date("2024-03-31"))
    };
    let store = ingest_cohort(&spec, &CourseConfig::default())?;
    ensure(store.student_count() == 10, || format!("{} students stored", store.student_count()))?;

    for bucket in [3_600i64, 86_400, 604_800] {
        let aggregate = store.class_aggregate(Period::everything(), bucket);
        let sequential = store.class_aggregate_with(Period::everything(), bucket, Execution::Sequential);
        ensure(aggregate == sequential, || format!("bucket {bucket}: parallel and sequential results differ"))?;

        // bucket -> per-student (sum, count)
        let mut per_student: BTreeMap<i64, BTreeMap<String, ([f64; 4], f64)>> = BTreeMap::new();
        for record in store.records() {
            for p in &record.metric_points {
                let key = p.timestamp.timestamp().div_euclid(bucket) * bucket;
                let entry = per_student.entry(key).or_default().entry(record.student_id.clone()).or_default();
                for (k, d) in AffectDimension::ALL.into_iter().enumerate() {
                    entry.0[k] += f64::from(p.affect.get(d));
                }
                entry.1 += 1.0;
            }
        }
        ensure(aggregate.affect_series.len() == per_student.len(), || {
            format!("bucket {bucket}: {} buckets, oracle has {}", aggregate.affect_series.len(), per_student.len())
        })?;
        for (got, (key, students)) in aggregate.affect_series.iter().zip(&per_student) {
            ensure(got.bucket_start.timestamp() == *key, || format!("bucket start {} != {key}", got.bucket_start))?;
            ensure(got.students == students.len(), || format!("bucket {key}: student count"))?;
            for (k, d) in AffectDimension::ALL.into_iter().enumerate() {
                let oracle = students.values().map(|(s, n)| s[k] / n).sum::<f64>() / students.len() as f64;
                let delta = (got.get(d) - oracle).abs();
                ensure(delta <= 1e-9, || format!("bucket {key} {}: |delta| = {delta}", d.as_str()))?;
            }
        }
    }
    Ok(())
}

fn simulator_determinism() -> Check {
    let spike = date("2024-03-15");
    let spec = ScenarioSpec {
        stress_spike_events: vec![spike],
        ..ScenarioSpec::new(77, 12, date("2024-03-01"), date("2024-03-28"))
    };
    let a = generate_cohort(&spec).map_err(|e| e.to_string())?;
    let b = generate_cohort_with(&spec, Execution::Sequential).map_err(|e| e.to_string())?;
    let bytes = |v: &[classpulse_core::simulator::SessionBatch]| v.iter().map(|s| s.to_json()).collect::<Vec<_>>();
    ensure(bytes(&a) == bytes(&b), || "same seed produced different event streams".into())?;

    let dir_a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir_b = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_cohort(&a, dir_a.path()).map_err(|e| e.to_string())?;
    write_cohort(&b, dir_b.path()).map_err(|e| e.to_string())?;
    for batch in &a {
        let name = format!("{}.json", batch.session_id);
        let fa = std::fs::read(dir_a.path().join(&name)).map_err(|e| e.to_string())?;
        let fb = std::fs::read(dir_b.path().join(&name)).map_err(|e| e.to_string())?;
        ensure(fa == fb, || format!("{name} differs between runs"))?;
    }

    let store = ingest_cohort(&spec, &CourseConfig::default())?;
    let daily = store.class_aggregate(Period::everything(), 86_400);
    let spike_start = spike.and_time(chrono::NaiveTime::MIN).and_utc();
    let affected = |t: DateTime<Utc>| t <= spike_start && t >= spike_start - Duration::days(2);
    let at_spike = daily
        .affect_series
        .iter()
        .find(|b| b.bucket_start == spike_start)
        .map(|b| b.stress)
        .ok_or("no bucket at the spike date")?;
    let off: Vec<f64> = daily
        .affect_series
        .iter()
        .filter(|b| !affected(b.bucket_start))
        .map(|b| b.stress)
        .collect();
    let off_mean = off.iter().sum::<f64>() / off.len() as f64;
    ensure(at_spike > off_mean, || format!("spike bucket stress {at_spike:.3} <= off-spike mean {off_mean:.3}"))
}

// ---------------------------------------------------------------------------------------
// Quizzes and topics

fn quiz_arithmetic() -> Check {
    let record = QuizRecord {
        quiz_id: "q1".into(),
        topic: "Engineering Ethics".into(),
        started: at("2024-03-01T10:00:00Z"),
        completed: at("2024-03-01T10:02:15Z"),
        per_question: [(30.0, true), (45.0, false), (60.0, true)]
            .into_iter()
            .enumerate()
            .map(|(i, (elapsed_seconds, correct))| QuestionTiming { index: i as u32, elapsed_seconds, correct })
            .collect(),
        complete: true,
    };
    let stats = quiz_stats(&record).map_err(|e| e.to_string())?;
    ensure(stats.total_seconds == 135.0, || format!("total {}", stats.total_seconds))?;
    ensure(stats.per_question_seconds == [30.0, 45.0, 60.0], || "per-question seconds".into())?;
    ensure(stats.correct_flags == [true, false, true], || "correct flags".into())?;
    ensure(stats.score.correct == 2 && stats.score.total == 3, || format!("score {:?}", stats.score))?;
    let incomplete = QuizRecord { complete: false, ..record };
    ensure(quiz_stats(&incomplete).is_err(), || "incomplete quiz produced timings".into())
}

fn dedup_semantics() -> Check {
    let pool = ["Engineering Ethics", "engineering ethics", "Privacy", "PRIVACY", "Sustainability", "Trust", "General"];
    let mut rng = SimRng::new(5, 6);
    for round in 0..1_000 {
        let input: Vec<&str> = (0..rng.between(0, 30)).map(|_| *rng.pick(&pool)).collect();
        let got = dedup_topics(input.iter().copied());
        let mut seen = HashSet::new();
        let oracle: Vec<String> = input
            .iter()
            .filter(|t| seen.insert(t.to_lowercase()))
            .map(|t| t.to_string())
            .collect();
        ensure(got == oracle, || format!("round {round}: {got:?} != {oracle:?}"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------------------
// HTTP

struct Server {
    addr: SocketAddr,
    store: Arc<StudentStore>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Server {
    fn start(rt: &tokio::runtime::Runtime, state: AppState) -> Result<Self, String> {
        let listener = rt
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let (tx, rx) = tokio::sync::oneshot::channel();
        let store = state.store.clone();
        rt.spawn(classpulse_server::serve(listener, state, async {
            let _ = rx.await;
        }));
        Ok(Self { addr, store, shutdown: Some(tx) })
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

struct Http<'a> {
    rt: &'a tokio::runtime::Runtime,
    client: reqwest::Client,
}

impl Http<'_> {
    fn get(&self, url: &str) -> Result<(u16, String), String> {
        self.rt.block_on(async {
            let r = self.client.get(url).send().await.map_err(|e| e.to_string())?;
            let status = r.status().as_u16();
            Ok((status, r.text().await.map_err(|e| e.to_string())?))
        })
    }

    fn post(&self, url: &str, body: impl Into<reqwest::Body>) -> Result<(u16, String), String> {
        self.rt.block_on(async {
            let r = self.client.post(url).body(body).send().await.map_err(|e| e.to_string())?;
            let status = r.status().as_u16();
            Ok((status, r.text().await.map_err(|e| e.to_string())?))
        })
    }
}

fn course_config() -> CourseConfig {
    CourseConfig {
        course_events: vec![
            CourseEvent { date: date("2024-03-08"), label: "Assignment 1".into(), kind: CourseEventKind::Assignment },
            CourseEvent { date: date("2024-03-15"), label: "Midterm".into(), kind: CourseEventKind::Exam },
        ],
        ..CourseConfig::default()
    }
}

fn envelope_data(path: &str, status: u16, body: &str) -> Result<Value, String> {
    ensure(status == 200 || status == 202, || format!("{path}: status {status}: {body}"))?;
    let doc: Value = serde_json::from_str(body).map_err(|e| format!("{path}: {e}"))?;
    ensure(doc["disclaimer"] == DISCLAIMER, || format!("{path}: disclaimer missing or altered"))?;
    Ok(doc["data"].clone())
}

/// Every GET endpoint for a populated store.
fn endpoint_paths(http: &Http, server: &Server) -> Result<Vec<String>, String> {
    let mut paths: Vec<String> = [
        "/api/class/affect?dimension=stress",
        "/api/class/affect?dimension=curiosity&bucket=week",
        "/api/class/affect?dimension=confusion&from=2024-03-05&to=2024-03-20&bucket=3600",
        "/api/class/affect?dimension=agitation",
        "/api/class/topics",
        "/api/class/study-methods",
        "/api/course-events",
        "/api/students",
    ]
    .map(String::from)
    .to_vec();
    let (status, body) = http.get(&server.url("/api/students"))?;
    let students = envelope_data("/api/students", status, &body)?;
    for id in students["students"].as_array().ok_or("student list missing")? {
        let id = id.as_str().ok_or("student id not a string")?;
        for view in ["affect", "bloom", "study-methods", "topics", "engagement"] {
            paths.push(format!("/api/students/{id}/{view}"));
        }
    }
    let quizzes: std::collections::BTreeSet<String> = server
        .store
        .records()
        .iter()
        .flat_map(|r| r.quiz_records.iter().map(|q| q.quiz_id.clone()))
        .collect();
    paths.extend(quizzes.into_iter().map(|q| format!("/api/quizzes/{q}")));
    Ok(paths)
}

fn fetch_all(http: &Http, server: &Server, paths: &[String]) -> Result<Vec<String>, String> {
    paths
        .iter()
        .map(|path| {
            let (status, body) = http.get(&server.url(path))?;
            envelope_data(path, status, &body)?;
            Ok(body)
        })
        .collect()
}

fn end_to_end(rt: &tokio::runtime::Runtime) -> Check {
    let http = Http { rt, client: reqwest::Client::new() };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let snapshot = dir.path().join("store.json");
    let state = AppState::new(StudentStore::new(), course_config(), Arc::new(LexiconProvider))
        .with_store_path(&snapshot)
        .with_max_body_bytes(256 * 1024);
    let server = Server::start(rt, state)?;
    let ingest = server.url("/api/ingest/session");

    // Empty store: empty series, overlay still present.
    let (status, body) = http.get(&server.url("/api/class/affect?dimension=stress"))?;
    let data = envelope_data("empty affect", status, &body)?;
    ensure(data["series"].as_array().is_some_and(Vec::is_empty), || "series not empty before ingest".into())?;
    ensure(data["course_events"].as_array().map(Vec::len) == Some(2), || "overlay missing on empty store".into())?;
    let (status, _) = http.get(&server.url("/api/quizzes/quiz-01"))?;
    ensure(status == 404, || format!("quiz on empty store: {status}"))?;

    let spec = ScenarioSpec {
        stress_spike_events: vec![date("2024-03-15")],
        ..ScenarioSpec::new(2024, 10, date("2024-03-04"), date("2024-03-29"))
    };
    let cohort = generate_cohort(&spec).map_err(|e| e.to_string())?;
    let mut expected_events = 0;
    let mut seen_events = 0;
    for batch in &cohort {
        let (status, body) = http.post(&ingest, batch.to_json())?;
        let data = envelope_data("ingest", status, &body)?;
        ensure(status == 202, || format!("ingest status {status}"))?;
        let count = |k: &str| data[k].as_u64().unwrap_or(u64::MAX);
        seen_events += count("accepted") + count("rejected") + count("dropped");
        expected_events += batch.events.len() as u64;
    }
    ensure(seen_events == expected_events, || format!("{seen_events} events accounted for, {expected_events} sent"))?;

    // Error paths.
    let (status, _) = http.post(&ingest, "\"not json\"")?;
    ensure(status == 400, || format!("non-array body: {status}"))?;
    let (status, _) = http.post(&ingest, "[{\"kind\": ")?;
    ensure(status == 400, || format!("malformed body: {status}"))?;
    let (status, _) = http.post(&ingest, "[]")?;
    ensure(status == 422, || format!("empty batch: {status}"))?;
    let (status, _) = http.post(&ingest, vec![b' '; 300 * 1024])?;
    ensure(status == 413, || format!("oversize body: {status}"))?;
    let noise = r#"[{"kind":"ui_noise","student_id":"x","session_id":"n","timestamp":"2024-03-05T10:00:00Z","description":"user clicked on a button"}]"#;
    let (status, body) = http.post(&ingest, noise)?;
    let data = envelope_data("noise ingest", status, &body)?;
    ensure(data["accepted"] == 0 && data["dropped"].as_u64() > Some(0), || format!("noise-only batch: {data}"))?;
    let (status, _) = http.get(&server.url("/api/class/affect?dimension=anger"))?;
    ensure(status == 400, || format!("unknown dimension: {status}"))?;
    let (status, _) = http.get(&server.url("/api/class/affect?from=2024-03-20&to=2024-03-01"))?;
    ensure(status == 400, || format!("inverted range: {status}"))?;
    let (status, _) = http.get(&server.url("/api/students/nobody/affect"))?;
    ensure(status == 404, || format!("unknown student: {status}"))?;

    // Affect series equals the in-process aggregate.
    let aggregate = server.store.class_aggregate(Period::everything(), 86_400);
    let (status, body) = http.get(&server.url("/api/class/affect?dimension=stress&bucket=day"))?;
    let data = envelope_data("class affect", status, &body)?;
    let series = data["series"].as_array().ok_or("series missing")?;
    ensure(series.len() == aggregate.affect_series.len(), || "series length differs from aggregate".into())?;
    for (point, bucket) in series.iter().zip(&aggregate.affect_series) {
        let value = point["value"].as_f64().ok_or("series value missing")?;
        ensure((value - bucket.stress).abs() <= 1e-9, || format!("series point {point} differs"))?;
    }

    // Topics are duplicate-free.
    let (status, body) = http.get(&server.url("/api/class/topics"))?;
    let topics = envelope_data("topics", status, &body)?;
    let names: Vec<String> = topics["topics"]
        .as_array()
        .ok_or("topics missing")?
        .iter()
        .filter_map(|t| t["topic"].as_str().map(str::to_lowercase))
        .collect();
    ensure(names.len() == names.iter().collect::<HashSet<_>>().len(), || "duplicate topics".into())?;

    // Bloom view mirrors the progression of the stored record.
    let first = cohort[0].student_id.clone();
    let (status, body) = http.get(&server.url(&format!("/api/students/{first}/bloom")))?;
    let bloom = envelope_data("bloom", status, &body)?;
    let record = server.store.record(&first).ok_or("first student missing")?;
    let want = serde_json::to_value(classpulse_core::bloom::progression_series(&record)).map_err(|e| e.to_string())?;
    ensure(bloom["progression"] == want, || "bloom progression differs".into())?;

    // All GETs carry the disclaimer and are pure reads.
    let paths = endpoint_paths(&http, &server)?;
    let before = fetch_all(&http, &server, &paths)?;
    let again = fetch_all(&http, &server, &paths)?;
    ensure(before == again, || "repeated GETs differ".into())?;

    // Snapshot round trip.
    drop(server);
    let restored = StudentStore::snapshot_load(&snapshot).map_err(|e| e.to_string())?;
    let second = Server::start(rt, AppState::new(restored, course_config(), Arc::new(LexiconProvider)))?;
    let after = fetch_all(&http, &second, &paths)?;
    ensure(before == after, || {
        let i = before.iter().zip(&after).position(|(a, b)| a != b).unwrap_or(0);
        format!("{} differs after snapshot reload", paths[i])
    })
}

fn quiz_exclusion_over_http(rt: &tokio::runtime::Runtime) -> Check {
    let http = Http { rt, client: reqwest::Client::new() };
    let server = Server::start(rt, AppState::new(StudentStore::new(), CourseConfig::default(), Arc::new(LexiconProvider)))?;
    let batch = r#"[
      {"kind":"login","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:00:00Z"},
      {"kind":"quiz_started","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:00:10Z","quiz_id":"done","topic":"Engineering Ethics"},
      {"kind":"quiz_question_answered","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:00:40Z","quiz_id":"done","question_index":0,"elapsed_seconds":30,"correct":true},
      {"kind":"quiz_question_answered","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:01:25Z","quiz_id":"done","question_index":1,"elapsed_seconds":45,"correct":false},
      {"kind":"quiz_question_answered","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:02:25Z","quiz_id":"done","question_index":2,"elapsed_seconds":60,"correct":true},
      {"kind":"quiz_completed","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:02:30Z","quiz_id":"done"},
      {"kind":"quiz_started","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:03:00Z","quiz_id":"abandoned","topic":"Engineering Ethics"},
      {"kind":"quiz_question_answered","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:03:20Z","quiz_id":"abandoned","question_index":0,"elapsed_seconds":20,"correct":true},
      {"kind":"logout","student_id":"s1","session_id":"a","timestamp":"2024-03-01T10:05:00Z"}
    ]"#;
    let (status, body) = http.post(&server.url("/api/ingest/session"), batch)?;
    envelope_data("quiz ingest", status, &body)?;
    let (status, body) = http.get(&server.url("/api/quizzes/done"))?;
    let data = envelope_data("quiz detail", status, &body)?;
    let attempt = &data["attempts"][0];
    ensure(attempt["total_seconds"] == 135.0, || format!("total seconds {}", attempt["total_seconds"]))?;
    ensure(attempt["per_question_seconds"] == serde_json::json!([30.0, 45.0, 60.0]), || "per-question seconds".into())?;
    ensure(attempt["correct_flags"] == serde_json::json!([true, false, true]), || "correct flags".into())?;
    let (status, _) = http.get(&server.url("/api/quizzes/abandoned"))?;
    ensure(status == 404, || format!("abandoned quiz served with status {status}"))
}

fn privacy_sentinel(rt: &tokio::runtime::Runtime) -> Check {
    const SENTINELS: [&str; 3] = ["ZQXSENTINEL4417", "my secret diary entry 9931", "CONFIDENTIAL-ALPHA"];
    let http = Http { rt, client: reqwest::Client::new() };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let snapshot = dir.path().join("store.json");
    let state = AppState::new(StudentStore::new(), course_config(), Arc::new(LexiconProvider)).with_store_path(&snapshot);
    let server = Server::start(rt, state)?;
    let ingest = server.url("/api/ingest/session");

    let event = |kind: &str, secs: i64, extra: &str| {
        let t = at("2024-03-06T09:00:00Z") + Duration::seconds(secs);
        format!(r#"{{"kind":"{kind}","student_id":"s1","session_id":"p","timestamp":"{}"{extra}}}"#, t.to_rfc3339())
    };
    let batch = format!(
        "[{}]",
        [
            event("login", 0, ""),
            event("message_sent", 10, &format!(r#","text":"{} overwhelming Engineering Ethics""#, SENTINELS[0])),
            event("message_sent", 20, &format!(r#","text":"Can you help me with {} defining this?""#, SENTINELS[1])),
            event("message_sent", 30, &format!(r#","text":"{}""#, SENTINELS[2])),
            event("message_sent", 40, &format!(r#","text":"{}""#, SENTINELS[2])),
            event("ui_noise", 45, &format!(r#","description":"{}""#, SENTINELS[0])),
            event("quiz_question_answered", 50, &format!(r#","quiz_id":"q","question_index":"{}","elapsed_seconds":1,"correct":true"#, SENTINELS[1])),
            event("mystery", 55, &format!(r#","text":"{}""#, SENTINELS[2])),
            event("logout", 60, ""),
        ]
        .join(",")
    );
    let (status, ingest_body) = http.post(&ingest, batch)?;
    envelope_data("sentinel ingest", status, &ingest_body)?;

    let mut bodies = vec![ingest_body];
    let paths = endpoint_paths(&http, &server)?;
    bodies.extend(fetch_all(&http, &server, &paths)?);
    let snapshot_bytes = std::fs::read(&snapshot).map_err(|e| e.to_string())?;
    bodies.push(String::from_utf8(snapshot_bytes).map_err(|e| e.to_string())?);
    bodies.push(String::from_utf8(server.store.snapshot_bytes().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?);

    let lowered: Vec<String> = bodies.iter().map(|b| b.to_lowercase()).collect();
    let hits: usize = SENTINELS
        .iter()
        .map(|s| lowered.iter().filter(|b| b.contains(&s.to_lowercase())).count())
        .sum();
    ensure(server.store.record("s1").is_some_and(|r| r.metric_points.len() == 4), || "sentinel messages not analyzed".into())?;
    ensure(hits == 0, || format!("{hits} sentinel occurrences"))
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("runtime");
    let checks: Vec<NamedCheck> = vec![
        ("Bloom verb fidelity", Box::new(bloom_verb_fidelity)),
        ("Bloom fixture corpus", Box::new(bloom_fixture_corpus)),
        ("Window properties", Box::new(window_properties)),
        ("Token ratio", Box::new(token_ratio)),
        ("Cleaning oracle", Box::new(cleaning_oracle)),
        ("Affect bounds & monotonicity", Box::new(affect_bounds_and_monotonicity)),
        ("Privacy sentinel", Box::new(|| privacy_sentinel(&rt))),
        ("Aggregation oracle", Box::new(aggregation_oracle)),
        ("Quiz arithmetic", Box::new(|| quiz_arithmetic().and_then(|_| quiz_exclusion_over_http(&rt)))),
        ("Dedup semantics", Box::new(dedup_semantics)),
        ("Simulator determinism", Box::new(simulator_determinism)),
        ("End-to-end", Box::new(|| end_to_end(&rt))),
    ];
    let mut failures = 0;
    for (name, check) in &checks {
        let started = std::time::Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(check))
            .unwrap_or_else(|_| Err("panicked".into()));
        let ms = started.elapsed().as_millis();
        match outcome {
            Ok(()) => println!("PASS  {name} ({ms} ms)"),
            Err(reason) => {
                failures += 1;
                println!("FAIL  {name} ({ms} ms): {reason}");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failures, checks.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
