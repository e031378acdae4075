//! Learning-analytics engine: ingest tutoring session events, score affect and Bloom
//! level per message, derive engagement metrics and aggregate them per class.

pub mod affect;
pub mod bloom;
pub mod clean;
pub mod config;
pub mod event;
pub mod exec;
pub mod metrics;
pub mod pipeline;
pub mod session;
pub mod simulator;
pub mod store;
pub mod window;

pub use affect::{AffectDimension, AffectProvider, AffectScores, LexiconProvider, MessageAnalysis};
pub use bloom::{classify_bloom, BloomLevel, VerbTable};
pub use clean::{clean_events, Cleaned, DropReason};
pub use config::CourseConfig;
pub use event::{parse_event_batch, EventKind, SessionEvent};
pub use exec::Execution;
pub use pipeline::{ingest_batch, ingest_document, IngestReport};
pub use simulator::{generate_cohort, ScenarioSpec};
pub use store::{ClassAggregate, StudentRecord, StudentStore};
pub use window::ConversationWindow;
