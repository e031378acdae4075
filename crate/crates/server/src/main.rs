use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use classpulse_core::affect::{AffectProvider, LexiconProvider};
use classpulse_core::config::CourseConfig;
use classpulse_core::exec::Execution;
use classpulse_core::simulator::{generate_cohort, write_cohort, ScenarioSpec};
use classpulse_core::store::StudentStore;
use classpulse_server::{serve, AppState, DEFAULT_MAX_BODY_BYTES};

#[derive(Parser)]
#[command(name = "classpulse", version, about = "Learning analytics over tutoring-session events")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the JSON HTTP API.
    Serve(ServeArgs),
    /// Write a seeded synthetic cohort, one JSON batch per session.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderKind {
    Lexicon,
    Remote,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Course configuration (syllabus, course events, thresholds).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Snapshot file, loaded at startup if present and rewritten after each ingest.
    #[arg(long)]
    store_path: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lexicon")]
    provider: ProviderKind,
    /// Require `Authorization: Bearer <token>` on every request.
    #[arg(long, env = "CLASSPULSE_AUTH_TOKEN")]
    auth_token: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_BODY_BYTES)]
    max_body_bytes: usize,
    /// Process sessions and aggregates on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Scenario JSON; a 10-student, four-week cohort is used when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match Cli::parse().command {
        Command::Serve(args) => run_serve(args),
        Command::Simulate(args) => run_simulate(args),
    }
}

fn build_provider(kind: ProviderKind, config: &CourseConfig) -> Result<Arc<dyn AffectProvider>> {
    match kind {
        ProviderKind::Lexicon => Ok(Arc::new(LexiconProvider)),
        ProviderKind::Remote => {
            use classpulse_core::affect::remote::{HttpTransport, RemoteProvider};
            let transport = HttpTransport::from_env(&config.remote)
                .context("remote provider needs CLASSPULSE_LLM_API_KEY")?;
            Ok(Arc::new(RemoteProvider::new(transport, config.remote.max_concurrency)))
        }
    }
}

fn run_serve(args: ServeArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => CourseConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => CourseConfig::default(),
    };
    let store = match &args.store_path {
        Some(path) if path.exists() => StudentStore::snapshot_load(path)
            .with_context(|| format!("loading snapshot {}", path.display()))?,
        _ => StudentStore::new(),
    };
    let provider = build_provider(args.provider, &config)?;
    let mut state = AppState::new(store, config, provider)
        .with_max_body_bytes(args.max_body_bytes)
        .with_execution(if args.sequential { Execution::Sequential } else { Execution::Parallel });
    if let Some(path) = args.store_path {
        state = state.with_store_path(path);
    }
    if let Some(token) = args.auth_token {
        state = state.with_auth_token(token);
    }

    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid host or port")?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let mut spec = match &args.scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<ScenarioSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => {
            let start = chrono::NaiveDate::from_ymd_opt(2024, 3, 4).expect("valid date");
            ScenarioSpec::new(0, 10, start, start + chrono::Duration::days(27))
        }
    };
    spec.seed = args.seed;
    let batches = generate_cohort(&spec)?;
    if batches.is_empty() {
        bail!("scenario produced no sessions");
    }
    write_cohort(&batches, &args.out)?;
    println!("wrote {} session files to {}", batches.len(), args.out.display());
    Ok(())
}
