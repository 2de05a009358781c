//! Command-line verbs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use oversight_core::checkpoints::{RemoteFactual, RemoteSemantic};
use oversight_core::engine::Engine;
use oversight_core::governance::PolicySurface;
use oversight_core::supervision::{simulate_drift, DriftConfig, SimulationSpec};
use oversight_core::trace::RegistryDocument;
use oversight_core::{EscalationStatus, SourceDocument, Timestamp, UiArtifact};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::api::{self, AppState, EngineHook, Service, Tokens};
use crate::error::ApiError;
use crate::ports::{HttpPort, DEFAULT_TIMEOUT};
use crate::store::{Genesis, Store};

pub const EXIT_AUTO_RELEASED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ESCALATED: i32 = 2;
pub const EXIT_BLOCKED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "oversight", version, about = "Escalation-driven oversight for generated accessible content")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate (or load) one artifact, run the checkpoints and write compliance.json.
    /// Exit 0 = auto_released, 2 = escalated, 3 = blocked, 1 = error.
    Evaluate {
        /// Source document JSON.
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        profile: String,
        /// Evaluate this artifact JSON instead of generating one.
        #[arg(long, conflicts_with = "external")]
        artifact: Option<PathBuf>,
        /// External generator endpoint.
        #[arg(long)]
        external: Option<String>,
        /// Remote scorer endpoint for S and F.
        #[arg(long)]
        scorer: Option<String>,
        /// Policy surface JSON.
        #[arg(long, env = "OVERSIGHT_POLICY")]
        policy: Option<PathBuf>,
        /// Registry document JSON.
        #[arg(long)]
        registry: Option<PathBuf>,
        /// Persist into this store; its genesis replaces --policy/--registry.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Where to write compliance.json.
        #[arg(long, default_value = "compliance.json")]
        out: PathBuf,
        /// Decision timestamp (RFC 3339); defaults to now.
        #[arg(long)]
        now: Option<Timestamp>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "OVERSIGHT_STORE")]
        store: PathBuf,
        #[arg(long, env = "OVERSIGHT_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "OVERSIGHT_BIND", default_value = "127.0.0.1")]
        bind: String,
        /// JSON object mapping bearer token to {id, role}. Without it, one
        /// development token per role is accepted.
        #[arg(long, env = "OVERSIGHT_TOKENS")]
        tokens: Option<PathBuf>,
        /// Genesis policy surface for a new store.
        #[arg(long, env = "OVERSIGHT_POLICY")]
        policy: Option<PathBuf>,
        /// Genesis registry for a new store.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        generator: Option<String>,
        #[arg(long)]
        scorer: Option<String>,
    },
    /// Check chains, referential integrity and replay equality. Nonzero exit on any failure.
    Verify {
        #[arg(long, env = "OVERSIGHT_STORE")]
        store: PathBuf,
    },
    /// Recompute stored decisions under their pinned versions.
    Replay {
        #[arg(long, env = "OVERSIGHT_STORE")]
        store: PathBuf,
        #[arg(long)]
        artifact: Option<String>,
    },
    /// Seeded escalation-rate drift simulation.
    SimulateDrift {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of seeded runs; seeds are seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        runs: u64,
        #[arg(long, default_value_t = 100)]
        windows: usize,
        #[arg(long, default_value_t = 0.1)]
        base_rate: f64,
        #[arg(long, default_value_t = 0.4)]
        shifted_rate: f64,
        /// First shifted window; omit for a stationary stream.
        #[arg(long)]
        change_at: Option<usize>,
        #[arg(long, default_value_t = 3.0)]
        z_threshold: f64,
        #[arg(long, default_value_t = 50)]
        window_size: usize,
    },
    /// Write the compliance report of a stored artifact.
    ExportReport {
        #[arg(long, env = "OVERSIGHT_STORE")]
        store: PathBuf,
        #[arg(long)]
        artifact: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ApiError> {
    let bytes = std::fs::read(path)
        .map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(value: &T) {
    let mut out = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut out, value);
    let _ = writeln!(out);
}

fn fail(e: ApiError) -> i32 {
    let mut err = std::io::stderr().lock();
    let _ = serde_json::to_writer(&mut err, &e);
    let _ = writeln!(err);
    EXIT_ERROR
}

fn genesis(policy: Option<&Path>, registry: Option<&Path>) -> Result<Genesis, ApiError> {
    let mut g = Genesis::illustrative();
    if let Some(p) = policy {
        g.surface = read_json::<PolicySurface>(p)?;
    }
    if let Some(r) = registry {
        g.registry = read_json::<RegistryDocument>(r)?;
    }
    Ok(g)
}

fn scorer_hook(url: Option<&str>) -> Option<EngineHook> {
    let url = url?.to_string();
    Some(Arc::new(move |engine: Engine| {
        let semantic = RemoteSemantic {
            port: HttpPort::new(url.clone(), DEFAULT_TIMEOUT),
            name: "remote-semantic".into(),
            version: "1".into(),
        };
        let factual = RemoteFactual {
            port: HttpPort::new(url.clone(), DEFAULT_TIMEOUT),
            name: "remote-factual".into(),
            version: "1".into(),
        };
        engine.with_scorers(Arc::new(semantic), Arc::new(factual))
    }))
}

pub fn exit_code(status: EscalationStatus) -> i32 {
    match status {
        EscalationStatus::AutoReleased => EXIT_AUTO_RELEASED,
        EscalationStatus::Escalated => EXIT_ESCALATED,
        EscalationStatus::Blocked => EXIT_BLOCKED,
    }
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    source: &Path,
    profile: &str,
    artifact: Option<&Path>,
    external: Option<&str>,
    scorer: Option<&str>,
    policy: Option<&Path>,
    registry: Option<&Path>,
    store: Option<&Path>,
    out: &Path,
    now: Option<Timestamp>,
) -> Result<i32, ApiError> {
    let source: SourceDocument = read_json(source)?;
    let now = now.unwrap_or_else(chrono::Utc::now);
    let hook = scorer_hook(scorer);
    let store = match store {
        Some(root) => Some(Store::init(root, &genesis(policy, registry)?)?),
        None => None,
    };
    let mut engine = match &store {
        Some(s) => s.load_strict()?,
        None => {
            let g = genesis(policy, registry)?;
            Engine::new(g.surface.clone(), g.registry()?)?
        }
    };
    if let Some(h) = &hook {
        engine = h(engine);
    }
    engine.register_source(source.clone())?;
    let sub = match (artifact, external) {
        (Some(path), _) => {
            let artifact: UiArtifact = read_json(path)?;
            if artifact.profile_id != profile {
                return Err(ApiError::bad_request(format!(
                    "artifact profile {} does not match --profile {profile}",
                    artifact.profile_id
                )));
            }
            engine.submit_artifact(artifact, now)?
        }
        (None, Some(url)) => {
            let port = HttpPort::new(url, DEFAULT_TIMEOUT);
            engine.submit_external(&source.id, profile, &port, None, now)?
        }
        (None, None) => engine.submit(&source.id, profile, now)?,
    };
    let id = sub.evidence.artifact.artifact_id.clone();
    let report = engine.compliance_report(&id)?;
    if let Some(s) = &store {
        s.put_source(&source)?;
        if sub.created {
            s.put_evidence(&sub.evidence)?;
        }
        s.put_compliance(&report)?;
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ApiError::new("STORE_IO", e.to_string()))?;
    }
    crate::store::write_atomic(out, report.to_json().as_bytes())?;
    print_json(&json!({
        "artifact_id": id,
        "status": sub.evidence.decision.status,
        "required_role": sub.evidence.decision.required_role,
        "triggers": sub.evidence.decision.triggers,
        "compliance": out,
    }));
    Ok(exit_code(sub.evidence.decision.status))
}

fn verify(store: &Path) -> i32 {
    let audit = Store::open(store).verify();
    let ok = audit.ok();
    print_json(&json!({ "ok": ok, "audit": audit }));
    if ok {
        0
    } else {
        EXIT_ERROR
    }
}

fn replay(store: &Path, artifact: Option<&str>) -> Result<i32, ApiError> {
    let (engine, report) = Store::open(store).load()?;
    let mut checks = engine.replay_all();
    let missing: Vec<_> = report
        .missing_evidence
        .iter()
        .filter(|m| artifact.is_none_or(|id| m.artifact_id == id))
        .collect();
    if let Some(id) = artifact {
        if missing.is_empty() {
            engine.evidence_for(id)?;
        }
        checks.retain(|c| c.artifact_id == id);
    }
    let ok = missing.is_empty() && checks.iter().all(|c| c.matches);
    print_json(&json!({ "ok": ok, "replay": checks, "missing_evidence": missing }));
    Ok(if ok { 0 } else { EXIT_ERROR })
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    seed: u64,
    runs: u64,
    windows: usize,
    base_rate: f64,
    shifted_rate: f64,
    change_at: Option<usize>,
    z_threshold: f64,
    window_size: usize,
) -> i32 {
    let config = DriftConfig {
        z_threshold,
        window_size,
        ..DriftConfig::default()
    };
    let spec = |seed| SimulationSpec {
        seed,
        windows,
        base_rate,
        shifted_rate,
        change_at,
    };
    if runs <= 1 {
        print_json(&simulate_drift(spec(seed), config));
        return 0;
    }
    let reports: Vec<_> = (seed..seed + runs).map(|s| simulate_drift(spec(s), config)).collect();
    let false_alerts: usize = reports.iter().map(|r| r.false_alerts).sum();
    let pre_change = change_at.unwrap_or(windows).min(windows);
    let latencies: Vec<Option<usize>> = reports.iter().map(|r| r.detection_latency).collect();
    print_json(&json!({
        "runs": runs,
        "config": config,
        "runs_with_false_alert": reports.iter().filter(|r| r.false_alerts > 0).count(),
        "false_alert_windows": false_alerts,
        "per_window_false_alert_rate": false_alerts as f64 / (pre_change as f64 * runs as f64).max(1.0),
        "worst_detection_latency": latencies.iter().max().copied().flatten(),
        "undetected_runs": change_at.map(|_| latencies.iter().filter(|l| l.is_none()).count()),
    }));
    0
}

fn export(store: &Path, artifact: &str, out: Option<&Path>) -> Result<i32, ApiError> {
    let (engine, _) = Store::open(store).load()?;
    let report = engine.compliance_report(artifact)?;
    match out {
        Some(p) => crate::store::write_atomic(p, report.to_json().as_bytes())?,
        None => print!("{}", report.to_json()),
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
async fn serve(
    store: &Path,
    bind: &str,
    port: u16,
    tokens: Option<&Path>,
    policy: Option<&Path>,
    registry: Option<&Path>,
    generator: Option<&str>,
    scorer: Option<&str>,
) -> Result<i32, ApiError> {
    let tokens = match tokens {
        Some(p) => read_json::<Tokens>(p)?,
        None => {
            tracing::warn!("no token file given; accepting development tokens");
            Tokens::development()
        }
    };
    let store = Store::init(store, &genesis(policy, registry)?)?;
    let mut service = Service::open(store, scorer_hook(scorer))?;
    if let Some(url) = generator {
        service = service.with_generator(Arc::new(HttpPort::new(url, DEFAULT_TIMEOUT)));
    }
    tracing::info!(policy_version = service.engine.policy_version(), "store loaded");
    let app = api::router(AppState::new(service, tokens));
    let listener = tokio::net::TcpListener::bind((bind, port))
        .await
        .map_err(|e| ApiError::new("STORE_IO", format!("bind {bind}:{port}: {e}")))?;
    tracing::info!(%bind, port, "listening");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::new("INTERNAL", e.to_string()))?;
    Ok(0)
}

/// Run a parsed command and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Evaluate {
            source,
            profile,
            artifact,
            external,
            scorer,
            policy,
            registry,
            store,
            out,
            now,
        } => evaluate(
            &source,
            &profile,
            artifact.as_deref(),
            external.as_deref(),
            scorer.as_deref(),
            policy.as_deref(),
            registry.as_deref(),
            store.as_deref(),
            &out,
            now,
        ),
        Command::Serve {
            store,
            port,
            bind,
            tokens,
            policy,
            registry,
            generator,
            scorer,
        } => tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .map_err(|e| ApiError::new("INTERNAL", e.to_string()))
            .and_then(|rt| {
                rt.block_on(serve(
                    &store,
                    &bind,
                    port,
                    tokens.as_deref(),
                    policy.as_deref(),
                    registry.as_deref(),
                    generator.as_deref(),
                    scorer.as_deref(),
                ))
            }),
        Command::Verify { store } => Ok(verify(&store)),
        Command::Replay { store, artifact } => replay(&store, artifact.as_deref()),
        Command::SimulateDrift {
            seed,
            runs,
            windows,
            base_rate,
            shifted_rate,
            change_at,
            z_threshold,
            window_size,
        } => Ok(simulate(
            seed,
            runs,
            windows,
            base_rate,
            shifted_rate,
            change_at,
            z_threshold,
            window_size,
        )),
        Command::ExportReport { store, artifact, out } => export(&store, &artifact, out.as_deref()),
    };
    result.unwrap_or_else(fail)
}

