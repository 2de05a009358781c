//! File-based store.
//!
//! ```text
//! <root>/
//!   genesis.json              policy surface and registry at version 1
//!   governance.jsonl          hash-chained governance actions
//!   feedback.jsonl            hash-chained feedback events
//!   idempotency.jsonl         replayable responses by idempotency key
//!   sources/<id>.json
//!   artifacts/index.jsonl     artifact ids in decision order
//!   artifacts/<id>/artifact.json
//!   artifacts/<id>/checkpoints.json
//!   artifacts/<id>/decision.json
//!   artifacts/<id>/compliance.json
//! ```
//!
//! Whole files are written through a temporary file, fsync and rename. JSONL
//! appends are fsync'd before returning. A torn final line left by a crash is
//! truncated on open; any other damage makes loading fail.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use oversight_core::catalog;
use oversight_core::checkpoints::CheckpointResult;
use oversight_core::digest::{to_canonical, verify_jsonl, ChainReport};
use oversight_core::engine::{AuditReport, Engine, EngineError};
use oversight_core::governance::{ComplianceDocument, DecisionEvidence, Governance, GovernanceAction, PolicySurface};
use oversight_core::review::{FeedbackEvent, FeedbackLog};
use oversight_core::trace::{Registry, RegistryDocument, SourceDocument};
use oversight_core::EscalationDecision;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const FEEDBACK_LOG: &str = "feedback.jsonl";
pub const GOVERNANCE_LOG: &str = "governance.jsonl";
pub const IDEMPOTENCY_LOG: &str = "idempotency.jsonl";
pub const GENESIS: &str = "genesis.json";
const ARTIFACT_INDEX: &str = "artifacts/index.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{file}: chain invalid at index {index:?}", index = report.first_bad_index)]
    Chain { file: String, report: ChainReport },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Policy surface and registry a store starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genesis {
    pub surface: PolicySurface,
    pub registry: RegistryDocument,
}

impl Genesis {
    pub fn illustrative() -> Self {
        Genesis {
            surface: catalog::default_surface(),
            registry: catalog::illustrative_registry().current().to_document(),
        }
    }

    pub fn registry(&self) -> Result<Registry, StoreError> {
        Registry::import(self.registry.clone()).map_err(|e| StoreError::Engine(e.into()))
    }
}

/// Per-artifact checkpoint evidence, stored apart from the artifact itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEvidence {
    pub results: Vec<CheckpointResult>,
    pub safety_nodes: Vec<String>,
    pub registry_version: u64,
    pub lexicon_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdempotencyRecord {
    pub key: String,
    pub principal: String,
    pub method: String,
    pub path: String,
    pub request_hash: String,
    pub status: u16,
    pub body: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingEvidence {
    pub artifact_id: String,
    pub file: String,
}

/// What loading found besides the engine state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Files whose torn final line was truncated.
    pub recovered_tails: Vec<String>,
    pub missing_evidence: Vec<MissingEvidence>,
}

/// Result of `verify` over a store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreAudit {
    pub feedback_chain: ChainReport,
    pub governance_chain: ChainReport,
    pub missing_evidence: Vec<MissingEvidence>,
    /// Artifacts whose stored compliance.json differs from a fresh report.
    pub stale_compliance: Vec<String>,
    pub engine: Option<AuditReport>,
    pub load_error: Option<String>,
}

impl StoreAudit {
    pub fn ok(&self) -> bool {
        self.feedback_chain.valid
            && self.governance_chain.valid
            && self.missing_evidence.is_empty()
            && self.stale_compliance.is_empty()
            && self.load_error.is_none()
            && self.engine.as_ref().is_some_and(AuditReport::ok)
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn fsync_dir(dir: &Path) -> Result<(), StoreError> {
    File::open(dir).and_then(|f| f.sync_all()).map_err(io_err(dir))
}

/// Write a whole file atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    fsync_dir(dir)
}

fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    let mut buf = String::with_capacity(line.len() + 1);
    buf.push_str(line);
    buf.push('\n');
    f.write_all(buf.as_bytes()).map_err(io_err(path))?;
    f.sync_all().map_err(io_err(path))
}

fn read_optional(path: &Path) -> Result<Vec<u8>, StoreError> {
    match fs::read(path) {
        Ok(b) => Ok(b),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(io_err(path)(e)),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("records serialize");
    s.push('\n');
    s.into_bytes()
}

fn parse_lines<T: DeserializeOwned>(path: &Path, bytes: &[u8]) -> Result<Vec<T>, StoreError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.lines()
        .map(|l| {
            serde_json::from_str(l).map_err(|e| StoreError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect()
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    /// Create the layout. An existing genesis is kept as is.
    pub fn init(root: impl Into<PathBuf>, genesis: &Genesis) -> Result<Self, StoreError> {
        let store = Self::open(root);
        for dir in [store.root.clone(), store.root.join("sources"), store.root.join("artifacts")] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let path = store.path(GENESIS);
        if !path.exists() {
            write_atomic(&path, &pretty(genesis))?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn artifact_dir(&self, id: &str) -> PathBuf {
        self.root.join("artifacts").join(id)
    }

    pub fn artifact_file(&self, id: &str, file: &str) -> PathBuf {
        self.artifact_dir(id).join(file)
    }

    pub fn genesis(&self) -> Result<Genesis, StoreError> {
        read_json(&self.path(GENESIS))
    }

    /// Drop a partial final line left by an interrupted append.
    fn recover_tail(&self, rel: &str) -> Result<bool, StoreError> {
        let path = self.path(rel);
        let bytes = read_optional(&path)?;
        if bytes.is_empty() || bytes.ends_with(b"\n") {
            return Ok(false);
        }
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let f = OpenOptions::new().write(true).open(&path).map_err(io_err(&path))?;
        f.set_len(keep as u64).map_err(io_err(&path))?;
        f.sync_all().map_err(io_err(&path))?;
        Ok(true)
    }

    fn recover_all(&self, report: &mut LoadReport) -> Result<(), StoreError> {
        for rel in [FEEDBACK_LOG, GOVERNANCE_LOG, IDEMPOTENCY_LOG, ARTIFACT_INDEX] {
            if self.recover_tail(rel)? {
                report.recovered_tails.push(rel.to_string());
            }
        }
        Ok(())
    }

    fn chain<T: oversight_core::digest::Chained + DeserializeOwned>(
        &self,
        rel: &str,
    ) -> Result<(Vec<u8>, ChainReport), StoreError> {
        let bytes = read_optional(&self.path(rel))?;
        let report = verify_jsonl::<T>(&bytes);
        Ok((bytes, report))
    }

    fn sources(&self) -> Result<Vec<SourceDocument>, StoreError> {
        let dir = self.root.join("sources");
        let mut paths: Vec<PathBuf> = match fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        paths.sort();
        paths.iter().map(|p| read_json(p)).collect()
    }

    pub fn artifact_ids(&self) -> Result<Vec<String>, StoreError> {
        let path = self.path(ARTIFACT_INDEX);
        parse_lines(&path, &read_optional(&path)?)
    }

    fn evidence(&self, id: &str, missing: &mut Vec<MissingEvidence>) -> Result<Option<DecisionEvidence>, StoreError> {
        let mut absent = false;
        for file in ["artifact.json", "checkpoints.json", "decision.json"] {
            if !self.artifact_file(id, file).exists() {
                missing.push(MissingEvidence {
                    artifact_id: id.to_string(),
                    file: file.to_string(),
                });
                absent = true;
            }
        }
        if absent {
            return Ok(None);
        }
        let artifact = read_json(&self.artifact_file(id, "artifact.json"))?;
        let cp: CheckpointEvidence = read_json(&self.artifact_file(id, "checkpoints.json"))?;
        let decision: EscalationDecision = read_json(&self.artifact_file(id, "decision.json"))?;
        Ok(Some(DecisionEvidence {
            artifact,
            results: cp.results,
            safety_nodes: cp.safety_nodes,
            registry_version: cp.registry_version,
            lexicon_version: cp.lexicon_version,
            decision,
        }))
    }

    /// Load the engine. Fails on a broken chain; missing evidence is
    /// reported, not fatal.
    pub fn load(&self) -> Result<(Engine, LoadReport), StoreError> {
        let mut report = LoadReport::default();
        self.recover_all(&mut report)?;
        let genesis = self.genesis()?;
        let (fb_bytes, fb_report) = self.chain::<FeedbackEvent>(FEEDBACK_LOG)?;
        if !fb_report.valid {
            return Err(StoreError::Chain {
                file: FEEDBACK_LOG.into(),
                report: fb_report,
            });
        }
        let (gov_bytes, gov_report) = self.chain::<GovernanceAction>(GOVERNANCE_LOG)?;
        if !gov_report.valid {
            return Err(StoreError::Chain {
                file: GOVERNANCE_LOG.into(),
                report: gov_report,
            });
        }
        let actions: Vec<GovernanceAction> = parse_lines(&self.path(GOVERNANCE_LOG), &gov_bytes)?;
        let governance = Governance::restore(genesis.surface.clone(), genesis.registry()?, actions)
            .map_err(|e| StoreError::Engine(e.into()))?;
        let log = FeedbackLog::from_jsonl(&fb_bytes).map_err(|report| StoreError::Chain {
            file: FEEDBACK_LOG.into(),
            report,
        })?;
        let mut evidence = Vec::new();
        for id in self.artifact_ids()? {
            if let Some(ev) = self.evidence(&id, &mut report.missing_evidence)? {
                evidence.push(ev);
            }
        }
        let engine = Engine::restore(governance, self.sources()?, evidence, log)?;
        Ok((engine, report))
    }

    /// Load for serving: any missing evidence is fatal too.
    pub fn load_strict(&self) -> Result<Engine, StoreError> {
        let (engine, report) = self.load()?;
        if let Some(m) = report.missing_evidence.first() {
            return Err(StoreError::Corrupt {
                path: self.artifact_file(&m.artifact_id, &m.file),
                message: "missing evidence file".into(),
            });
        }
        Ok(engine)
    }

    pub fn put_source(&self, source: &SourceDocument) -> Result<(), StoreError> {
        let path = self.root.join("sources").join(format!("{}.json", source.id));
        if path.exists() {
            return Ok(());
        }
        write_atomic(&path, &pretty(source))
    }

    /// Persist one decided artifact. The index line is written last and is
    /// the commit point.
    pub fn put_evidence(&self, evidence: &DecisionEvidence) -> Result<(), StoreError> {
        let id = &evidence.artifact.artifact_id;
        let cp = CheckpointEvidence {
            results: evidence.results.clone(),
            safety_nodes: evidence.safety_nodes.clone(),
            registry_version: evidence.registry_version,
            lexicon_version: evidence.lexicon_version.clone(),
        };
        write_atomic(&self.artifact_file(id, "artifact.json"), &pretty(&evidence.artifact))?;
        write_atomic(&self.artifact_file(id, "checkpoints.json"), &pretty(&cp))?;
        write_atomic(&self.artifact_file(id, "decision.json"), &pretty(&evidence.decision))?;
        append_line(&self.path(ARTIFACT_INDEX), &to_canonical(id))
    }

    pub fn put_compliance(&self, doc: &ComplianceDocument) -> Result<(), StoreError> {
        write_atomic(&self.artifact_file(&doc.artifact_id, "compliance.json"), doc.to_json().as_bytes())
    }

    pub fn append_feedback(&self, event: &FeedbackEvent) -> Result<(), StoreError> {
        append_line(&self.path(FEEDBACK_LOG), &to_canonical(event))
    }

    pub fn append_governance(&self, action: &GovernanceAction) -> Result<(), StoreError> {
        append_line(&self.path(GOVERNANCE_LOG), &to_canonical(action))
    }

    pub fn append_idempotency(&self, record: &IdempotencyRecord) -> Result<(), StoreError> {
        append_line(&self.path(IDEMPOTENCY_LOG), &to_canonical(record))
    }

    pub fn idempotency_records(&self) -> Result<Vec<IdempotencyRecord>, StoreError> {
        let path = self.path(IDEMPOTENCY_LOG);
        parse_lines(&path, &read_optional(&path)?)
    }

    /// Write an engine's full state into an empty store initialised with the
    /// same genesis.
    pub fn write_engine(&self, engine: &Engine) -> Result<(), StoreError> {
        if !self.artifact_ids()?.is_empty() || !read_optional(&self.path(FEEDBACK_LOG))?.is_empty() {
            return Err(StoreError::Corrupt {
                path: self.root.clone(),
                message: "store is not empty".into(),
            });
        }
        for source in engine.sources() {
            self.put_source(source)?;
        }
        for ev in engine.evidence() {
            self.put_evidence(ev)?;
        }
        for action in engine.governance().actions() {
            self.append_governance(action)?;
        }
        for event in engine.log().events() {
            self.append_feedback(event)?;
        }
        for ev in engine.evidence() {
            self.put_compliance(&engine.compliance_report(&ev.artifact.artifact_id)?)?;
        }
        Ok(())
    }

    /// Chains, evidence files, referential integrity, replay equality and
    /// stored compliance reports.
    pub fn verify(&self) -> StoreAudit {
        let chain_of = |r: Result<(Vec<u8>, ChainReport), StoreError>| {
            r.map(|(_, c)| c).unwrap_or(ChainReport {
                valid: false,
                first_bad_index: Some(0),
                entries: 0,
                head: String::new(),
            })
        };
        let mut audit = StoreAudit {
            feedback_chain: chain_of(self.chain::<FeedbackEvent>(FEEDBACK_LOG)),
            governance_chain: chain_of(self.chain::<GovernanceAction>(GOVERNANCE_LOG)),
            missing_evidence: Vec::new(),
            stale_compliance: Vec::new(),
            engine: None,
            load_error: None,
        };
        if !audit.feedback_chain.valid || !audit.governance_chain.valid {
            return audit;
        }
        match self.load() {
            Ok((engine, report)) => {
                audit.missing_evidence = report.missing_evidence;
                for ev in engine.evidence() {
                    let id = &ev.artifact.artifact_id;
                    let path = self.artifact_file(id, "compliance.json");
                    let stored: Option<ComplianceDocument> = read_json(&path).ok();
                    let fresh = engine.compliance_report(id).ok();
                    if stored.is_none() || stored != fresh {
                        audit.stale_compliance.push(id.clone());
                    }
                }
                audit.engine = Some(engine.verify());
            }
            Err(e) => audit.load_error = Some(e.to_string()),
        }
        audit
    }
}
