//! Escalation-driven human oversight for generated accessible UI content.
//!
//! The crate is organised along the oversight pipeline:
//!
//! - [`trace`]: requirement, profile, rule and medication registry; the anchor
//!   every other record points back to.
//! - [`generation`]: structured UI artifacts from a deterministic template or
//!   an external generator port.
//! - [`checkpoints`]: automated signals R (readability), S (semantic fidelity)
//!   and F (factual consistency), plus safety-segment detection.
//! - [`escalation`]: the policy that turns signals into auto-release, mandatory
//!   review or block, and the release gate.
//! - [`review`]: the HITL review queue and the hash-chained feedback log.
//! - [`supervision`]: HOTL aggregation windows and drift detection.
//! - [`governance`]: versioned policy updates, replay and compliance reports.
//! - [`engine`]: an in-memory orchestrator wiring the stages together.

pub mod catalog;
pub mod checkpoints;
pub mod digest;
pub mod engine;
pub mod escalation;
pub mod generation;
pub mod governance;
pub mod review;
pub mod supervision;
pub mod trace;

/// Wall-clock instants used in every persisted record.
pub type Timestamp = chrono::DateTime<chrono::Utc>;

pub use checkpoints::{Checkpoint, CheckpointDetail, CheckpointResult, Comparator};
pub use engine::Engine;
pub use escalation::{EscalationDecision, EscalationStatus, PolicyConfig, ReleaseState, ReviewerRole};
pub use generation::{UiArtifact, UiNode};
pub use review::FeedbackEvent;
pub use trace::{Registry, RequirementRecord, SourceDocument, UserProfile};
