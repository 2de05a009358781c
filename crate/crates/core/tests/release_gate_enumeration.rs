//! Exhaustive release-gate enumeration over decision statuses and every
//! feedback sequence of length at most three.

use oversight_core::catalog;
use oversight_core::digest::GENESIS_HASH;
use oversight_core::escalation::{release_gate, EscalationDecision, EscalationStatus, ReleaseState, ReviewerRole};
use oversight_core::review::{FeedbackEvent, ReviewDecision};

const ARTIFACT: &str = "art-under-test";

fn event(i: usize, artifact: &str, role: ReviewerRole, decision: ReviewDecision) -> FeedbackEvent {
    FeedbackEvent {
        event_id: format!("fb-{i:06}"),
        artifact_id: artifact.into(),
        task_id: format!("task-{artifact}-{}", role.as_str()),
        reviewer_id: format!("rev-{}", role.as_str()),
        reviewer_role: role,
        timestamp: catalog::epoch(),
        decision,
        eou_rating: None,
        comment: "note".into(),
        requirement_ids: vec![catalog::ids::DOSE.into()],
        ui_node_ids: vec![],
        policy_version: 1,
        prev_event_hash: GENESIS_HASH.into(),
        event_hash: String::new(),
    }
}

fn alphabet() -> Vec<(&'static str, ReviewerRole, ReviewDecision)> {
    let mut out = Vec::new();
    for artifact in [ARTIFACT, "art-other"] {
        for role in ReviewerRole::ALL {
            for d in ReviewDecision::ALL {
                out.push((artifact, role, d));
            }
        }
    }
    out
}

fn sequences(max_len: usize) -> Vec<Vec<FeedbackEvent>> {
    let alphabet = alphabet();
    let mut all = vec![Vec::new()];
    let mut frontier: Vec<Vec<FeedbackEvent>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for seq in &frontier {
            for &(a, r, d) in &alphabet {
                let mut s = seq.clone();
                s.push(event(s.len() + 1, a, r, d));
                next.push(s);
            }
        }
        all.extend(next.iter().cloned());
        frontier = next;
    }
    all
}

fn decisions() -> Vec<EscalationDecision> {
    let mut out = Vec::new();
    let mut roles: Vec<Option<ReviewerRole>> = vec![None];
    roles.extend(ReviewerRole::ALL.map(Some));
    for status in [EscalationStatus::AutoReleased, EscalationStatus::Escalated, EscalationStatus::Blocked] {
        for &required_role in &roles {
            out.push(EscalationDecision {
                artifact_id: ARTIFACT.into(),
                policy_version: 1,
                status,
                triggers: vec![],
                required_role,
                decided_at: catalog::epoch(),
            });
        }
    }
    out
}

/// An approving terminal event: the first event on this artifact from the
/// required role, approving, by a role allowed to release.
fn has_approving_terminal(decision: &EscalationDecision, events: &[FeedbackEvent]) -> bool {
    let Some(role) = decision.required_role else {
        return false;
    };
    events
        .iter()
        .find(|e| e.artifact_id == decision.artifact_id && e.reviewer_role == role)
        .is_some_and(|e| e.decision == ReviewDecision::Approve && role.can_release())
}

#[test]
fn no_release_without_approving_terminal_event() {
    let seqs = sequences(3);
    assert_eq!(seqs.len(), 1 + 24 + 24 * 24 + 24 * 24 * 24);
    let mut checked = 0usize;
    for decision in decisions() {
        for events in &seqs {
            let state = release_gate(&decision, events);
            checked += 1;
            match decision.status {
                EscalationStatus::Blocked => assert_eq!(state, ReleaseState::Blocked),
                EscalationStatus::Escalated => {
                    if state == ReleaseState::Releasable {
                        assert!(has_approving_terminal(&decision, events), "{decision:?} {events:?}");
                    }
                    if has_approving_terminal(&decision, events) {
                        assert_eq!(state, ReleaseState::Releasable);
                    }
                }
                EscalationStatus::AutoReleased => assert_eq!(state, ReleaseState::Releasable),
            }
        }
    }
    assert_eq!(checked, 15 * seqs.len());
}

#[test]
fn escalated_without_events_is_held() {
    for decision in decisions().into_iter().filter(|d| d.status == EscalationStatus::Escalated) {
        assert_eq!(release_gate(&decision, &[]), ReleaseState::Held);
    }
}

#[test]
fn later_approval_does_not_override_rejection() {
    let decision = EscalationDecision {
        artifact_id: ARTIFACT.into(),
        policy_version: 1,
        status: EscalationStatus::Escalated,
        triggers: vec![],
        required_role: Some(ReviewerRole::DomainExpert),
        decided_at: catalog::epoch(),
    };
    let events = vec![
        event(1, ARTIFACT, ReviewerRole::DomainExpert, ReviewDecision::Reject),
        event(2, ARTIFACT, ReviewerRole::DomainExpert, ReviewDecision::Approve),
    ];
    assert_eq!(release_gate(&decision, &events), ReleaseState::Blocked);
}
