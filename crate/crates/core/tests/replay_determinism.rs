//! Stored decisions replay bit-exactly under their pinned policy versions
//! after governance has moved on.

mod common;

use oversight_core::governance::Governance;
use oversight_core::Engine;
use oversight_core::catalog;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn replay_after_actions(seed: u64) -> Engine {
    let mut engine = Engine::illustrative();
    let t = common::submit_corpus(&mut engine, 0);
    let t = common::review_all(&mut engine, t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = common::apply_random_actions(&mut engine, 5, &mut rng, t);
    // A second wave of artifacts decided under the changed policy.
    let ids: Vec<String> = engine.sources().map(|s| s.id.clone()).collect();
    let mut t = t;
    for sid in ids.iter().take(10) {
        engine.submit(sid, "p-general", common::at(t)).unwrap();
        t += 1;
    }
    common::apply_random_actions(&mut engine, 5, &mut rng, t);
    engine
}

#[test]
fn ten_random_actions_then_replay_everything() {
    for seed in [1u64, 2, 3] {
        let engine = replay_after_actions(seed);
        assert_eq!(engine.governance().actions().len(), 10);
        assert_eq!(engine.policy_version(), 11);
        let evidence: Vec<_> = engine.evidence().collect();
        assert!(evidence.len() >= 50);
        for ev in evidence {
            let replayed = engine.replay(&ev.artifact.artifact_id).unwrap();
            assert_eq!(replayed, ev.decision);
            assert_eq!(
                serde_json::to_string(&replayed).unwrap(),
                serde_json::to_string(&ev.decision).unwrap()
            );
        }
    }
}

#[test]
fn restored_governance_replays_identically() {
    let engine = replay_after_actions(9);
    let restored = Governance::restore(
        catalog::default_surface(),
        catalog::illustrative_registry(),
        engine.governance().actions().to_vec(),
    )
    .unwrap();
    assert_eq!(restored.history(), engine.governance().history());
    for ev in engine.evidence() {
        let d = oversight_core::governance::replay_decision(ev, &restored).unwrap();
        assert_eq!(d, ev.decision);
    }
}

#[test]
fn verify_is_clean_after_governance() {
    let engine = replay_after_actions(4);
    let report = engine.verify();
    assert!(report.ok(), "{report:?}");
}
