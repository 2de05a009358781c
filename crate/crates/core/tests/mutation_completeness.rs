//! Single-field mutations of template artifacts are each caught by exactly one
//! critical finding naming the mutated field.

use oversight_core::catalog;
use oversight_core::checkpoints::factual::{check_factual_consistency, FactField, Severity};
use oversight_core::generation::{dose_phrase, frequency_phrase, route_phrase};
use oversight_core::trace::{MedicationRecord, Route, SourceDocument};
use oversight_core::{UiArtifact, UiNode};

#[derive(Debug, Clone, Copy)]
enum Mutation {
    Dose,
    Frequency,
    Route,
    DeleteWarning(usize),
}

impl Mutation {
    fn field(self) -> FactField {
        match self {
            Mutation::Dose => FactField::Dose,
            Mutation::Frequency => FactField::Frequency,
            Mutation::Route => FactField::Route,
            Mutation::DeleteWarning(_) => FactField::Warning,
        }
    }
}

fn other_route(r: Route) -> Route {
    match r {
        Route::Oral => Route::Topical,
        Route::Topical => Route::Inhaled,
        Route::Inhaled => Route::Injection,
        Route::Injection => Route::Oral,
    }
}

/// Replace the first occurrence of `from` in the section's subtree.
fn replace_first(node: &mut UiNode, from: &str, to: &str) -> bool {
    if node.text.contains(from) {
        node.text = node.text.replacen(from, to, 1);
        return true;
    }
    node.children.iter_mut().any(|c| replace_first(c, from, to))
}

fn remove_node(node: &mut UiNode, id: &str) -> bool {
    let before = node.children.len();
    node.children.retain(|c| c.node_id != id);
    before != node.children.len() || node.children.iter_mut().any(|c| remove_node(c, id))
}

fn section(artifact: &mut UiArtifact, med: usize) -> &mut UiNode {
    let id = format!("n-root.med{med}");
    artifact.nodes[0]
        .children
        .iter_mut()
        .find(|n| n.node_id == id)
        .expect("medication section")
}

fn mutate(artifact: &UiArtifact, med_index: usize, med: &MedicationRecord, m: Mutation) -> UiArtifact {
    let mut out = artifact.clone();
    let sec = section(&mut out, med_index);
    let applied = match m {
        Mutation::Dose => {
            let changed = MedicationRecord {
                dose_value: med.dose_value * 2.0,
                ..med.clone()
            };
            replace_first(sec, &dose_phrase(med), &dose_phrase(&changed))
        }
        Mutation::Frequency => replace_first(
            sec,
            &frequency_phrase(med.frequency_per_day),
            &frequency_phrase(med.frequency_per_day + 1),
        ),
        Mutation::Route => replace_first(sec, &route_phrase(med.route), &route_phrase(other_route(med.route))),
        Mutation::DeleteWarning(k) => remove_node(sec, &format!("n-root.med{med_index}.warn{k}")),
    };
    assert!(applied, "mutation {m:?} found no target in {}", artifact.artifact_id);
    out
}

fn corpus() -> Vec<(SourceDocument, UiArtifact)> {
    let registry = catalog::illustrative_registry();
    let snap = registry.current();
    let mut out = Vec::new();
    for source in catalog::corpus_sources() {
        for pid in catalog::profile_ids() {
            let profile = snap.profile(&pid).unwrap().clone();
            let art = catalog::template_artifact(&snap, &source, &profile, 1).unwrap();
            out.push((source.clone(), art));
        }
    }
    out
}

#[test]
fn unmutated_artifacts_have_no_critical_findings() {
    let corpus = corpus();
    assert!(corpus.len() >= 50);
    for (source, art) in &corpus {
        let report = check_factual_consistency(art, source).unwrap();
        assert_eq!(report.critical(), 0, "{} / {}: {:?}", source.id, art.profile_id, report.findings);
        assert_eq!(report.score, 1.0);
    }
}

#[test]
fn every_single_field_mutation_is_caught_once() {
    let mut total = 0;
    let mut caught = 0;
    let mut misses = Vec::new();
    for (source, art) in corpus() {
        for (i, med) in source.medications.iter().enumerate() {
            let mut mutations = vec![Mutation::Dose, Mutation::Frequency, Mutation::Route];
            mutations.extend((0..med.warnings.len()).map(Mutation::DeleteWarning));
            for m in mutations {
                total += 1;
                let mutated = mutate(&art, i, med, m);
                let report = check_factual_consistency(&mutated, &source).unwrap();
                let critical: Vec<_> = report.findings.iter().filter(|f| f.severity == Severity::Critical).collect();
                if critical.len() == 1 && critical[0].field == m.field() {
                    caught += 1;
                } else {
                    misses.push(format!("{} {} med{i} {m:?}: {:?}", source.id, art.profile_id, report.findings));
                }
            }
        }
    }
    assert!(total >= 100, "only {total} mutations");
    assert_eq!(caught, total, "{}", misses.join("\n"));
}
