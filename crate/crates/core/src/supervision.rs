//! HOTL supervision: count-based monitoring windows, override accounting and
//! drift detection with a pooled two-proportion z-test.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::digest::short_id;
use crate::escalation::EscalationStatus;
use crate::review::ReviewDecision;
use crate::trace::{Category, Need, RegimenKind};
use crate::Timestamp;

/// What supervision needs to know about one decided artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactObservation {
    pub artifact_id: String,
    pub decided_at: Timestamp,
    pub status: EscalationStatus,
    pub needs: BTreeSet<Need>,
    pub regimen_kind: RegimenKind,
    /// Automated verdict per evaluated category: `true` when it passed.
    pub category_verdicts: BTreeMap<Category, bool>,
}

/// A terminal human decision and the categories it cites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackObservation {
    pub event_id: String,
    pub artifact_id: String,
    pub timestamp: Timestamp,
    pub decision: ReviewDecision,
    pub categories: BTreeSet<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringWindow {
    pub window_id: String,
    pub start: Option<Timestamp>,
    pub end: Option<Timestamp>,
    pub artifact_count: usize,
    pub escalated_count: usize,
    pub blocked_count: usize,
    pub feedback_count: usize,
    pub failures_by_category: BTreeMap<Category, usize>,
    pub overrides_by_category: BTreeMap<Category, usize>,
    pub escalation_rate: f64,
    pub profile_breakdown: BTreeMap<Need, f64>,
    pub regimen_breakdown: BTreeMap<RegimenKind, f64>,
}

fn rate(x: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        x as f64 / n as f64
    }
}

/// Override: the human decision disagrees with the automated verdict of a
/// category it cites (approve after a fail, reject or revise after a pass).
pub fn is_override(decision: ReviewDecision, automated_passed: bool) -> bool {
    match decision {
        ReviewDecision::Approve => !automated_passed,
        ReviewDecision::Reject | ReviewDecision::RequestRevision => automated_passed,
    }
}

fn aggregate(
    window_id: String,
    start: Option<Timestamp>,
    end: Option<Timestamp>,
    artifacts: &[&ArtifactObservation],
    feedback: &[&FeedbackObservation],
    lookup: &BTreeMap<&str, &ArtifactObservation>,
) -> MonitoringWindow {
    let mut escalated = 0;
    let mut blocked = 0;
    let mut failures: BTreeMap<Category, usize> = BTreeMap::new();
    let mut by_need: BTreeMap<Need, (usize, usize)> = BTreeMap::new();
    let mut by_regimen: BTreeMap<RegimenKind, (usize, usize)> = BTreeMap::new();
    for a in artifacts {
        let is_escalated = a.status == EscalationStatus::Escalated;
        escalated += usize::from(is_escalated);
        blocked += usize::from(a.status == EscalationStatus::Blocked);
        for (cat, passed) in &a.category_verdicts {
            *failures.entry(*cat).or_default() += usize::from(!passed);
        }
        let needs = if a.needs.is_empty() {
            BTreeSet::from([Need::None])
        } else {
            a.needs.clone()
        };
        for need in needs {
            let e = by_need.entry(need).or_default();
            e.0 += usize::from(is_escalated);
            e.1 += 1;
        }
        let e = by_regimen.entry(a.regimen_kind).or_default();
        e.0 += usize::from(is_escalated);
        e.1 += 1;
    }
    let mut overrides: BTreeMap<Category, usize> = BTreeMap::new();
    for f in feedback {
        let Some(a) = lookup.get(f.artifact_id.as_str()) else {
            continue;
        };
        for cat in &f.categories {
            if let Some(passed) = a.category_verdicts.get(cat) {
                if is_override(f.decision, *passed) {
                    *overrides.entry(*cat).or_default() += 1;
                }
            }
        }
    }
    MonitoringWindow {
        window_id,
        start,
        end,
        artifact_count: artifacts.len(),
        escalated_count: escalated,
        blocked_count: blocked,
        feedback_count: feedback.len(),
        failures_by_category: failures,
        overrides_by_category: overrides,
        escalation_rate: rate(escalated, artifacts.len()),
        profile_breakdown: by_need.into_iter().map(|(k, (x, n))| (k, rate(x, n))).collect(),
        regimen_breakdown: by_regimen.into_iter().map(|(k, (x, n))| (k, rate(x, n))).collect(),
    }
}

/// Aggregate all observations with timestamps in `[start, end)`.
pub fn aggregate_window(
    window_id: &str,
    start: Timestamp,
    end: Timestamp,
    artifacts: &[ArtifactObservation],
    feedback: &[FeedbackObservation],
) -> MonitoringWindow {
    let lookup: BTreeMap<&str, &ArtifactObservation> =
        artifacts.iter().map(|a| (a.artifact_id.as_str(), a)).collect();
    let arts: Vec<&ArtifactObservation> = artifacts
        .iter()
        .filter(|a| a.decided_at >= start && a.decided_at < end)
        .collect();
    let fb: Vec<&FeedbackObservation> = feedback
        .iter()
        .filter(|f| f.timestamp >= start && f.timestamp < end)
        .collect();
    aggregate(window_id.to_string(), Some(start), Some(end), &arts, &fb, &lookup)
}

/// Split the stream into windows of `size` artifacts in decision order.
/// Each feedback event lands in the window whose time span contains it; the
/// last window is open-ended and may hold fewer artifacts.
pub fn windows_by_count(
    artifacts: &[ArtifactObservation],
    feedback: &[FeedbackObservation],
    size: usize,
) -> Vec<MonitoringWindow> {
    let size = size.max(1);
    let mut sorted: Vec<&ArtifactObservation> = artifacts.iter().collect();
    sorted.sort_by(|a, b| (a.decided_at, &a.artifact_id).cmp(&(b.decided_at, &b.artifact_id)));
    let lookup: BTreeMap<&str, &ArtifactObservation> =
        artifacts.iter().map(|a| (a.artifact_id.as_str(), a)).collect();
    let chunks: Vec<&[&ArtifactObservation]> = sorted.chunks(size).collect();
    let starts: Vec<Timestamp> = chunks.iter().map(|c| c[0].decided_at).collect();
    let mut fb: Vec<&FeedbackObservation> = feedback.iter().collect();
    fb.sort_by(|a, b| (a.timestamp, &a.event_id).cmp(&(b.timestamp, &b.event_id)));
    chunks
        .iter()
        .enumerate()
        .map(|(i, chunk)| {
            let start = starts[i];
            let end = starts.get(i + 1).copied();
            let in_window: Vec<&FeedbackObservation> = fb
                .iter()
                .copied()
                .filter(|f| (i == 0 || f.timestamp >= start) && end.is_none_or(|e| f.timestamp < e))
                .collect();
            aggregate(format!("w{i:04}"), Some(start), end, chunk, &in_window, &lookup)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConfig {
    pub z_threshold: f64,
    pub min_n: usize,
    pub override_k: usize,
    pub window_size: usize,
    /// Leading windows pooled as the baseline.
    pub baseline_windows: usize,
}

impl Default for DriftConfig {
    fn default() -> Self {
        DriftConfig {
            z_threshold: 3.0,
            min_n: 20,
            override_k: 3,
            window_size: 50,
            baseline_windows: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    EscalationRateShift,
    CategoryFailureShift,
    OverrideCluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSample {
    pub rate: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftAlert {
    pub alert_id: String,
    pub kind: AlertKind,
    pub baseline: RateSample,
    pub observed: RateSample,
    pub statistic: f64,
    pub threshold: f64,
    pub window_id: String,
    pub category: Option<Category>,
    pub created_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DriftError {
    #[error("pooled baseline n = {n} is below min_n = {min_n}")]
    InsufficientBaseline { n: usize, min_n: usize },
}

/// One-sided pooled two-proportion z statistic for an increase from the
/// baseline proportion `x1/n1` to the observed `x2/n2`.
pub fn two_proportion_z(x1: usize, n1: usize, x2: usize, n2: usize) -> f64 {
    if n1 == 0 || n2 == 0 {
        return 0.0;
    }
    let (p1, p2) = (x1 as f64 / n1 as f64, x2 as f64 / n2 as f64);
    let p = (x1 + x2) as f64 / (n1 + n2) as f64;
    let se = (p * (1.0 - p) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    if se == 0.0 {
        0.0
    } else {
        (p2 - p1) / se
    }
}

fn alert(
    kind: AlertKind,
    baseline: RateSample,
    observed: RateSample,
    statistic: f64,
    threshold: f64,
    window: &MonitoringWindow,
    category: Option<Category>,
) -> DriftAlert {
    let alert_id = short_id(
        "alert",
        &json!({
            "kind": kind,
            "window_id": window.window_id,
            "category": category,
            "start": window.start,
        }),
    );
    DriftAlert {
        alert_id,
        kind,
        baseline,
        observed,
        statistic,
        threshold,
        window_id: window.window_id.clone(),
        category,
        created_at: window.end.or(window.start),
    }
}

pub fn detect_drift(
    baseline: &[MonitoringWindow],
    current: &MonitoringWindow,
    config: &DriftConfig,
) -> Result<Vec<DriftAlert>, DriftError> {
    let n1: usize = baseline.iter().map(|w| w.artifact_count).sum();
    if n1 == 0 || n1 < config.min_n {
        return Err(DriftError::InsufficientBaseline {
            n: n1,
            min_n: config.min_n,
        });
    }
    let n2 = current.artifact_count;
    let mut alerts = Vec::new();
    if n2 >= config.min_n && n2 > 0 {
        let x1: usize = baseline.iter().map(|w| w.escalated_count).sum();
        let z = two_proportion_z(x1, n1, current.escalated_count, n2);
        if z > config.z_threshold {
            alerts.push(alert(
                AlertKind::EscalationRateShift,
                RateSample { rate: rate(x1, n1), n: n1 },
                RateSample {
                    rate: current.escalation_rate,
                    n: n2,
                },
                z,
                config.z_threshold,
                current,
                None,
            ));
        }
        let categories: BTreeSet<Category> = baseline
            .iter()
            .flat_map(|w| w.failures_by_category.keys().copied())
            .chain(current.failures_by_category.keys().copied())
            .collect();
        for cat in categories {
            let x1: usize = baseline
                .iter()
                .map(|w| w.failures_by_category.get(&cat).copied().unwrap_or(0))
                .sum();
            let x2 = current.failures_by_category.get(&cat).copied().unwrap_or(0);
            let z = two_proportion_z(x1, n1, x2, n2);
            if z > config.z_threshold {
                alerts.push(alert(
                    AlertKind::CategoryFailureShift,
                    RateSample { rate: rate(x1, n1), n: n1 },
                    RateSample { rate: rate(x2, n2), n: n2 },
                    z,
                    config.z_threshold,
                    current,
                    Some(cat),
                ));
            }
        }
    }
    let base_feedback: usize = baseline.iter().map(|w| w.feedback_count).sum();
    for (cat, &count) in &current.overrides_by_category {
        if count < config.override_k.max(1) {
            continue;
        }
        let base_overrides: usize = baseline
            .iter()
            .map(|w| w.overrides_by_category.get(cat).copied().unwrap_or(0))
            .sum();
        let baseline_sample = if base_feedback > 0 {
            RateSample {
                rate: rate(base_overrides, base_feedback),
                n: base_feedback,
            }
        } else {
            RateSample { rate: 0.0, n: n1 }
        };
        alerts.push(alert(
            AlertKind::OverrideCluster,
            baseline_sample,
            RateSample {
                rate: rate(count, current.feedback_count),
                n: current.feedback_count,
            },
            count as f64,
            (config.override_k.max(1) - 1) as f64,
            current,
            Some(*cat),
        ));
    }
    Ok(alerts)
}

/// Windows and alerts over a whole stream: the leading windows form a fixed
/// baseline and every later window is tested against it.
pub fn supervise(
    artifacts: &[ArtifactObservation],
    feedback: &[FeedbackObservation],
    config: &DriftConfig,
) -> (Vec<MonitoringWindow>, Vec<DriftAlert>) {
    let windows = windows_by_count(artifacts, feedback, config.window_size);
    let alerts = alerts_for(&windows, config);
    (windows, alerts)
}

fn alerts_for(windows: &[MonitoringWindow], config: &DriftConfig) -> Vec<DriftAlert> {
    let k = config.baseline_windows.max(1);
    if windows.len() <= k {
        return Vec::new();
    }
    let (baseline, rest) = windows.split_at(k);
    rest.iter()
        .filter_map(|w| detect_drift(baseline, w, config).ok())
        .flatten()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub window_id: String,
    pub artifact_count: usize,
    pub auto_released_rate: f64,
    pub escalation_rate: f64,
    pub blocked_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringSummary {
    pub windows: Vec<MonitoringWindow>,
    pub alerts: Vec<DriftAlert>,
    pub compliance_trend: Vec<TrendPoint>,
    pub generated_at: Option<Timestamp>,
    pub log_offset: usize,
}

/// Read-only summary over windows whose start falls in `[from, to)`.
pub fn monitoring_summary(
    artifacts: &[ArtifactObservation],
    feedback: &[FeedbackObservation],
    config: &DriftConfig,
    from: Option<Timestamp>,
    to: Option<Timestamp>,
) -> MonitoringSummary {
    let (windows, alerts) = supervise(artifacts, feedback, config);
    let in_range = |t: Option<Timestamp>| {
        t.is_some_and(|t| from.is_none_or(|f| t >= f) && to.is_none_or(|e| t < e))
    };
    let windows: Vec<MonitoringWindow> = windows.into_iter().filter(|w| in_range(w.start)).collect();
    let ids: BTreeSet<&str> = windows.iter().map(|w| w.window_id.as_str()).collect();
    let alerts: Vec<DriftAlert> = alerts
        .into_iter()
        .filter(|a| ids.contains(a.window_id.as_str()))
        .collect();
    let compliance_trend = windows
        .iter()
        .map(|w| TrendPoint {
            window_id: w.window_id.clone(),
            artifact_count: w.artifact_count,
            auto_released_rate: rate(w.artifact_count - w.escalated_count - w.blocked_count, w.artifact_count),
            escalation_rate: w.escalation_rate,
            blocked_rate: rate(w.blocked_count, w.artifact_count),
        })
        .collect();
    let generated_at = artifacts
        .iter()
        .map(|a| a.decided_at)
        .chain(feedback.iter().map(|f| f.timestamp))
        .max();
    MonitoringSummary {
        windows,
        alerts,
        compliance_trend,
        generated_at,
        log_offset: artifacts.len() + feedback.len(),
    }
}

/// Seeded escalation-rate simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub seed: u64,
    /// Windows after the baseline.
    pub windows: usize,
    pub base_rate: f64,
    pub shifted_rate: f64,
    /// Index (among post-baseline windows) of the first shifted window.
    pub change_at: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub spec: SimulationSpec,
    pub config: DriftConfig,
    pub windows: Vec<MonitoringWindow>,
    pub alerts: Vec<DriftAlert>,
    /// Post-baseline windows that raised an escalation-rate alert.
    pub alerting_windows: Vec<usize>,
    /// Windows observed after the change up to and including the first
    /// alert, when one fired at or after the change.
    pub detection_latency: Option<usize>,
    /// Alerting windows before the change (all of them without a change).
    pub false_alerts: usize,
}

fn synthetic_window(index: usize, n: usize, escalated: usize) -> MonitoringWindow {
    MonitoringWindow {
        window_id: format!("w{index:04}"),
        start: None,
        end: None,
        artifact_count: n,
        escalated_count: escalated,
        blocked_count: 0,
        feedback_count: 0,
        failures_by_category: BTreeMap::new(),
        overrides_by_category: BTreeMap::new(),
        escalation_rate: rate(escalated, n),
        profile_breakdown: BTreeMap::new(),
        regimen_breakdown: BTreeMap::new(),
    }
}

pub fn simulate_drift(spec: SimulationSpec, config: DriftConfig) -> SimulationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = config.window_size.max(1);
    let k = config.baseline_windows.max(1);
    let mut windows = Vec::with_capacity(k + spec.windows);
    for i in 0..k + spec.windows {
        let shifted = i >= k && spec.change_at.is_some_and(|c| i - k >= c);
        let p = if shifted { spec.shifted_rate } else { spec.base_rate };
        let escalated = (0..n).filter(|_| rng.random_bool(p.clamp(0.0, 1.0))).count();
        windows.push(synthetic_window(i, n, escalated));
    }
    let mut alerts = Vec::new();
    let mut alerting_windows = Vec::new();
    for (j, w) in windows[k..].iter().enumerate() {
        let found = detect_drift(&windows[..k], w, &config).unwrap_or_default();
        if found.iter().any(|a| a.kind == AlertKind::EscalationRateShift) {
            alerting_windows.push(j);
        }
        alerts.extend(found);
    }
    let change = spec.change_at.unwrap_or(usize::MAX);
    let false_alerts = alerting_windows.iter().filter(|&&j| j < change).count();
    let detection_latency = spec
        .change_at
        .and_then(|c| alerting_windows.iter().find(|&&j| j >= c).map(|j| j - c + 1));
    SimulationReport {
        spec,
        config,
        windows,
        alerts,
        alerting_windows,
        detection_latency,
        false_alerts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone, Utc};

    fn t(s: i64) -> Timestamp {
        Utc.timestamp_opt(1_800_000_000 + s, 0).unwrap()
    }

    fn obs(i: usize, status: EscalationStatus, readability_passed: bool) -> ArtifactObservation {
        ArtifactObservation {
            artifact_id: format!("a{i}"),
            decided_at: t(i as i64),
            status,
            needs: BTreeSet::from([if i % 2 == 0 { Need::CognitiveImpairment } else { Need::None }]),
            regimen_kind: if i % 3 == 0 { RegimenKind::MultiDrug } else { RegimenKind::SingleDrug },
            category_verdicts: BTreeMap::from([(Category::Readability, readability_passed), (Category::Safety, true)]),
        }
    }

    #[test]
    fn ten_artifacts_three_escalated() {
        let arts: Vec<_> = (0..10)
            .map(|i| obs(i, if i < 3 { EscalationStatus::Escalated } else { EscalationStatus::AutoReleased }, i >= 3))
            .collect();
        let w = aggregate_window("w", t(0), t(100), &arts, &[]);
        assert_eq!(w.artifact_count, 10);
        assert_eq!(w.escalated_count, 3);
        assert!((w.escalation_rate - 0.3).abs() < 1e-15);
        assert_eq!(w.failures_by_category[&Category::Readability], 3);
        assert_eq!(w.failures_by_category[&Category::Safety], 0);
        assert!(w.regimen_breakdown.contains_key(&RegimenKind::MultiDrug));
        assert!(w.regimen_breakdown.contains_key(&RegimenKind::SingleDrug));
    }

    #[test]
    fn empty_window_is_zero() {
        let w = aggregate_window("w", t(0), t(10), &[], &[]);
        assert_eq!((w.artifact_count, w.escalated_count, w.escalation_rate), (0, 0, 0.0));
        assert!(w.profile_breakdown.is_empty());
    }

    #[test]
    fn override_definition() {
        assert!(is_override(ReviewDecision::Approve, false));
        assert!(!is_override(ReviewDecision::Approve, true));
        assert!(is_override(ReviewDecision::Reject, true));
        assert!(is_override(ReviewDecision::RequestRevision, true));
        assert!(!is_override(ReviewDecision::Reject, false));
    }

    fn window(n: usize, x: usize) -> MonitoringWindow {
        synthetic_window(0, n, x)
    }

    #[test]
    fn z_test_examples() {
        let cfg = DriftConfig::default();
        assert!(detect_drift(&[window(200, 20)], &window(50, 5), &cfg).unwrap().is_empty());
        let alerts = detect_drift(&[window(200, 20)], &window(50, 20), &cfg).unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!(alerts[0].kind, AlertKind::EscalationRateShift);
        assert!(alerts[0].statistic > alerts[0].threshold);
        assert!(matches!(
            detect_drift(&[window(10, 1)], &window(50, 20), &cfg),
            Err(DriftError::InsufficientBaseline { n: 10, min_n: 20 })
        ));
        assert!(detect_drift(&[window(200, 20)], &window(10, 10), &cfg).unwrap().is_empty());
    }

    #[test]
    fn override_cluster_fires_at_k() {
        let mut current = window(50, 5);
        current.feedback_count = 4;
        current.overrides_by_category.insert(Category::Safety, 3);
        current.overrides_by_category.insert(Category::Readability, 2);
        let alerts = detect_drift(&[window(200, 20)], &current, &DriftConfig::default()).unwrap();
        assert_eq!(alerts.len(), 1);
        assert_eq!((alerts[0].kind, alerts[0].category), (AlertKind::OverrideCluster, Some(Category::Safety)));
        assert!(alerts[0].statistic > alerts[0].threshold);
    }

    #[test]
    fn count_windows_are_contiguous() {
        let arts: Vec<_> = (0..120).map(|i| obs(i, EscalationStatus::AutoReleased, true)).collect();
        let fb = vec![FeedbackObservation {
            event_id: "fb-1".into(),
            artifact_id: "a3".into(),
            timestamp: t(60) + Duration::milliseconds(500),
            decision: ReviewDecision::Reject,
            categories: BTreeSet::from([Category::Readability]),
        }];
        let ws = windows_by_count(&arts, &fb, 50);
        assert_eq!(ws.iter().map(|w| w.artifact_count).collect::<Vec<_>>(), vec![50, 50, 20]);
        assert_eq!(ws[0].end, ws[1].start);
        assert_eq!(ws[1].overrides_by_category[&Category::Readability], 1);
        assert_eq!(ws.iter().map(|w| w.feedback_count).sum::<usize>(), 1);
    }

    #[test]
    fn simulation_is_seeded() {
        let spec = SimulationSpec {
            seed: 7,
            windows: 10,
            base_rate: 0.1,
            shifted_rate: 0.4,
            change_at: Some(3),
        };
        let a = simulate_drift(spec, DriftConfig::default());
        let b = simulate_drift(spec, DriftConfig::default());
        assert_eq!(a, b);
        assert!(a.detection_latency.is_some_and(|l| l <= 3));
    }

    #[test]
    fn empty_summary() {
        let s = monitoring_summary(&[], &[], &DriftConfig::default(), None, None);
        assert!(s.windows.is_empty() && s.alerts.is_empty() && s.compliance_trend.is_empty());
        assert_eq!(s.log_offset, 0);
    }
}
