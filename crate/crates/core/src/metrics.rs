//! Evaluation arithmetic over session reports.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::percent_of;
use crate::report::{IterationKind, SessionReport, VerificationStatus};
use crate::verifier::ErrorMatch;

/// `100 * effective / generated`; `None` when nothing was generated.
pub fn compute_etr(generated: u64, effective: u64) -> Option<f64> {
    debug_assert!(effective <= generated, "effective exceeds generated");
    (generated > 0).then(|| 100.0 * effective as f64 / generated as f64)
}

/// Harmonic mean; `None` unless both inputs are positive.
pub fn f1(precision: f64, recall: f64) -> Option<f64> {
    (precision > 0.0 && recall > 0.0).then(|| 2.0 * precision * recall / (precision + recall))
}

/// Two decimals, or `undefined`.
pub fn format_percent(value: Option<f64>) -> String {
    value.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Micro,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub averaging: Averaging,
    /// Snippets that contributed (those with ground truth).
    pub snippets: u64,
}

impl CorpusMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, snippets: u64) -> Self {
        let ratio = |n: u64, d: u64| (d > 0).then(|| n as f64 / d as f64);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) => f1(p, r),
            _ => None,
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
            averaging: Averaging::Micro,
            snippets,
        }
    }
}

/// Micro-averaged precision/recall/F1 over `(detected, ground truth)` pairs.
pub fn compute_prf<'a, I>(pairs: I) -> CorpusMetrics
where
    I: IntoIterator<Item = (&'a BTreeSet<String>, &'a BTreeSet<String>)>,
{
    let (mut tp, mut fp, mut fn_, mut n) = (0u64, 0u64, 0u64, 0u64);
    for (detected, truth) in pairs {
        tp += detected.intersection(truth).count() as u64;
        fp += detected.difference(truth).count() as u64;
        fn_ += truth.difference(detected).count() as u64;
        n += 1;
    }
    CorpusMetrics::from_counts(tp, fp, fn_, n)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    /// Percent; `None` for an empty matrix.
    pub accuracy: Option<f64>,
}

impl ConfusionMatrix {
    pub fn from_counts(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        Self {
            tp,
            fn_,
            fp,
            tn,
            accuracy: compute_etr(tp + fn_ + fp + tn, tp + tn),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    /// Percent of actually buggy snippets flagged buggy.
    pub fn tp_rate(&self) -> Option<f64> {
        compute_etr(self.tp + self.fn_, self.tp)
    }
}

/// Counts `(predicted buggy, actually buggy)` labels.
pub fn compute_confusion<I>(labels: I) -> ConfusionMatrix
where
    I: IntoIterator<Item = (bool, bool)>,
{
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for label in labels {
        match label {
            (true, true) => tp += 1,
            (false, true) => fn_ += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    ConfusionMatrix::from_counts(tp, fn_, fp, tn)
}

/// Buggy-or-not labels of one snippet in recommendation mode.
///
/// A snippet is actually buggy when its ground truth names an exception. A
/// buggy snippet counts as predicted buggy only if a detected exception is in
/// its ground truth; a non-buggy snippet counts as predicted buggy if
/// anything was detected.
pub fn so_label(detected: &BTreeSet<String>, truth: &BTreeSet<String>) -> (bool, bool) {
    let actual = !truth.is_empty();
    let predicted = if actual {
        !detected.is_disjoint(truth)
    } else {
        !detected.is_empty()
    };
    (predicted, actual)
}

/// Distance, in tests, between successive first detections:
/// `[o1, o2 - o1, o3 - o2, ...]` for ordinals sorted ascending.
pub fn tests_to_next_unique_error(ordinals: &[u32]) -> Vec<u32> {
    let mut sorted = ordinals.to_vec();
    sorted.sort_unstable();
    let mut prev = 0;
    sorted
        .into_iter()
        .map(|o| {
            let gap = o - prev;
            prev = o;
            gap
        })
        .collect()
}

/// Mean gap per position across sessions; position k averages over the
/// sessions that found at least k errors.
pub fn average_gaps_by_position(gaps: &[Vec<u32>]) -> Vec<f64> {
    let longest = gaps.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|k| {
            let at: Vec<u32> = gaps.iter().filter_map(|g| g.get(k).copied()).collect();
            at.iter().map(|&g| g as f64).sum::<f64>() / at.len() as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PlateauStats {
    /// 1-based `(start, end)` positions of maximal runs of equal values.
    pub intervals: Vec<(u32, u32)>,
    /// Sum of `run length - 1`.
    pub total: u32,
}

pub fn plateau_stats(history: &[f64]) -> PlateauStats {
    let mut stats = PlateauStats::default();
    let mut start = 0;
    for i in 1..=history.len() {
        if i < history.len() && history[i] == history[start] {
            continue;
        }
        if i - start > 1 {
            stats.intervals.push((start as u32 + 1, i as u32));
            stats.total += (i - start - 1) as u32;
        }
        start = i;
    }
    stats
}

/// One row of the coverage curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageRow {
    /// 1-based position among retained tests.
    pub test: u32,
    pub predicted_percent: f64,
    pub actual_percent: Option<f64>,
}

/// Predicted cumulative coverage after each retained test, with the
/// executed cumulative coverage alongside when the session was verified.
pub fn coverage_rows(report: &SessionReport) -> Vec<CoverageRow> {
    let actual_universe = match &report.verification {
        VerificationStatus::Verified { coverable, .. } => Some(coverable),
        _ => None,
    };
    let mut executed = BTreeSet::new();
    report
        .iterations
        .iter()
        .filter(|it| it.kind == IterationKind::Fresh)
        .enumerate()
        .map(|(i, it)| {
            let actual_percent = actual_universe.map(|universe| {
                if let Some(v) = &it.verification {
                    executed.extend(v.actual.executed_lines.intersection(universe).copied());
                }
                percent_of(executed.len(), universe.len())
            });
            CoverageRow {
                test: i as u32 + 1,
                predicted_percent: it.percent,
                actual_percent,
            }
        })
        .collect()
}

/// Mean `|predicted - actual|` over the coverage curve; `None` unless
/// verified.
pub fn mean_abs_delta(rows: &[CoverageRow]) -> Option<f64> {
    let deltas: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.actual_percent.map(|a| (r.predicted_percent - a).abs()))
        .collect();
    (!deltas.is_empty()).then(|| deltas.iter().sum::<f64>() / deltas.len() as f64)
}

/// An exception counted toward the session's findings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub name: String,
    pub ordinal: u32,
}

/// Unique exceptions credited to the session, in order of first detection.
///
/// Verified sessions credit exceptions that execution confirmed a
/// prediction for. Otherwise every predicted exception is credited.
pub fn findings(report: &SessionReport) -> Vec<Finding> {
    if !report.verification.is_verified() {
        return report
            .detected_errors
            .iter()
            .map(|d| Finding {
                name: d.name.clone(),
                ordinal: d.ordinal,
            })
            .collect();
    }
    let mut out: Vec<Finding> = Vec::new();
    let fresh = report.iterations.iter().filter(|it| it.kind == IterationKind::Fresh);
    for (i, it) in fresh.enumerate() {
        let Some(v) = &it.verification else { continue };
        if v.diff.error_match != ErrorMatch::Match {
            continue;
        }
        if let Some(name) = &v.actual.exception_name {
            if !out.iter().any(|f| &f.name == name) {
                out.push(Finding {
                    name: name.clone(),
                    ordinal: i as u32 + 1,
                });
            }
        }
    }
    out
}

pub fn finding_names(report: &SessionReport) -> BTreeSet<String> {
    findings(report).into_iter().map(|f| f.name).collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Retained (non-duplicate, parsed) test cases.
    pub generated: u64,
    pub effective: u64,
    pub etr: Option<f64>,
    /// Effectiveness judged from predictions alone (no execution).
    pub unverified: bool,
    pub bdr: u64,
    pub tests_to_next_error: Vec<u32>,
    pub plateau_intervals: Vec<(u32, u32)>,
    pub total_plateau: u32,
    pub final_percent: f64,
    pub mean_abs_delta: Option<f64>,
}

pub fn session_metrics(report: &SessionReport) -> SessionMetrics {
    let verified = report.verification.is_verified();
    let fresh: Vec<_> = report
        .iterations
        .iter()
        .filter(|it| it.kind == IterationKind::Fresh)
        .collect();
    let effective = fresh
        .iter()
        .filter(|it| {
            if verified {
                it.verification
                    .as_ref()
                    .is_some_and(|v| v.diff.error_match == ErrorMatch::Match)
            } else {
                it.prediction.as_ref().is_some_and(|p| {
                    p.parse_status == crate::predictor::ParseStatus::Ok
                        && !p.predicted_errors.is_empty()
                })
            }
        })
        .count() as u64;
    let found = findings(report);
    let ordinals: Vec<u32> = found.iter().map(|f| f.ordinal).collect();
    let plateau = plateau_stats(&report.ledger.history);
    SessionMetrics {
        generated: fresh.len() as u64,
        effective,
        etr: compute_etr(fresh.len() as u64, effective),
        unverified: !verified,
        bdr: found.len() as u64,
        tests_to_next_error: tests_to_next_unique_error(&ordinals),
        plateau_intervals: plateau.intervals,
        total_plateau: plateau.total,
        final_percent: report.ledger.percent,
        mean_abs_delta: mean_abs_delta(&coverage_rows(report)),
    }
}
