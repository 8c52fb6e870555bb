//! Session and batch reports, post-session verification and batch runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::agents::{AgentRole, Agents};
use crate::corpus::{CodeSnippet, Completeness, Corpus, Language};
use crate::engine::{
    run_session, CoverageLedger, DetectedError, SessionConfig, SessionStatus, TestCase,
};
use crate::metrics::{
    average_gaps_by_position, compute_confusion, compute_prf, coverage_rows, finding_names,
    format_percent, session_metrics, so_label, ConfusionMatrix, CorpusMetrics, SessionMetrics,
};
use crate::predictor::ExecutionPrediction;
use crate::prompts::{Phase, PromptTemplates};
use crate::verifier::{diff_prediction, ActualOutcome, PredictionDiff, Verifier, VerifierConfig, VerifyError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid report: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: invalid config: {message}")]
    Config { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationKind {
    /// New input, predicted by the executor.
    Fresh,
    /// Input equivalent to an earlier one; no executor call.
    Duplicate,
    /// Generator output without a usable input; skipped.
    Unparsable,
    /// The single vanilla prompt of the single-agent mode.
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationVerification {
    pub actual: ActualOutcome,
    pub diff: PredictionDiff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub phase: Phase,
    pub kind: IterationKind,
    /// Digest of the first prompt sent this iteration.
    pub prompt_digest: String,
    /// Final agent response.
    pub response: String,
    /// Agent calls, including format retries.
    pub attempts: u32,
    pub test_case: Option<TestCase>,
    pub duplicate_of: Option<u32>,
    pub prediction: Option<ExecutionPrediction>,
    /// Predicted lines ignored as outside the coverable set.
    pub dropped_lines: BTreeSet<u32>,
    /// Ledger percent after this iteration.
    pub percent: f64,
    pub verification: Option<IterationVerification>,
    pub verification_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum VerificationStatus {
    NotRequested,
    Verified {
        /// Program actually executed (the snippet or its complete companion).
        target_id: String,
        /// Line numbers of predictions and executions refer to the same file.
        aligned: bool,
        /// Coverable lines of the executed program.
        coverable: BTreeSet<u32>,
    },
    Unavailable {
        reason: String,
    },
}

impl VerificationStatus {
    pub fn is_verified(&self) -> bool {
        matches!(self, VerificationStatus::Verified { .. })
    }
}

/// Agent call totals derived from iteration records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CallCounts {
    pub generator: u64,
    pub executor: u64,
    pub fresh: u64,
    pub duplicates: u64,
    pub unparsable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub snippet_id: String,
    pub language: Language,
    pub completeness: Completeness,
    pub ground_truth_errors: Option<BTreeSet<String>>,
    pub config: SessionConfig,
    pub generator_model: String,
    pub executor_model: String,
    pub status: SessionStatus,
    pub failure: Option<String>,
    pub iterations: Vec<IterationRecord>,
    pub ledger: CoverageLedger,
    pub detected_errors: Vec<DetectedError>,
    pub verification: VerificationStatus,
    pub metrics: SessionMetrics,
}

impl SessionReport {
    pub fn refresh_metrics(&mut self) {
        self.metrics = session_metrics(self);
    }

    pub fn calls(&self) -> CallCounts {
        let mut c = CallCounts::default();
        for it in &self.iterations {
            match it.kind {
                IterationKind::Vanilla => c.executor += it.attempts as u64,
                _ => c.generator += it.attempts as u64,
            }
            match it.kind {
                IterationKind::Fresh => c.fresh += 1,
                IterationKind::Duplicate => c.duplicates += 1,
                IterationKind::Unparsable => c.unparsable += 1,
                IterationKind::Vanilla => {}
            }
            if let Some(p) = &it.prediction {
                c.executor += p.attempts as u64;
            }
        }
        c
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, ReportError> {
        serde_json::from_str(text).map_err(|source| ReportError::Json {
            path: origin.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text, path)
    }

    /// Writes `<dir>/<snippet id>.json`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, ReportError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(format!("{}.json", file_stem(&self.snippet_id)));
        fs::write(&path, self.to_json()).map_err(io_err(&path))?;
        Ok(path)
    }
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Subdirectory of a batch output directory holding session reports.
pub const SESSIONS_DIR: &str = "sessions";

/// Session reports under `dir`, or under `dir/sessions` when that exists:
/// every `*.json` except `batch.json`, sorted by file name.
pub fn load_reports(dir: &Path) -> Result<Vec<SessionReport>, ReportError> {
    let nested = dir.join(SESSIONS_DIR);
    let dir = if nested.is_dir() { nested.as_path() } else { dir };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && p.file_name().is_some_and(|n| n != "batch.json")
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| SessionReport::load(p)).collect()
}

/// Executes every retained test case of `report` on `target` and attaches
/// outcomes and diffs. `target` is the snippet itself or its complete
/// companion; `None` marks verification unavailable.
pub fn verify_session(report: &mut SessionReport, verifier: &Verifier, target: Option<&CodeSnippet>) {
    for it in &mut report.iterations {
        it.verification = None;
        it.verification_error = None;
    }
    let Some(target) = target.filter(|t| t.completeness == Completeness::Complete) else {
        report.verification = VerificationStatus::Unavailable {
            reason: "no complete version to execute".into(),
        };
        report.refresh_metrics();
        return;
    };
    let inputs: Vec<(u32, String)> = report
        .iterations
        .iter()
        .filter(|it| it.kind == IterationKind::Fresh)
        .filter_map(|it| it.test_case.as_ref().map(|t| (t.id, t.input_text.clone())))
        .collect();
    let outcomes = verifier.execute_many(target, &inputs);

    let mut missing = None;
    for ((test_id, _), outcome) in inputs.iter().zip(outcomes) {
        let Some(it) = report.iterations.iter_mut().find(|it| it.iteration == *test_id) else {
            continue;
        };
        match outcome {
            Ok(actual) => {
                let diff = match &it.prediction {
                    Some(p) => diff_prediction(p, &actual),
                    None => continue,
                };
                it.verification = Some(IterationVerification { actual, diff });
            }
            Err(e @ VerifyError::EnvironmentMissing { .. }) => {
                missing = Some(e.to_string());
                break;
            }
            Err(e) => {
                warn!(snippet = %report.snippet_id, test = test_id, error = %e, "execution failed");
                it.verification_error = Some(e.to_string());
            }
        }
    }
    report.verification = match missing {
        Some(reason) => {
            for it in &mut report.iterations {
                it.verification = None;
                it.verification_error = None;
            }
            VerificationStatus::Unavailable { reason }
        }
        None => VerificationStatus::Verified {
            target_id: target.id.clone(),
            aligned: target.id == report.snippet_id,
            coverable: target.coverable_lines.clone(),
        },
    };
    report.refresh_metrics();
}

/// `test,predicted_percent[,actual_percent]` rows of the coverage curve.
pub fn emit_plateau_csv(report: &SessionReport) -> String {
    let rows = coverage_rows(report);
    let with_actual = report.verification.is_verified();
    let mut out = String::from(if with_actual {
        "test,predicted_percent,actual_percent\n"
    } else {
        "test,predicted_percent\n"
    });
    for row in rows {
        let _ = write!(out, "{},{}", row.test, format_percent(Some(row.predicted_percent)));
        if with_actual {
            let _ = write!(out, ",{}", format_percent(row.actual_percent));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Detection: precision/recall against ground-truth exception names.
    #[default]
    Detect,
    /// Recommendation: buggy/non-buggy confusion matrix.
    So,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub tool_version: String,
    pub backend: String,
    pub generator_model: String,
    pub executor_model: String,
    pub template_hashes: BTreeMap<String, String>,
    pub toolchain: BTreeMap<String, String>,
}

impl Fingerprint {
    pub fn collect(agents: &Agents, templates: &PromptTemplates, verifier: &VerifierConfig) -> Self {
        let mut toolchain = BTreeMap::new();
        toolchain.insert("python".into(), tool_version(&verifier.python, "--version"));
        toolchain.insert("javac".into(), tool_version(&verifier.javac, "-version"));
        toolchain.insert("java".into(), tool_version(&verifier.java, "-version"));
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            backend: agents.backend_kind().into(),
            generator_model: agents.config(AgentRole::TestCaseGenerator).model_name.clone(),
            executor_model: agents.config(AgentRole::PredictiveExecutor).model_name.clone(),
            template_hashes: templates.hashes(),
            toolchain,
        }
    }
}

fn tool_version(program: &str, flag: &str) -> String {
    match Command::new(program).arg(flag).output() {
        Ok(out) => {
            let text = if out.stdout.is_empty() { out.stderr } else { out.stdout };
            String::from_utf8_lossy(&text)
                .lines()
                .next()
                .unwrap_or("")
                .trim()
                .to_string()
        }
        Err(_) => "unavailable".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub snippet_id: String,
    pub status: SessionStatus,
    pub verified: bool,
    pub metrics: SessionMetrics,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub snippet_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub corpus: String,
    pub mode: Mode,
    pub sessions: Vec<SessionEntry>,
    pub skipped: Vec<Skip>,
    /// Over sessions with ground truth.
    pub corpus_metrics: CorpusMetrics,
    pub confusion: Option<ConfusionMatrix>,
    /// Per snippet, credited exceptions absent from its ground truth.
    pub recommendations: BTreeMap<String, Vec<String>>,
    /// Mean tests-to-next-unique-error per position.
    pub mean_gaps: Vec<f64>,
    pub fingerprint: Option<Fingerprint>,
}

impl BatchReport {
    /// Aggregates session reports; the same function serves runs and
    /// recomputation from stored reports.
    pub fn from_sessions(
        corpus: impl Into<String>,
        mode: Mode,
        sessions: &[SessionReport],
        skipped: Vec<Skip>,
        fingerprint: Option<Fingerprint>,
    ) -> Self {
        let found: Vec<(BTreeSet<String>, Option<&BTreeSet<String>>)> = sessions
            .iter()
            .map(|r| (finding_names(r), r.ground_truth_errors.as_ref()))
            .collect();
        let corpus_metrics = compute_prf(
            found
                .iter()
                .filter_map(|(detected, truth)| truth.map(|t| (detected, t))),
        );
        let confusion = (mode == Mode::So).then(|| {
            compute_confusion(
                found
                    .iter()
                    .filter_map(|(detected, truth)| truth.map(|t| so_label(detected, t))),
            )
        });
        let recommendations = sessions
            .iter()
            .zip(&found)
            .filter_map(|(r, (detected, truth))| {
                let truth = (*truth)?;
                let extra: Vec<String> = detected.difference(truth).cloned().collect();
                (!extra.is_empty()).then(|| (r.snippet_id.clone(), extra))
            })
            .collect();
        let gaps: Vec<Vec<u32>> = sessions
            .iter()
            .map(|r| r.metrics.tests_to_next_error.clone())
            .collect();
        Self {
            corpus: corpus.into(),
            mode,
            sessions: sessions
                .iter()
                .map(|r| SessionEntry {
                    snippet_id: r.snippet_id.clone(),
                    status: r.status,
                    verified: r.verification.is_verified(),
                    metrics: r.metrics.clone(),
                })
                .collect(),
            skipped,
            corpus_metrics,
            confusion,
            recommendations,
            mean_gaps: average_gaps_by_position(&gaps),
            fingerprint,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|source| ReportError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "corpus {} ({} sessions, {} skipped)", self.corpus, self.sessions.len(), self.skipped.len());
        let _ = writeln!(out, "{:<24} {:>10} {:>9} {:>9} {:>8} {:>5} {:>9}", "snippet", "status", "generated", "effective", "etr", "bdr", "coverage");
        for s in &self.sessions {
            let m = &s.metrics;
            let _ = writeln!(
                out,
                "{:<24} {:>10} {:>9} {:>9} {:>8} {:>5} {:>9}",
                s.snippet_id,
                format!("{:?}", s.status),
                m.generated,
                m.effective,
                format_percent(m.etr),
                m.bdr,
                format_percent(Some(m.final_percent)),
            );
        }
        let c = &self.corpus_metrics;
        let ratio = |v: Option<f64>| v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
        let _ = writeln!(
            out,
            "precision {} recall {} f1 {} (micro, tp={} fp={} fn={})",
            ratio(c.precision),
            ratio(c.recall),
            ratio(c.f1),
            c.tp,
            c.fp,
            c.fn_
        );
        if let Some(m) = &self.confusion {
            let _ = writeln!(
                out,
                "confusion tp={} fn={} fp={} tn={} accuracy {} tp rate {}",
                m.tp,
                m.fn_,
                m.fp,
                m.tn,
                format_percent(m.accuracy),
                format_percent(m.tp_rate())
            );
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub concurrency: usize,
    pub mode: Mode,
    /// Session reports go to `<out_dir>/sessions/` as they finish and the
    /// batch report to `<out_dir>/batch.json`.
    pub out_dir: Option<PathBuf>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            concurrency: std::thread::available_parallelism().map_or(1, |n| n.get()),
            mode: Mode::Detect,
            out_dir: None,
        }
    }
}

pub struct BatchOutcome {
    pub report: BatchReport,
    pub sessions: Vec<SessionReport>,
}

/// Runs one session per snippet (all of `corpus`, or the listed ids) with at
/// most `options.concurrency` sessions in flight.
pub fn run_batch(
    corpus: &Corpus,
    only: Option<&[String]>,
    config: &SessionConfig,
    agents: &Agents,
    templates: &PromptTemplates,
    verifier: Option<&Verifier>,
    options: &BatchOptions,
) -> Result<BatchOutcome, crate::Error> {
    let selected: Vec<&CodeSnippet> = match only {
        Some(ids) => ids
            .iter()
            .map(|id| {
                corpus
                    .get(id)
                    .ok_or_else(|| crate::corpus::CorpusError::UnknownSnippet(id.clone()))
            })
            .collect::<Result<_, _>>()?,
        None => corpus.snippets.iter().collect(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.concurrency.max(1))
        .build()
        .map_err(|e| crate::engine::EngineError::InvalidConfig(e.to_string()))?;

    let results: Vec<Result<SessionReport, Skip>> = pool.install(|| {
        selected
            .par_iter()
            .map(|snippet| {
                let mut report = run_session(snippet, config, agents, templates).map_err(|e| Skip {
                    snippet_id: snippet.id.clone(),
                    reason: e.to_string(),
                })?;
                if config.verify_by_execution {
                    if let Some(v) = verifier {
                        verify_session(&mut report, v, corpus.verification_target(snippet));
                    }
                }
                if let Some(dir) = &options.out_dir {
                    report.save(&dir.join(SESSIONS_DIR)).map_err(|e| Skip {
                        snippet_id: snippet.id.clone(),
                        reason: e.to_string(),
                    })?;
                }
                info!(snippet = %snippet.id, "session stored");
                Ok(report)
            })
            .collect()
    });

    let mut sessions = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(s) => sessions.push(s),
            Err(skip) => skipped.push(skip),
        }
    }
    let default_verifier = VerifierConfig::default();
    let fingerprint = Fingerprint::collect(
        agents,
        templates,
        verifier.map_or(&default_verifier, Verifier::config),
    );
    let report = BatchReport::from_sessions(&corpus.name, options.mode, &sessions, skipped, Some(fingerprint));
    if let Some(dir) = &options.out_dir {
        report.save(&dir.join("batch.json"))?;
    }
    Ok(BatchOutcome { report, sessions })
}
