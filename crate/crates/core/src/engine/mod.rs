//! The detection loop.
//!
//! Each iteration picks a phase from the coverage ledger, asks the
//! generator for one input, drops it if an equivalent input was already
//! tried, asks the executor to predict its run, then folds the predicted
//! lines and exceptions into the session state.

mod ledger;
mod testcase;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

pub use ledger::{percent_of, CoverageLedger, LedgerUpdate};
pub use testcase::{normalize_input, parse_tcg_output, TestCase};

use crate::agents::{prompt_digest, AgentError, AgentRole, Agents};
use crate::corpus::CodeSnippet;
use crate::predictor::{extract_exception_names, predict_execution};
use crate::prompts::{annotate_uncovered, Phase, PromptError, PromptTemplates};
use crate::report::{IterationKind, IterationRecord, SessionReport, VerificationStatus};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Engine variants compared in the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// One vanilla prompt listing possible exceptions; no loop.
    SingleAgentBasic,
    /// Generator and executor loop without coverage feedback.
    MultiAgentBasic,
    /// Loop with coverage feedback in a single merged prompt.
    MultiAgentFeedback,
    /// Loop with feedback and phase switching.
    TwoPhaseFeedback,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::SingleAgentBasic,
        Architecture::MultiAgentBasic,
        Architecture::MultiAgentFeedback,
        Architecture::TwoPhaseFeedback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::SingleAgentBasic => "single_agent_basic",
            Architecture::MultiAgentBasic => "multi_agent_basic",
            Architecture::MultiAgentFeedback => "multi_agent_feedback",
            Architecture::TwoPhaseFeedback => "two_phase_feedback",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == key)
            .ok_or_else(|| {
                format!(
                    "unknown architecture `{s}` (expected one of: {})",
                    Self::ALL.map(|a| a.as_str()).join(", ")
                )
            })
    }
}

fn default_budget() -> Option<f64> {
    Some(300.0)
}
fn default_plateau_window() -> u32 {
    3
}
fn default_architecture() -> Architecture {
    Architecture::TwoPhaseFeedback
}
fn default_format_retries() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Wall-clock budget in seconds, measured from the first generator call.
    #[serde(default = "default_budget")]
    pub time_budget: Option<f64>,
    #[serde(default)]
    pub max_iterations: Option<u32>,
    /// Consecutive no-gain iterations that force the error-only phase.
    #[serde(default = "default_plateau_window")]
    pub plateau_window: u32,
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default)]
    pub verify_by_execution: bool,
    /// Extra attempts, with a format reminder, for unparsable agent output.
    #[serde(default = "default_format_retries")]
    pub format_retries: u32,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            time_budget: default_budget(),
            max_iterations: None,
            plateau_window: default_plateau_window(),
            architecture: default_architecture(),
            verify_by_execution: false,
            format_retries: default_format_retries(),
        }
    }
}

impl SessionConfig {
    /// Deterministic configuration: no time budget, fixed iteration count.
    pub fn iterations(max_iterations: u32) -> Self {
        Self {
            time_budget: None,
            max_iterations: Some(max_iterations),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.time_budget.is_none() && self.max_iterations.is_none() {
            return Err(EngineError::InvalidConfig(
                "set a time budget or a maximum iteration count".into(),
            ));
        }
        if let Some(b) = self.time_budget {
            if !(b.is_finite() && b > 0.0) {
                return Err(EngineError::InvalidConfig(format!("time budget {b} must be positive")));
            }
        }
        if self.max_iterations == Some(0) {
            return Err(EngineError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if self.plateau_window == 0 {
            return Err(EngineError::InvalidConfig("plateau_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Completed,
    TimeBudget,
    AgentUnavailable,
}

/// A unique exception and the test that first raised it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedError {
    pub name: String,
    pub first_test_id: u32,
    /// 1-based position of that test among retained tests.
    pub ordinal: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dedup {
    Fresh,
    Duplicate { of: u32 },
}

#[derive(Debug, Clone)]
pub struct SessionState {
    pub stop: bool,
    pub iteration: u32,
    pub phase: Phase,
    /// Retained (fresh) test cases in generation order.
    pub test_cases: Vec<TestCase>,
    pub ledger: CoverageLedger,
    pub detected_errors: Vec<DetectedError>,
    pub plateau_count: u32,
    seen: HashMap<String, u32>,
}

impl SessionState {
    pub fn new(snippet: &CodeSnippet) -> Self {
        Self {
            stop: false,
            iteration: 0,
            phase: Phase::DualObjective,
            test_cases: Vec::new(),
            ledger: CoverageLedger::new(&snippet.id, snippet.coverable_lines.clone()),
            detected_errors: Vec::new(),
            plateau_count: 0,
            seen: HashMap::new(),
        }
    }

    /// Folds a prediction's lines into the ledger and tracks the plateau.
    pub fn apply_coverage(&mut self, predicted: &BTreeSet<u32>) -> LedgerUpdate {
        let update = self.ledger.update(predicted);
        if update.increased() {
            self.plateau_count = 0;
        } else {
            self.plateau_count += 1;
        }
        update
    }

    /// Adds a fresh test case to the retained set. Returns its ordinal.
    pub fn retain(&mut self, test_case: TestCase) -> u32 {
        self.seen.insert(test_case.normalized_form.clone(), test_case.id);
        self.test_cases.push(test_case);
        self.test_cases.len() as u32
    }
}

/// Error-only once everything is covered (permanently, since coverage never
/// shrinks) or while the plateau lasts at least `plateau_window`.
pub fn select_phase(state: &SessionState, config: &SessionConfig) -> Phase {
    if state.ledger.is_full() || state.plateau_count >= config.plateau_window {
        Phase::ErrorFocus
    } else {
        Phase::DualObjective
    }
}

pub fn deduplicate(state: &SessionState, candidate: &TestCase) -> Dedup {
    match state.seen.get(&candidate.normalized_form) {
        Some(&of) => Dedup::Duplicate { of },
        None => Dedup::Fresh,
    }
}

/// First occurrence of each name wins.
pub fn record_error(state: &mut SessionState, errors: &BTreeSet<String>, test_id: u32) {
    let ordinal = state
        .test_cases
        .iter()
        .position(|t| t.id == test_id)
        .map_or(test_id, |i| i as u32 + 1);
    for name in errors {
        if !state.detected_errors.iter().any(|d| &d.name == name) {
            state.detected_errors.push(DetectedError {
                name: name.clone(),
                first_test_id: test_id,
                ordinal,
            });
        }
    }
}

fn generator_prompt(
    snippet: &CodeSnippet,
    state: &SessionState,
    config: &SessionConfig,
    templates: &PromptTemplates,
) -> Result<(Phase, String), EngineError> {
    Ok(match config.architecture {
        Architecture::MultiAgentBasic => (Phase::DualObjective, templates.basic(snippet)),
        Architecture::MultiAgentFeedback => {
            let annotated = annotate_uncovered(snippet, &state.ledger)?;
            (Phase::DualObjective, templates.phase1(&annotated, snippet.language))
        }
        Architecture::TwoPhaseFeedback | Architecture::SingleAgentBasic => {
            match select_phase(state, config) {
                Phase::DualObjective => {
                    let annotated = annotate_uncovered(snippet, &state.ledger)?;
                    (Phase::DualObjective, templates.phase1(&annotated, snippet.language))
                }
                Phase::ErrorFocus => (Phase::ErrorFocus, templates.phase2(snippet)),
            }
        }
    })
}

struct Generated {
    response: String,
    attempts: u32,
    payload: Option<String>,
}

fn generate(
    agents: &Agents,
    templates: &PromptTemplates,
    prompt: &str,
    format_retries: u32,
) -> Result<Generated, AgentError> {
    let mut attempts = 0;
    let mut current = prompt.to_string();
    loop {
        attempts += 1;
        let response = agents.complete(AgentRole::TestCaseGenerator, &current)?;
        let payload = parse_tcg_output(&response);
        if payload.is_some() || attempts > format_retries {
            return Ok(Generated {
                response,
                attempts,
                payload,
            });
        }
        current = templates.with_tcg_reminder(prompt);
    }
}

/// Runs one detection session. Agent failures end the session early with
/// [`SessionStatus::AgentUnavailable`] and keep everything gathered so far.
pub fn run_session(
    snippet: &CodeSnippet,
    config: &SessionConfig,
    agents: &Agents,
    templates: &PromptTemplates,
) -> Result<SessionReport, EngineError> {
    config.validate()?;
    let mut state = SessionState::new(snippet);
    let mut iterations = Vec::new();

    let (status, failure) = if config.architecture == Architecture::SingleAgentBasic {
        single_agent(snippet, agents, templates, &mut state, &mut iterations)?
    } else {
        feedback_loop(snippet, config, agents, templates, &mut state, &mut iterations)?
    };
    state.stop = true;
    info!(
        snippet = %snippet.id,
        iterations = iterations.len(),
        percent = state.ledger.percent,
        errors = state.detected_errors.len(),
        ?status,
        "session finished"
    );

    let mut report = SessionReport {
        snippet_id: snippet.id.clone(),
        language: snippet.language,
        completeness: snippet.completeness,
        ground_truth_errors: snippet.ground_truth_errors.clone(),
        config: config.clone(),
        generator_model: agents.config(AgentRole::TestCaseGenerator).model_name.clone(),
        executor_model: agents.config(AgentRole::PredictiveExecutor).model_name.clone(),
        status,
        failure,
        iterations,
        ledger: state.ledger,
        detected_errors: state.detected_errors,
        verification: VerificationStatus::NotRequested,
        metrics: Default::default(),
    };
    report.refresh_metrics();
    Ok(report)
}

type Outcome = (SessionStatus, Option<String>);

fn single_agent(
    snippet: &CodeSnippet,
    agents: &Agents,
    templates: &PromptTemplates,
    state: &mut SessionState,
    iterations: &mut Vec<IterationRecord>,
) -> Result<Outcome, EngineError> {
    let prompt = templates.vanilla(snippet)?;
    state.iteration = 1;
    let response = match agents.complete(AgentRole::PredictiveExecutor, &prompt) {
        Ok(r) => r,
        Err(e) => return Ok((SessionStatus::AgentUnavailable, Some(e.to_string()))),
    };
    let listed = match response.find("Possible Runtime Exceptions") {
        Some(at) => &response[at + "Possible Runtime Exceptions".len()..],
        None => &response[..],
    };
    let listed = listed.trim_start_matches([' ', '-', ':']);
    let names = extract_exception_names(listed);
    record_error(state, &names, 1);
    iterations.push(IterationRecord {
        iteration: 1,
        phase: Phase::ErrorFocus,
        kind: IterationKind::Vanilla,
        prompt_digest: prompt_digest(AgentRole::PredictiveExecutor, &prompt),
        response,
        attempts: 1,
        test_case: None,
        duplicate_of: None,
        prediction: None,
        dropped_lines: BTreeSet::new(),
        percent: state.ledger.percent,
        verification: None,
        verification_error: None,
    });
    Ok((SessionStatus::Completed, None))
}

fn feedback_loop(
    snippet: &CodeSnippet,
    config: &SessionConfig,
    agents: &Agents,
    templates: &PromptTemplates,
    state: &mut SessionState,
    iterations: &mut Vec<IterationRecord>,
) -> Result<Outcome, EngineError> {
    let budget = config.time_budget.map(Duration::from_secs_f64);
    let started = Instant::now();
    loop {
        let iteration = state.iteration + 1;
        let (phase, prompt) = generator_prompt(snippet, state, config, templates)?;
        state.phase = phase;
        let generated = match generate(agents, templates, &prompt, config.format_retries) {
            Ok(g) => g,
            Err(e) => {
                warn!(snippet = %snippet.id, iteration, error = %e, "generator unavailable");
                return Ok((SessionStatus::AgentUnavailable, Some(e.to_string())));
            }
        };
        state.iteration = iteration;

        let mut record = IterationRecord {
            iteration,
            phase,
            kind: IterationKind::Unparsable,
            prompt_digest: prompt_digest(AgentRole::TestCaseGenerator, &prompt),
            response: generated.response,
            attempts: generated.attempts,
            test_case: None,
            duplicate_of: None,
            prediction: None,
            dropped_lines: BTreeSet::new(),
            percent: state.ledger.percent,
            verification: None,
            verification_error: None,
        };

        if let Some(payload) = generated.payload {
            let test_case = TestCase::new(iteration, payload, phase);
            match deduplicate(state, &test_case) {
                Dedup::Duplicate { of } => {
                    debug!(iteration, of, "duplicate input discarded");
                    record.kind = IterationKind::Duplicate;
                    record.duplicate_of = Some(of);
                    record.test_case = Some(test_case);
                }
                Dedup::Fresh => {
                    let prediction = match predict_execution(
                        agents,
                        templates,
                        snippet,
                        &test_case,
                        config.format_retries,
                    ) {
                        Ok(p) => p,
                        Err(e) => {
                            warn!(snippet = %snippet.id, iteration, error = %e, "executor unavailable");
                            return Ok((SessionStatus::AgentUnavailable, Some(e.to_string())));
                        }
                    };
                    state.retain(test_case.clone());
                    let update = state.apply_coverage(&prediction.predicted_covered);
                    if !update.dropped.is_empty() {
                        warn!(iteration, dropped = ?update.dropped, "predicted lines outside the coverable set");
                    }
                    record_error(state, &prediction.predicted_errors, iteration);
                    record.kind = IterationKind::Fresh;
                    record.test_case = Some(test_case);
                    record.dropped_lines = update.dropped;
                    record.percent = state.ledger.percent;
                    record.prediction = Some(prediction);
                }
            }
        } else {
            debug!(iteration, "generator output unparsable, iteration skipped");
        }
        iterations.push(record);

        if config.max_iterations.is_some_and(|max| iteration >= max) {
            return Ok((SessionStatus::Completed, None));
        }
        if budget.is_some_and(|b| started.elapsed() >= b) {
            return Ok((SessionStatus::TimeBudget, None));
        }
    }
}
