//! Execution-free runtime error detection.
//!
//! Two model agents cooperate in a coverage-guided loop: a test-case
//! generator proposes standard-input payloads for a program, and a
//! predictive executor reasons about which lines each payload would reach
//! and which exceptions it would raise. Coverage predicted so far is fed
//! back into the generator's prompt until every coverable line has been
//! reached (or coverage stalls), after which generation switches to purely
//! error-triggering prompts.
//!
//! The crate is organised around that loop:
//!
//! - [`corpus`]: programs under test and their ground truth.
//! - [`agents`]: chat backends (live, replay, scripted) and transcripts.
//! - [`prompts`]: prompt families and coverage annotation.
//! - [`engine`]: the detection loop, ledger, dedup and ablation modes.
//! - [`predictor`]: predictive-execution calls and response parsing.
//! - [`verifier`]: ground-truth execution of generated inputs.
//! - [`metrics`]: ETR/BDR, precision/recall/F1, gaps, plateaus, confusion.
//! - [`report`]: session/batch reports and batch orchestration.
//! - [`config`]: TOML run configuration.

pub mod agents;
pub mod config;
pub mod corpus;
pub mod engine;
pub mod metrics;
pub mod predictor;
pub mod prompts;
pub mod report;
pub mod verifier;

mod error;

pub use config::RunConfig;
pub use agents::{AgentConfig, AgentError, AgentRole, Agents, ChatBackend, Transcript};
pub use corpus::{CodeSnippet, Completeness, Corpus, CorpusError, Language};
pub use engine::{
    run_session, Architecture, CoverageLedger, SessionConfig, SessionState, SessionStatus, TestCase,
};
pub use error::{Error, Result};
pub use metrics::{ConfusionMatrix, CorpusMetrics, SessionMetrics};
pub use predictor::{ExecutionPrediction, ParseStatus};
pub use prompts::{Phase, PromptTemplates};
pub use report::{BatchReport, SessionReport};
pub use verifier::{ActualOutcome, ExitKind, PredictionDiff, Verifier, VerifierConfig};
