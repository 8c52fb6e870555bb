//! Chat agents.
//!
//! Every model call goes through [`ChatBackend::complete`]. Three backends
//! exist: [`LiveBackend`] talks to a chat-completions endpoint,
//! [`ReplayBackend`] serves responses from a recorded [`Transcript`], and
//! [`ScriptedBackend`] pops canned responses per role. [`RecordingBackend`]
//! wraps any backend and captures a transcript as it goes.

mod live;
mod transcript;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use live::LiveBackend;
pub use transcript::{Transcript, TranscriptEntry};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    #[error("agent `{model}` unavailable after {attempts} attempt(s): {message}")]
    AgentUnavailable {
        model: String,
        attempts: u32,
        message: String,
    },
    #[error("no recorded response for {role} prompt digest {digest}")]
    TranscriptMiss { role: AgentRole, digest: String },
    #[error("scripted responses exhausted for {0}")]
    ScriptExhausted(AgentRole),
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    TestCaseGenerator,
    PredictiveExecutor,
}

impl AgentRole {
    pub const ALL: [AgentRole; 2] = [AgentRole::TestCaseGenerator, AgentRole::PredictiveExecutor];

    /// Short tag mixed into prompt digests.
    pub fn tag(self) -> &'static str {
        match self {
            AgentRole::TestCaseGenerator => "tcg",
            AgentRole::PredictiveExecutor => "pe",
        }
    }

    fn index(self) -> usize {
        match self {
            AgentRole::TestCaseGenerator => 0,
            AgentRole::PredictiveExecutor => 1,
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::TestCaseGenerator => "test-case generator",
            AgentRole::PredictiveExecutor => "predictive executor",
        })
    }
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_retries() -> u32 {
    2
}
fn default_timeout() -> f64 {
    120.0
}
fn default_base_url() -> String {
    "https://api.openai.com/v1".into()
}
fn default_api_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_backoff_ms() -> u64 {
    500
}

/// Per-role model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub role: AgentRole,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Seconds.
    #[serde(default = "default_timeout")]
    pub request_timeout: f64,
    #[serde(default = "default_base_url")]
    pub base_url: String,
    /// Name of the environment variable holding the provider key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// First retry delay; doubles per attempt, capped at 8 s.
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
}

impl AgentConfig {
    pub fn new(role: AgentRole, model_name: impl Into<String>) -> Self {
        Self {
            role,
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            request_timeout: default_timeout(),
            base_url: default_base_url(),
            api_key_env: default_api_key_env(),
            backoff_base_ms: default_backoff_ms(),
        }
    }

    /// Cheap model for generation, stronger model for prediction.
    pub fn default_for(role: AgentRole) -> Self {
        match role {
            AgentRole::TestCaseGenerator => Self::new(role, "gpt-3.5-turbo"),
            AgentRole::PredictiveExecutor => Self::new(role, "gpt-4o"),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(AgentError::InvalidConfig(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        if self.model_name.trim().is_empty() {
            return Err(AgentError::InvalidConfig("empty model name".into()));
        }
        if self.request_timeout.is_nan() || self.request_timeout <= 0.0 {
            return Err(AgentError::InvalidConfig("request_timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Stable digest of a role-tagged prompt (hex SHA-256).
pub fn prompt_digest(role: AgentRole, prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(role.tag().as_bytes());
    hasher.update([0u8]);
    hasher.update(prompt.as_bytes());
    hex::encode(hasher.finalize())
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, config: &AgentConfig, prompt: &str) -> Result<String, AgentError>;

    /// `live`, `replay`, `scripted`, ...
    fn kind(&self) -> &'static str;
}

/// Serves responses from a transcript by prompt digest.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    transcript: Transcript,
}

impl ReplayBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript }
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Ok(Self::new(Transcript::load(path)?))
    }
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, config: &AgentConfig, prompt: &str) -> Result<String, AgentError> {
        if prompt.is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        let digest = prompt_digest(config.role, prompt);
        match self.transcript.get(&digest) {
            Some(entry) if entry.prompt == prompt && entry.role == config.role => {
                Ok(entry.response.clone())
            }
            _ => Err(AgentError::TranscriptMiss {
                role: config.role,
                digest,
            }),
        }
    }

    fn kind(&self) -> &'static str {
        "replay"
    }
}

/// Canned responses, one queue per role.
#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub test_case_generator: Vec<String>,
    #[serde(default)]
    pub predictive_executor: Vec<String>,
}

impl Script {
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Transcript {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| AgentError::Transcript {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queues: Mutex<HashMap<AgentRole, VecDeque<String>>>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: Script) -> Self {
        Self::new()
            .with_queue(AgentRole::TestCaseGenerator, script.test_case_generator)
            .with_queue(AgentRole::PredictiveExecutor, script.predictive_executor)
    }

    pub fn with_queue<I, S>(self, role: AgentRole, responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.queues
            .lock()
            .expect("script queue poisoned")
            .entry(role)
            .or_default()
            .extend(responses.into_iter().map(Into::into));
        self
    }

    pub fn remaining(&self, role: AgentRole) -> usize {
        self.queues
            .lock()
            .expect("script queue poisoned")
            .get(&role)
            .map_or(0, VecDeque::len)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, config: &AgentConfig, prompt: &str) -> Result<String, AgentError> {
        if prompt.is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        self.queues
            .lock()
            .expect("script queue poisoned")
            .get_mut(&config.role)
            .and_then(VecDeque::pop_front)
            .ok_or(AgentError::ScriptExhausted(config.role))
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}

/// Wraps a backend and records every distinct prompt it answers. A prompt
/// seen before is answered from the recording so replays stay consistent.
pub struct RecordingBackend {
    inner: Arc<dyn ChatBackend>,
    transcript: Mutex<Transcript>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn ChatBackend>) -> Self {
        Self {
            inner,
            transcript: Mutex::new(Transcript::default()),
        }
    }

    pub fn transcript(&self) -> Transcript {
        self.transcript.lock().expect("transcript poisoned").clone()
    }
}

impl ChatBackend for RecordingBackend {
    fn complete(&self, config: &AgentConfig, prompt: &str) -> Result<String, AgentError> {
        if prompt.is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        let digest = prompt_digest(config.role, prompt);
        if let Some(entry) = self.transcript.lock().expect("transcript poisoned").get(&digest) {
            return Ok(entry.response.clone());
        }
        let response = self.inner.complete(config, prompt)?;
        let recorded_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .ok();
        let mut transcript = self.transcript.lock().expect("transcript poisoned");
        // a concurrent caller may have recorded the same prompt first
        if let Some(entry) = transcript.get(&digest) {
            return Ok(entry.response.clone());
        }
        transcript.insert(TranscriptEntry {
            digest,
            role: config.role,
            prompt: prompt.to_string(),
            response: response.clone(),
            model: Some(config.model_name.clone()),
            recorded_unix,
        });
        Ok(response)
    }

    fn kind(&self) -> &'static str {
        "recording"
    }
}

/// Sends every prompt through `backend` and returns the captured transcript.
pub fn record_transcript(
    backend: Arc<dyn ChatBackend>,
    config: &AgentConfig,
    prompts: &[String],
) -> Result<Transcript, AgentError> {
    let recorder = RecordingBackend::new(backend);
    for prompt in prompts {
        recorder.complete(config, prompt)?;
    }
    Ok(recorder.transcript())
}

/// The pair of configured agents sharing one backend, with call counters.
pub struct Agents {
    backend: Arc<dyn ChatBackend>,
    generator: AgentConfig,
    executor: AgentConfig,
    calls: [AtomicU64; 2],
}

impl Agents {
    pub fn new(
        backend: Arc<dyn ChatBackend>,
        generator: AgentConfig,
        executor: AgentConfig,
    ) -> Result<Self, AgentError> {
        if generator.role != AgentRole::TestCaseGenerator
            || executor.role != AgentRole::PredictiveExecutor
        {
            return Err(AgentError::InvalidConfig("agent roles swapped".into()));
        }
        generator.validate()?;
        executor.validate()?;
        Ok(Self {
            backend,
            generator,
            executor,
            calls: [AtomicU64::new(0), AtomicU64::new(0)],
        })
    }

    /// Default per-role models over `backend`.
    pub fn with_backend(backend: Arc<dyn ChatBackend>) -> Self {
        Self::new(
            backend,
            AgentConfig::default_for(AgentRole::TestCaseGenerator),
            AgentConfig::default_for(AgentRole::PredictiveExecutor),
        )
        .expect("default agent configs are valid")
    }

    pub fn config(&self, role: AgentRole) -> &AgentConfig {
        match role {
            AgentRole::TestCaseGenerator => &self.generator,
            AgentRole::PredictiveExecutor => &self.executor,
        }
    }

    pub fn backend_kind(&self) -> &'static str {
        self.backend.kind()
    }

    pub fn complete(&self, role: AgentRole, prompt: &str) -> Result<String, AgentError> {
        if prompt.is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        self.calls[role.index()].fetch_add(1, Ordering::Relaxed);
        self.backend.complete(self.config(role), prompt)
    }

    pub fn calls(&self, role: AgentRole) -> u64 {
        self.calls[role.index()].load(Ordering::Relaxed)
    }
}

impl fmt::Debug for Agents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Agents")
            .field("backend", &self.backend.kind())
            .field("generator", &self.generator.model_name)
            .field("executor", &self.executor.model_name)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pe() -> AgentConfig {
        AgentConfig::default_for(AgentRole::PredictiveExecutor)
    }

    fn tcg() -> AgentConfig {
        AgentConfig::default_for(AgentRole::TestCaseGenerator)
    }

    #[test]
    fn defaults() {
        let c = tcg();
        assert_eq!(c.temperature, 0.0);
        assert_eq!(c.max_retries, 2);
        assert_ne!(c.model_name, pe().model_name);
        let mut bad = c.clone();
        bad.temperature = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn scripted_pops_in_order() {
        let backend = ScriptedBackend::new().with_queue(
            AgentRole::TestCaseGenerator,
            ["Test Case Input:\n5 6\n1 2 3 4 5", "second"],
        );
        assert_eq!(
            backend.complete(&tcg(), "p").unwrap(),
            "Test Case Input:\n5 6\n1 2 3 4 5"
        );
        assert_eq!(backend.remaining(AgentRole::TestCaseGenerator), 1);
        assert_eq!(backend.complete(&tcg(), "p").unwrap(), "second");
        assert!(matches!(
            backend.complete(&tcg(), "p"),
            Err(AgentError::ScriptExhausted(AgentRole::TestCaseGenerator))
        ));
        // the other role has its own queue
        assert!(matches!(
            backend.complete(&pe(), "p"),
            Err(AgentError::ScriptExhausted(AgentRole::PredictiveExecutor))
        ));
    }

    #[test]
    fn empty_prompt_rejected() {
        let backend = ScriptedBackend::new().with_queue(AgentRole::TestCaseGenerator, ["x"]);
        assert!(matches!(backend.complete(&tcg(), ""), Err(AgentError::EmptyPrompt)));
        assert_eq!(backend.remaining(AgentRole::TestCaseGenerator), 1);
    }

    #[test]
    fn digest_depends_on_role_and_text() {
        let a = prompt_digest(AgentRole::TestCaseGenerator, "hello");
        assert_eq!(a, prompt_digest(AgentRole::TestCaseGenerator, "hello"));
        assert_ne!(a, prompt_digest(AgentRole::PredictiveExecutor, "hello"));
        assert_ne!(a, prompt_digest(AgentRole::TestCaseGenerator, "hello "));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn record_empty_and_dedup() {
        let inner: Arc<dyn ChatBackend> = Arc::new(
            ScriptedBackend::new().with_queue(AgentRole::PredictiveExecutor, ["one", "two"]),
        );
        let empty = record_transcript(inner.clone(), &pe(), &[]).unwrap();
        assert!(empty.is_empty());
        let t = record_transcript(inner, &pe(), &["same".into(), "same".into()]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.entries().next().unwrap().response, "one");
    }

    #[test]
    fn replay_is_stable_and_misses_name_digest() {
        let inner: Arc<dyn ChatBackend> =
            Arc::new(ScriptedBackend::new().with_queue(AgentRole::PredictiveExecutor, ["resp"]));
        let t = record_transcript(inner, &pe(), &["q".into()]).unwrap();
        let replay = ReplayBackend::new(t);
        for _ in 0..3 {
            assert_eq!(replay.complete(&pe(), "q").unwrap(), "resp");
        }
        match replay.complete(&pe(), "other") {
            Err(AgentError::TranscriptMiss { digest, .. }) => {
                assert_eq!(digest, prompt_digest(AgentRole::PredictiveExecutor, "other"))
            }
            other => panic!("unexpected {other:?}"),
        }
        // same text under the other role is a different prompt
        assert!(replay.complete(&tcg(), "q").is_err());
    }

    #[test]
    fn agents_count_calls() {
        let backend = Arc::new(
            ScriptedBackend::new()
                .with_queue(AgentRole::TestCaseGenerator, ["a", "b"])
                .with_queue(AgentRole::PredictiveExecutor, ["c"]),
        );
        let agents = Agents::with_backend(backend);
        agents.complete(AgentRole::TestCaseGenerator, "x").unwrap();
        agents.complete(AgentRole::TestCaseGenerator, "x").unwrap();
        agents.complete(AgentRole::PredictiveExecutor, "y").unwrap();
        assert_eq!(agents.calls(AgentRole::TestCaseGenerator), 2);
        assert_eq!(agents.calls(AgentRole::PredictiveExecutor), 1);
    }

    #[test]
    fn swapped_roles_rejected() {
        let backend: Arc<dyn ChatBackend> = Arc::new(ScriptedBackend::new());
        assert!(Agents::new(backend, pe(), tcg()).is_err());
    }
}
