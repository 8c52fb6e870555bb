//! TOML run configuration. Every field is optional; CLI flags override.
//!
//! ```toml
//! [session]
//! time_budget = 300.0
//! plateau_window = 3
//! architecture = "two_phase_feedback"
//!
//! [generator]
//! model_name = "gpt-3.5-turbo"
//!
//! [executor]
//! model_name = "gpt-4o"
//!
//! [verifier]
//! timeout = 10.0
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentConfig, AgentRole};
use crate::engine::SessionConfig;
use crate::report::{Mode, ReportError};
use crate::verifier::VerifierConfig;

/// Agent settings that replace the per-role defaults when present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOverrides {
    pub model_name: Option<String>,
    pub temperature: Option<f64>,
    pub max_retries: Option<u32>,
    pub request_timeout: Option<f64>,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub backoff_base_ms: Option<u64>,
}

impl AgentOverrides {
    pub fn apply(&self, mut config: AgentConfig) -> AgentConfig {
        if let Some(v) = &self.model_name {
            config.model_name = v.clone();
        }
        if let Some(v) = self.temperature {
            config.temperature = v;
        }
        if let Some(v) = self.max_retries {
            config.max_retries = v;
        }
        if let Some(v) = self.request_timeout {
            config.request_timeout = v;
        }
        if let Some(v) = &self.base_url {
            config.base_url = v.clone();
        }
        if let Some(v) = &self.api_key_env {
            config.api_key_env = v.clone();
        }
        if let Some(v) = self.backoff_base_ms {
            config.backoff_base_ms = v;
        }
        config
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSettings {
    pub concurrency: Option<usize>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub session: SessionConfig,
    #[serde(default)]
    pub generator: AgentOverrides,
    #[serde(default)]
    pub executor: AgentOverrides,
    #[serde(default)]
    pub verifier: VerifierConfig,
    #[serde(default)]
    pub batch: BatchSettings,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ReportError> {
        toml::from_str(text).map_err(|e| ReportError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    pub fn agent_config(&self, role: AgentRole) -> AgentConfig {
        let overrides = match role {
            AgentRole::TestCaseGenerator => &self.generator,
            AgentRole::PredictiveExecutor => &self.executor,
        };
        overrides.apply(AgentConfig::default_for(role))
    }
}
