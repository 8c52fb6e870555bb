use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tracing::warn;

use super::{AgentConfig, AgentError, ChatBackend};

const MAX_BACKOFF: Duration = Duration::from_secs(8);

/// Chat-completions client (`POST {base_url}/chat/completions`).
#[derive(Debug, Clone, Default)]
pub struct LiveBackend {
    /// Overrides the key lookup through `AgentConfig::api_key_env`.
    api_key: Option<String>,
}

impl LiveBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_api_key(key: impl Into<String>) -> Self {
        Self {
            api_key: Some(key.into()),
        }
    }

    fn key(&self, config: &AgentConfig) -> Option<String> {
        self.api_key
            .clone()
            .or_else(|| std::env::var(&config.api_key_env).ok())
    }

    fn attempt(&self, config: &AgentConfig, prompt: &str) -> Result<String, String> {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.request_timeout)))
            .http_status_as_error(true)
            .build()
            .new_agent();
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": config.model_name,
            "temperature": config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = self.key(config) {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(&body).map_err(|e| e.to_string())?;
        let value: Value = response
            .body_mut()
            .read_json()
            .map_err(|e| format!("invalid response body: {e}"))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| "response has no choices[0].message.content".to_string())
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, config: &AgentConfig, prompt: &str) -> Result<String, AgentError> {
        if prompt.is_empty() {
            return Err(AgentError::EmptyPrompt);
        }
        let attempts = config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = Duration::from_millis(config.backoff_base_ms)
                    .saturating_mul(1 << (attempt - 1).min(16))
                    .min(MAX_BACKOFF);
                thread::sleep(delay);
            }
            match self.attempt(config, prompt) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    warn!(model = %config.model_name, attempt = attempt + 1, error = %e, "chat request failed");
                    last = e;
                }
            }
        }
        Err(AgentError::AgentUnavailable {
            model: config.model_name.clone(),
            attempts,
            message: last,
        })
    }

    fn kind(&self) -> &'static str {
        "live"
    }
}
