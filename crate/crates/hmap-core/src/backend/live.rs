//! OpenAI-compatible chat-completions client.
//!
//! Endpoint, model, and key come from the config file with environment
//! variable overrides (`HMAP_ENDPOINT`, `HMAP_MODEL`, `HMAP_API_KEY`; env
//! wins). Temperature is fixed to 0; retries use exponential backoff.

use super::{BackendError, BackendRequest, LlmBackend};
use serde::Deserialize;
use std::time::Duration;

#[derive(Clone, Debug)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

impl LiveConfig {
    /// Apply environment overrides; precedence: env > config file values.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(v) = std::env::var("HMAP_ENDPOINT") {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var("HMAP_MODEL") {
            self.model = v;
        }
        if let Ok(v) = std::env::var("HMAP_API_KEY") {
            self.api_key = Some(v);
        }
        self
    }
}

pub struct LiveBackend {
    cfg: LiveConfig,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: String,
}

impl LiveBackend {
    pub fn new(cfg: LiveConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        Ok(LiveBackend { cfg, client })
    }

    fn attempt(&self, req: &BackendRequest) -> Result<String, BackendError> {
        let system = if req.meta.is_empty() {
            req.prompt.clone()
        } else {
            format!("{}\n\nShared guidance:\n{}", req.prompt, req.meta)
        };
        let body = serde_json::json!({
            "model": self.cfg.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": req.task},
            ],
        });
        let url = format!("{}/chat/completions", self.cfg.endpoint.trim_end_matches('/'));
        let mut http = self.client.post(&url).json(&body);
        if let Some(key) = &self.cfg.api_key {
            http = http.bearer_auth(key);
        }
        let response = http.send().map_err(|e| BackendError::Http(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 {
            let retry_after_secs = response
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse().ok())
                .unwrap_or(1);
            return Err(BackendError::RateLimited { retry_after_secs });
        }
        if !status.is_success() {
            return Err(BackendError::Api {
                status: status.as_u16(),
                body: response.text().unwrap_or_default(),
            });
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| BackendError::Http(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Http("response contained no choices".into()))
    }
}

impl LlmBackend for LiveBackend {
    fn name(&self) -> &str {
        "live"
    }

    fn invoke(&self, req: &BackendRequest) -> Result<String, BackendError> {
        let mut last = None;
        for attempt in 0..=self.cfg.max_retries {
            match self.attempt(req) {
                Ok(text) => return Ok(text),
                Err(e @ BackendError::Api { status, .. }) if status < 500 => return Err(e),
                Err(e) => {
                    let backoff = match &e {
                        BackendError::RateLimited { retry_after_secs } => {
                            Duration::from_secs(*retry_after_secs)
                        }
                        _ => self.cfg.backoff_base * 2u32.saturating_pow(attempt),
                    };
                    last = Some(e);
                    if attempt < self.cfg.max_retries {
                        std::thread::sleep(backoff);
                    }
                }
            }
        }
        Err(last.unwrap_or(BackendError::Timeout {
            retries: self.cfg.max_retries,
        }))
    }
}
