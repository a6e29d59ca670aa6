//! Pluggable LLM invocation behind the [`LlmBackend`] trait.
//!
//! Strategies, selectable by name at runtime:
//! - `live`: OpenAI-compatible chat-completions client, temperature 0,
//!   bounded retries with exponential backoff.
//! - `cassette`: deterministic replay of a recorded request/response log.
//! - `scripted`: rule-based responder used to author cassettes offline.
//!
//! Any backend can be wrapped in a [`RecordingBackend`] to produce a
//! cassette for later replay.

mod cassette;
mod live;
mod scripted;

pub use cassette::{Cassette, CassetteBackend, CassetteEntry, RecordingBackend};
pub use live::{LiveBackend, LiveConfig};
pub use scripted::{ResponseRule, ScriptedBackend};

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Decompose,
    GeneratePddl,
    Decide,
    Grad,
    Aggregate,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Decompose => "decompose",
            Role::GeneratePddl => "generate-pddl",
            Role::Decide => "decide",
            Role::Grad => "grad",
            Role::Aggregate => "aggregate",
        }
    }

    /// Structured-output schema id expected for this role.
    pub fn schema(self) -> &'static str {
        match self {
            Role::Decompose => "decompose.v1",
            Role::GeneratePddl => "pddl.v1",
            Role::Decide => "decide.v1",
            Role::Grad => "grad.v1",
            Role::Aggregate => "aggregate.v1",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One LLM invocation: `LLM(θ, θ̂, Ψ)` plus a role tag and schema id.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct BackendRequest {
    pub role: Role,
    pub prompt: String,
    pub meta: String,
    pub task: String,
    pub schema: String,
}

impl BackendRequest {
    pub fn new(role: Role, prompt: &str, meta: &str, task: &str) -> Self {
        BackendRequest {
            role,
            prompt: prompt.to_string(),
            meta: meta.to_string(),
            task: task.to_string(),
            schema: role.schema().to_string(),
        }
    }

    /// Canonical snapshot: CRLF normalized, trailing whitespace trimmed per
    /// line. Robust to serialization noise without hiding prompt changes.
    pub fn canonical(&self) -> BackendRequest {
        BackendRequest {
            role: self.role,
            prompt: canonicalize(&self.prompt),
            meta: canonicalize(&self.meta),
            task: canonicalize(&self.task),
            schema: self.schema.clone(),
        }
    }

    /// Stable content digest over role tag, canonicalized texts, and schema.
    pub fn digest(&self) -> String {
        let c = self.canonical();
        let mut hasher = Sha256::new();
        for part in [c.role.as_str(), &c.prompt, &c.meta, &c.task, &c.schema] {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part.as_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

pub fn canonicalize(text: &str) -> String {
    let unified = text.replace("\r\n", "\n");
    let mut lines: Vec<&str> = unified.split('\n').map(str::trim_end).collect();
    while lines.last() == Some(&"") {
        lines.pop();
    }
    lines.join("\n")
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("http error: {0}")]
    Http(String),
    #[error("request timed out after {retries} retries")]
    Timeout { retries: u32 },
    #[error("rate limited; retry after {retry_after_secs}s")]
    RateLimited { retry_after_secs: u64 },
    #[error("api error (status {status}): {body}")]
    Api { status: u16, body: String },
    #[error("cassette miss for digest {digest} (role {role}); nearest recorded request: {nearest}")]
    CassetteMiss {
        digest: String,
        role: String,
        nearest: String,
    },
    #[error("no scripted rule matches {role} request for task: {task}")]
    ScriptGap { role: String, task: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed cassette: {0}")]
    MalformedCassette(String),
    #[error("backend config error: {0}")]
    Config(String),
}

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    fn invoke(&self, req: &BackendRequest) -> Result<String, BackendError>;
}

/// Name-keyed registry of backend strategies.
pub struct BackendRegistry {
    factories: std::collections::BTreeMap<
        &'static str,
        Box<dyn Fn(&BackendConfig) -> Result<Box<dyn LlmBackend>, BackendError> + Send + Sync>,
    >,
}

/// Configuration shared by all backend constructors; which fields matter
/// depends on the strategy.
#[derive(Clone, Debug, Default)]
pub struct BackendConfig {
    pub cassette_path: Option<std::path::PathBuf>,
    pub strict_replay: bool,
    pub fallback_response: Option<String>,
    pub live: LiveConfig,
    pub scripted_rules: Vec<ResponseRule>,
}

impl BackendRegistry {
    pub fn with_builtins() -> Self {
        let mut factories: std::collections::BTreeMap<
            &'static str,
            Box<dyn Fn(&BackendConfig) -> Result<Box<dyn LlmBackend>, BackendError> + Send + Sync>,
        > = std::collections::BTreeMap::new();
        factories.insert(
            "live",
            Box::new(|cfg: &BackendConfig| {
                Ok(Box::new(LiveBackend::new(cfg.live.clone())?) as Box<dyn LlmBackend>)
            }),
        );
        factories.insert(
            "cassette",
            Box::new(|cfg: &BackendConfig| {
                let path = cfg.cassette_path.as_ref().ok_or_else(|| {
                    BackendError::Config("cassette backend requires a cassette path".into())
                })?;
                let cassette = Cassette::load(path)?;
                Ok(Box::new(CassetteBackend::new(
                    cassette,
                    cfg.strict_replay,
                    cfg.fallback_response.clone(),
                )) as Box<dyn LlmBackend>)
            }),
        );
        factories.insert(
            "scripted",
            Box::new(|cfg: &BackendConfig| {
                Ok(Box::new(ScriptedBackend::new(cfg.scripted_rules.clone()))
                    as Box<dyn LlmBackend>)
            }),
        );
        BackendRegistry { factories }
    }

    pub fn build(
        &self,
        name: &str,
        cfg: &BackendConfig,
    ) -> Result<Box<dyn LlmBackend>, BackendError> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| BackendError::Config(format!("unknown backend `{name}`")))?;
        factory(cfg)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_deterministic_and_canonical() {
        let a = BackendRequest::new(Role::Decompose, "p\r\nq  ", "m", "t\n\n");
        let b = BackendRequest::new(Role::Decompose, "p\nq", "m", "t");
        assert_eq!(a.digest(), b.digest());
        let c = BackendRequest::new(Role::Decompose, "p\nq!", "m", "t");
        assert_ne!(a.digest(), c.digest());
        // role tag participates in the digest
        let d = BackendRequest::new(Role::Decide, "p\nq", "m", "t");
        assert_ne!(b.digest(), d.digest());
    }

    #[test]
    fn registry_knows_builtins() {
        let reg = BackendRegistry::with_builtins();
        let names: Vec<_> = reg.names().collect();
        assert_eq!(names, vec!["cassette", "live", "scripted"]);
        assert!(reg.build("bogus", &BackendConfig::default()).is_err());
    }
}
