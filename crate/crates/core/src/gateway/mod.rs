//! Chat-completion backends.
//!
//! [`ChatBackend`] is the one seam between the engine and a language model.
//! [`RemoteBackend`] talks to any chat-completions compatible HTTP endpoint;
//! [`ScriptedBackend`] replays canned responses keyed by turn index or prompt
//! digest, for tests and golden replays.

mod remote;
mod scripted;
pub mod testing;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use remote::RemoteBackend;
pub use scripted::{ScriptEntry, ScriptKey, ScriptedBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

/// One completion call.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub messages: &'a [ChatMessage],
    pub params: CompletionParams,
    /// Dialogue turn this call belongs to (1-based user turn).
    pub turn_index: u64,
}

impl<'a> CompletionRequest<'a> {
    pub fn new(messages: &'a [ChatMessage], turn_index: u64) -> Self {
        CompletionRequest {
            messages,
            params: CompletionParams::default(),
            turn_index,
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        match self.messages.first() {
            None => Err(BackendError::InvalidRequest("no messages".into())),
            Some(m) if m.role != Role::System => Err(BackendError::InvalidRequest(
                "first message must be the system prompt".into(),
            )),
            Some(_) => Ok(()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {last_error}")]
    Unavailable { attempts: u32, last_error: String },
    #[error("backend rejected the request with status {status}")]
    Rejected { status: u16 },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("script exhausted: no entry for {0}")]
    ScriptExhausted(ScriptKey),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// A chat-completion backend. Implementations must be shareable across
/// sessions; per-session ordering is the caller's concern.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError>;

    /// Number of `complete` calls served so far, when the backend counts them.
    fn calls(&self) -> u64 {
        0
    }
}

impl<T: ChatBackend + ?Sized> ChatBackend for Arc<T> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        (**self).complete(request)
    }

    fn calls(&self) -> u64 {
        (**self).calls()
    }
}

/// Hex SHA-256 over the serialized message list.
pub fn prompt_digest(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    #[default]
    Scripted,
}

/// Backend selection and retry policy.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself
    /// never appears in configuration.
    pub api_key_env: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub script_path: String,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint_url: String::new(),
            model_name: "stagewise-chat".to_string(),
            api_key_env: "STAGEWISE_API_KEY".to_string(),
            timeout_ms: 30_000,
            max_retries: 2,
            backoff_base_ms: 500,
            script_path: String::new(),
        }
    }
}

impl fmt::Debug for BackendConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BackendConfig")
            .field("kind", &self.kind)
            .field("endpoint_url", &self.endpoint_url)
            .field("model_name", &self.model_name)
            .field("api_key_env", &self.api_key_env)
            .field("timeout_ms", &self.timeout_ms)
            .field("max_retries", &self.max_retries)
            .field("script_path", &self.script_path)
            .finish()
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        match self.kind {
            BackendKind::Remote if self.endpoint_url.trim().is_empty() => {
                Err(BackendError::Config("remote backend requires endpoint_url".into()))
            }
            BackendKind::Scripted if self.script_path.trim().is_empty() => {
                Err(BackendError::Config("scripted backend requires script_path".into()))
            }
            _ if self.timeout_ms == 0 => Err(BackendError::Config("timeout_ms must be positive".into())),
            _ => Ok(()),
        }
    }

    /// Sum of all backoff sleeps when every retry is used.
    pub fn total_backoff_ms(&self) -> u64 {
        (0..self.max_retries).map(|i| self.backoff_base_ms << i).sum()
    }

    /// Upper bound on the wall time of one `complete` call.
    pub fn latency_bound_ms(&self) -> u64 {
        (u64::from(self.max_retries) + 1) * self.timeout_ms + self.total_backoff_ms()
    }

    /// Builds the configured backend.
    pub fn build(&self) -> Result<Arc<dyn ChatBackend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Remote => Arc::new(RemoteBackend::new(self.clone())?),
            BackendKind::Scripted => {
                Arc::new(ScriptedBackend::load(&self.script_path).map_err(|e| BackendError::Config(e.to_string()))?)
            }
        })
    }
}
