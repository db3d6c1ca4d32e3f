use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{BackendConfig, BackendError, ChatBackend, ChatMessage, CompletionRequest};

/// API key held in memory only; prints as `***`.
#[derive(Clone)]
struct Secret(String);

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("***")
    }
}

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ResponseBody {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

enum Attempt {
    Retryable(String),
    Fatal(BackendError),
}

/// Chat-completions client with timeout and exponential backoff.
pub struct RemoteBackend {
    config: BackendConfig,
    api_key: Option<Secret>,
    client: reqwest::blocking::Client,
    calls: AtomicU64,
    attempts: AtomicU64,
}

impl fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key)
            .finish()
    }
}

impl RemoteBackend {
    /// Reads the API key from the configured environment variable, if set.
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        if config.endpoint_url.trim().is_empty() {
            return Err(BackendError::Config("remote backend requires endpoint_url".into()));
        }
        let api_key = std::env::var(&config.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .map(Secret);
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(RemoteBackend {
            config,
            api_key,
            client,
            calls: AtomicU64::new(0),
            attempts: AtomicU64::new(0),
        })
    }

    /// Total HTTP attempts made, across all calls.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    fn attempt(&self, request: &CompletionRequest<'_>) -> Result<String, Attempt> {
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let body = RequestBody {
            model: &self.config.model_name,
            messages: request.messages,
            temperature: request.params.temperature,
            max_tokens: request.params.max_tokens,
        };
        let mut http = self.client.post(&self.config.endpoint_url).json(&body);
        if let Some(key) = &self.api_key {
            http = http.bearer_auth(&key.0);
        }
        let response = http.send().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retryable("timed out".into())
            } else if e.is_connect() || e.is_request() {
                Attempt::Retryable(format!("connection failed: {}", e.without_url()))
            } else {
                Attempt::Fatal(BackendError::Malformed(e.without_url().to_string()))
            }
        })?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Attempt::Retryable(format!("server error {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Rejected {
                status: status.as_u16(),
            }));
        }
        let text = response.text().map_err(|e| {
            if e.is_timeout() {
                Attempt::Retryable("timed out reading body".into())
            } else {
                Attempt::Fatal(BackendError::Malformed(e.without_url().to_string()))
            }
        })?;
        let parsed: ResponseBody =
            serde_json::from_str(&text).map_err(|e| Attempt::Fatal(BackendError::Malformed(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(BackendError::Malformed("no choices in response".into())))
    }
}

impl ChatBackend for RemoteBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let max_attempts = self.config.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            match self.attempt(request) {
                Ok(text) => {
                    debug!(attempt, "completion succeeded");
                    return Ok(text);
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(reason)) => {
                    warn!(attempt, max_attempts, %reason, "completion attempt failed");
                    last_error = reason;
                    if attempt < max_attempts {
                        let backoff = self.config.backoff_base_ms << (attempt - 1);
                        thread::sleep(Duration::from_millis(backoff));
                    }
                }
            }
        }
        Err(BackendError::Unavailable {
            attempts: max_attempts,
            last_error,
        })
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}
