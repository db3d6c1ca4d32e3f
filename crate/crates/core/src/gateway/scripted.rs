use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{prompt_digest, BackendError, ChatBackend, CompletionRequest};

/// How a script entry is matched.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScriptKey {
    Turn(u64),
    Digest(String),
}

impl fmt::Display for ScriptKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptKey::Turn(t) => write!(f, "turn {t}"),
            ScriptKey::Digest(d) => write!(f, "digest {d}"),
        }
    }
}

/// One line of a script file: `{"match": {"turn": 3}, "response_text": "..."}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(rename = "match")]
    pub key: ScriptKey,
    pub response_text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ScriptError {
    #[error("reading script: {0}")]
    Io(#[from] std::io::Error),
    #[error("script line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate script entry for {0}")]
    Duplicate(ScriptKey),
}

/// Deterministic backend replaying canned responses.
///
/// Lookup is by the request's turn index first, then by prompt digest.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    entries: HashMap<ScriptKey, String>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(entries: impl IntoIterator<Item = ScriptEntry>) -> Result<Self, ScriptError> {
        let mut map = HashMap::new();
        for e in entries {
            if map.insert(e.key.clone(), e.response_text).is_some() {
                return Err(ScriptError::Duplicate(e.key));
            }
        }
        Ok(ScriptedBackend {
            entries: map,
            calls: AtomicU64::new(0),
        })
    }

    /// Convenience constructor: responses for turns 1, 2, 3, ...
    pub fn from_turns<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        let entries = responses.into_iter().enumerate().map(|(i, r)| ScriptEntry {
            key: ScriptKey::Turn(i as u64 + 1),
            response_text: r.into(),
        });
        Self::new(entries).expect("turn keys are distinct")
    }

    pub fn parse(src: &str) -> Result<Self, ScriptError> {
        let mut entries = Vec::new();
        for (i, line) in src.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ScriptEntry =
                serde_json::from_str(line).map_err(|source| ScriptError::Parse { line: i + 1, source })?;
            entries.push(entry);
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let turn = ScriptKey::Turn(request.turn_index);
        if let Some(text) = self.entries.get(&turn) {
            return Ok(text.clone());
        }
        let digest = ScriptKey::Digest(prompt_digest(request.messages));
        self.entries
            .get(&digest)
            .cloned()
            .ok_or(BackendError::ScriptExhausted(turn))
    }

    fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ChatMessage;

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::system("sys"), ChatMessage::user("hello")]
    }

    #[test]
    fn turn_lookup_is_verbatim() {
        let b = ScriptedBackend::from_turns(["one", "two", "three  \n with spacing"]);
        let m = msgs();
        assert_eq!(
            b.complete(&CompletionRequest::new(&m, 3)).unwrap(),
            "three  \n with spacing"
        );
        assert_eq!(b.calls(), 1);
    }

    #[test]
    fn missing_turn_names_the_key() {
        let b = ScriptedBackend::from_turns(["one"]);
        let m = msgs();
        match b.complete(&CompletionRequest::new(&m, 99)) {
            Err(BackendError::ScriptExhausted(ScriptKey::Turn(99))) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn digest_fallback() {
        let m = msgs();
        let src = format!(
            "{{\"match\":{{\"digest\":\"{}\"}},\"response_text\":\"by digest\"}}\n",
            prompt_digest(&m)
        );
        let b = ScriptedBackend::parse(&src).unwrap();
        assert_eq!(b.complete(&CompletionRequest::new(&m, 7)).unwrap(), "by digest");
    }

    #[test]
    fn duplicate_keys_rejected() {
        let src = "{\"match\":{\"turn\":1},\"response_text\":\"a\"}\n{\"match\":{\"turn\":1},\"response_text\":\"b\"}";
        assert!(matches!(
            ScriptedBackend::parse(src),
            Err(ScriptError::Duplicate(ScriptKey::Turn(1)))
        ));
    }
}
