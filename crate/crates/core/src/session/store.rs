use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use tracing::warn;

use super::event::{RecordError, SessionEvent};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session {0:?} not found")]
    NotFound(String),
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log at line {line}: {source}")]
    Corrupt {
        line: usize,
        #[source]
        source: RecordError,
    },
    #[error("invalid session id {0:?}")]
    BadId(String),
}

/// Events read back from a store.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedLog {
    pub events: Vec<SessionEvent>,
    /// A partial trailing record was dropped.
    pub truncated: bool,
}

/// Append-only per-session event storage.
pub trait EventStore: Send + Sync {
    fn append(&self, event: &SessionEvent) -> Result<(), StoreError>;
    fn load(&self, session_id: &str) -> Result<LoadedLog, StoreError>;

    fn append_all(&self, events: &[SessionEvent]) -> Result<(), StoreError> {
        events.iter().try_for_each(|e| self.append(e))
    }
}

/// One `<session_id>.events.jsonl` file per session under a directory.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(FileStore { dir })
    }

    pub fn path_for(&self, session_id: &str) -> Result<PathBuf, StoreError> {
        let valid = !session_id.is_empty()
            && session_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
            && !session_id.starts_with('.');
        if !valid {
            return Err(StoreError::BadId(session_id.to_string()));
        }
        Ok(self.dir.join(format!("{session_id}.events.jsonl")))
    }
}

impl EventStore for FileStore {
    fn append(&self, event: &SessionEvent) -> Result<(), StoreError> {
        let path = self.path_for(&event.sid)?;
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = event.to_line();
        line.push('\n');
        file.write_all(line.as_bytes())?;
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<LoadedLog, StoreError> {
        let path = self.path_for(session_id)?;
        if !path.exists() {
            return Err(StoreError::NotFound(session_id.to_string()));
        }
        load_file(&path)
    }
}

/// Reads an event-log file. A malformed final line is treated as a partial
/// write: it is dropped and the result is flagged `truncated`.
pub fn load_file(path: &Path) -> Result<LoadedLog, StoreError> {
    let raw = fs::read_to_string(path)?;
    let log = parse_log(&raw)?;
    if log.truncated {
        warn!(path = %path.display(), kept = log.events.len(), "dropped partial trailing record");
    }
    Ok(log)
}

/// Parses newline-delimited records; see [`load_file`].
pub fn parse_log(raw: &str) -> Result<LoadedLog, StoreError> {
    let lines: Vec<&str> = raw.split('\n').collect();
    let last_nonempty = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut events = Vec::new();
    let mut truncated = false;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match SessionEvent::from_line(line) {
            Ok(e) => events.push(e),
            Err(_) if Some(i) == last_nonempty => truncated = true,
            Err(source) => return Err(StoreError::Corrupt { line: i + 1, source }),
        }
    }
    Ok(LoadedLog { events, truncated })
}

/// In-memory store, for tests and ephemeral services.
#[derive(Debug, Default)]
pub struct MemoryStore {
    logs: Mutex<HashMap<String, Vec<SessionEvent>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl EventStore for MemoryStore {
    fn append(&self, event: &SessionEvent) -> Result<(), StoreError> {
        self.logs
            .lock()
            .entry(event.sid.clone())
            .or_default()
            .push(event.clone());
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<LoadedLog, StoreError> {
        self.logs
            .lock()
            .get(session_id)
            .map(|events| LoadedLog {
                events: events.clone(),
                truncated: false,
            })
            .ok_or_else(|| StoreError::NotFound(session_id.to_string()))
    }
}
