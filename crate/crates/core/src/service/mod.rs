//! Session management over the turn engine, and its HTTP surface.

mod http;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::clock::Clock;
use crate::detector::DetectorMode;
use crate::engine::{Engine, SessionFlags, TurnError, TurnResult};
use crate::eval::{self, AblationAxis, ArmReport, ComparativeReport, EvalError};
use crate::gateway::BackendError;
use crate::session::{EventBody, EventStore, Resource, SessionEvent, SessionLog, SessionState, StoreError};
use crate::stage::Stage;

pub use http::{router, serve};

/// Per-session settings accepted at creation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigOverrides {
    pub gating: Option<bool>,
    pub thinking: Option<bool>,
    pub stage_info: Option<bool>,
    pub detector_mode: Option<DetectorMode>,
    /// The user's declared resources, recorded before the first turn.
    pub resources: Vec<Resource>,
}

impl ConfigOverrides {
    pub fn flags(&self) -> SessionFlags {
        SessionFlags {
            gating: self.gating,
            thinking: self.thinking,
            stage_info: self.stage_info,
            detector_mode: self.detector_mode,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CreateSession {
    pub persona_hint: Option<String>,
    pub config_overrides: Option<ConfigOverrides>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideApplied {
    pub session_id: String,
    pub from: Stage,
    pub stage: Stage,
}

/// Evaluation request: personas from a directory, optional flags, optional
/// ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    pub persona_dir: PathBuf,
    #[serde(default)]
    pub flags: SessionFlags,
    #[serde(default)]
    pub ablate: Option<AblationAxis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvalResponse {
    Single(ArmReport),
    Ablation(ComparativeReport),
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("session {0:?} not found")]
    NotFound(String),
    #[error("a turn is already in flight for session {0:?}")]
    Busy(String),
    #[error("session {0:?} is closed")]
    Closed(String),
    #[error("backend unavailable: {0}")]
    Backend(BackendError),
    #[error("{0}")]
    BadRequest(String),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("evaluation: {0}")]
    Eval(#[from] EvalError),
    #[error("internal: {0}")]
    Internal(String),
}

struct Slot {
    log: Mutex<SessionLog>,
    flags: SessionFlags,
}

/// Live sessions, one lock each. A second message for a session whose turn
/// is still running is rejected rather than queued.
pub struct SessionManager {
    engine: Engine,
    store: Arc<dyn EventStore>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
    eval_turn_cap: u64,
}

impl std::fmt::Debug for SessionManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionManager")
            .field("engine", &self.engine)
            .field("sessions", &self.sessions.lock().len())
            .finish()
    }
}

impl SessionManager {
    pub fn new(engine: Engine, store: Arc<dyn EventStore>, clock: Arc<dyn Clock>) -> Self {
        SessionManager {
            engine,
            store,
            clock,
            sessions: Mutex::new(HashMap::new()),
            eval_turn_cap: eval::DEFAULT_TURN_CAP,
        }
    }

    /// Turn cap for evaluation personas that do not set one.
    pub fn with_eval_turn_cap(mut self, cap: u64) -> Self {
        self.eval_turn_cap = cap;
        self
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ServiceError> {
        if let Some(slot) = self.sessions.lock().get(id) {
            return Ok(slot.clone());
        }
        // Sessions from an earlier run are rebuilt from the store.
        let loaded = match self.store.load(id) {
            Ok(l) => l,
            Err(StoreError::NotFound(_) | StoreError::BadId(_)) => return Err(ServiceError::NotFound(id.into())),
            Err(e) => return Err(e.into()),
        };
        if loaded.truncated {
            warn!(session = id, "session log had a partial trailing record");
        }
        let log = SessionLog::from_events(loaded.events).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let slot = Arc::new(Slot {
            log: Mutex::new(log),
            flags: SessionFlags::default(),
        });
        Ok(self.sessions.lock().entry(id.to_string()).or_insert(slot).clone())
    }

    pub fn create(&self, request: CreateSession) -> Result<SessionCreated, ServiceError> {
        let overrides = request.config_overrides.unwrap_or_default();
        if let Some(bad) = overrides.resources.iter().find(|r| r.tag.trim().is_empty()) {
            return Err(ServiceError::BadRequest(format!(
                "config_overrides.resources: empty tag (capacity {:?})",
                bad.capacity_minutes_per_day
            )));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let mut log = SessionLog::new(id.clone());
        self.engine
            .seed_resources(&mut log, &overrides.resources, self.clock.as_ref())
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.store.append_all(log.events())?;
        let stage = log.state().stage;
        info!(session = %id, persona_hint = ?request.persona_hint, "session created");
        self.sessions.lock().insert(
            id.clone(),
            Arc::new(Slot {
                log: Mutex::new(log),
                flags: overrides.flags(),
            }),
        );
        Ok(SessionCreated { session_id: id, stage })
    }

    /// Runs one turn. Events recorded before a failure are persisted too.
    pub fn handle_message(&self, id: &str, text: &str) -> Result<TurnResult, ServiceError> {
        let slot = self.slot(id)?;
        let Some(mut log) = slot.log.try_lock() else {
            return Err(ServiceError::Busy(id.into()));
        };
        let before = log.events().len();
        let outcome = self
            .engine
            .handle_message(&mut log, text, &slot.flags, self.clock.as_ref());
        self.store.append_all(log.events_since(before))?;
        outcome.map_err(|e| match e {
            TurnError::SessionClosed => ServiceError::Closed(id.into()),
            TurnError::EmptyText => ServiceError::BadRequest("text: must not be empty".into()),
            TurnError::Backend(b) => ServiceError::Backend(b),
            other => ServiceError::Internal(other.to_string()),
        })
    }

    pub fn state(&self, id: &str) -> Result<SessionState, ServiceError> {
        Ok(self.slot(id)?.log.lock().state().clone())
    }

    pub fn transcript(&self, id: &str) -> Result<Vec<SessionEvent>, ServiceError> {
        Ok(self.slot(id)?.log.lock().events().to_vec())
    }

    /// Operator stage change, logged as its own event kind.
    pub fn override_stage(&self, id: &str, stage: Stage, note: &str) -> Result<OverrideApplied, ServiceError> {
        if note.trim().is_empty() {
            return Err(ServiceError::BadRequest("operator_note: must not be empty".into()));
        }
        if stage == Stage::Closed {
            return Err(ServiceError::BadRequest(
                "stage: sessions close through the conversation, not by override".into(),
            ));
        }
        let slot = self.slot(id)?;
        let Some(mut log) = slot.log.try_lock() else {
            return Err(ServiceError::Busy(id.into()));
        };
        let from = log.state().stage;
        if from == Stage::Closed {
            return Err(ServiceError::Closed(id.into()));
        }
        let before = log.events().len();
        log.record(
            EventBody::OperatorOverride {
                from,
                to: stage,
                note: note.to_string(),
            },
            self.clock.as_ref(),
        )
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.store.append_all(log.events_since(before))?;
        info!(session = id, %from, to = %stage, "operator stage override");
        Ok(OverrideApplied {
            session_id: id.to_string(),
            from,
            stage,
        })
    }

    /// Runs the personas in `request.persona_dir` with this manager's engine.
    pub fn run_eval(&self, request: &EvalRequest) -> Result<EvalResponse, ServiceError> {
        let mut personas = eval::load_personas(&request.persona_dir).map_err(EvalError::from)?;
        if personas.is_empty() {
            return Err(ServiceError::BadRequest(format!(
                "persona_dir: no personas in {}",
                request.persona_dir.display()
            )));
        }
        for p in &mut personas {
            p.persona.turn_cap.get_or_insert(self.eval_turn_cap);
        }
        Ok(match request.ablate {
            None => EvalResponse::Single(eval::run_arm("run", &personas, &self.engine, request.flags)?.0),
            Some(axis) => EvalResponse::Ablation(eval::run_ablation(
                &personas,
                &self.engine,
                request.flags,
                merge_flags(request.flags, axis.variant_flags()),
            )?),
        })
    }
}

/// `over` wins where it is set.
fn merge_flags(base: SessionFlags, over: SessionFlags) -> SessionFlags {
    SessionFlags {
        gating: over.gating.or(base.gating),
        thinking: over.thinking.or(base.thinking),
        stage_info: over.stage_info.or(base.stage_info),
        detector_mode: over.detector_mode.or(base.detector_mode),
    }
}
