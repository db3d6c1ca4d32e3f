use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::stage::{Stage, TransitionSignal};

use super::state::{ActionPlan, Resource, StepStatus};

/// Current event-log record version.
pub const EVENT_VERSION: u32 = 1;

/// Structured facts the agent reported about the user this turn.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub foci: Vec<String>,
    #[serde(default)]
    pub stressors: Vec<String>,
    #[serde(default)]
    pub resources: Vec<Resource>,
}

impl Extraction {
    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty() && self.foci.is_empty() && self.stressors.is_empty() && self.resources.is_empty()
    }
}

/// The stage and focus the model reported in its reasoning header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEcho {
    pub stage: Stage,
    pub focus: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    /// What the user saw.
    pub reply: String,
    /// Stage the reply was generated under.
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_chain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_echo: Option<StageEcho>,
    /// Suggestion sentences present in `reply`.
    #[serde(default)]
    pub suggestions: Vec<String>,
    /// Suggestion sentences removed by gating.
    #[serde(default)]
    pub suppressed: Vec<String>,
    #[serde(default)]
    pub degraded: Vec<String>,
}

/// Kind-specific payload of a [`SessionEvent`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    UserMsg {
        text: String,
    },
    AgentMsg(AgentMessage),
    Signal {
        candidates: Vec<TransitionSignal>,
        avoidance_cue: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        degraded: Option<String>,
    },
    Transition {
        from: Stage,
        signal: TransitionSignal,
        to: Stage,
    },
    OperatorOverride {
        from: Stage,
        to: Stage,
        note: String,
    },
    Extraction(Extraction),
    PlanProposed {
        plan: ActionPlan,
    },
    StepStatus {
        plan: usize,
        step: u32,
        status: StepStatus,
    },
    CrisisFlag {
        active: bool,
    },
    Closure {
        reason: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::UserMsg { .. } => "user_msg",
            EventBody::AgentMsg(_) => "agent_msg",
            EventBody::Signal { .. } => "signal",
            EventBody::Transition { .. } => "transition",
            EventBody::OperatorOverride { .. } => "operator_override",
            EventBody::Extraction(_) => "extraction",
            EventBody::PlanProposed { .. } => "plan_proposed",
            EventBody::StepStatus { .. } => "step_status",
            EventBody::CrisisFlag { .. } => "crisis_flag",
            EventBody::Closure { .. } => "closure",
        }
    }
}

/// One entry of a session's append-only log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionEvent {
    pub sid: String,
    pub turn: u64,
    pub ts: DateTime<Utc>,
    pub body: EventBody,
}

/// Wire shape: `{v, sid, turn, kind, ts, payload}`.
#[derive(Serialize, Deserialize)]
struct Record {
    v: u32,
    sid: String,
    turn: u64,
    kind: String,
    ts: String,
    payload: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported record version {0}")]
    Version(u32),
    #[error("bad timestamp {0:?}")]
    Timestamp(String),
}

impl SessionEvent {
    pub fn new(sid: impl Into<String>, turn: u64, ts: DateTime<Utc>, body: EventBody) -> Self {
        SessionEvent {
            sid: sid.into(),
            turn,
            ts,
            body,
        }
    }

    /// Serializes to one log line (no trailing newline).
    pub fn to_line(&self) -> String {
        let mut tagged = serde_json::to_value(&self.body).expect("event body serializes");
        let obj = tagged.as_object_mut().expect("adjacently tagged body is an object");
        let kind = obj
            .remove("kind")
            .and_then(|k| k.as_str().map(str::to_string))
            .expect("kind tag present");
        let payload = obj.remove("payload").unwrap_or(Value::Null);
        let record = Record {
            v: EVENT_VERSION,
            sid: self.sid.clone(),
            turn: self.turn,
            kind,
            ts: self.ts.to_rfc3339_opts(SecondsFormat::Millis, true),
            payload,
        };
        serde_json::to_string(&record).expect("record serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, RecordError> {
        let record: Record = serde_json::from_str(line)?;
        if record.v != EVENT_VERSION {
            return Err(RecordError::Version(record.v));
        }
        let ts = DateTime::parse_from_rfc3339(&record.ts)
            .map_err(|_| RecordError::Timestamp(record.ts.clone()))?
            .with_timezone(&Utc);
        let body: EventBody = serde_json::from_value(serde_json::json!({
            "kind": record.kind,
            "payload": record.payload,
        }))?;
        Ok(SessionEvent {
            sid: record.sid,
            turn: record.turn,
            ts,
            body,
        })
    }
}

/// Renders a whole log, one record per line, each newline-terminated.
pub fn to_jsonl(events: &[SessionEvent]) -> String {
    events.iter().map(|e| e.to_line() + "\n").collect()
}
