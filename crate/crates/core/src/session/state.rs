use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::stage::{next_stage, Stage, TransitionRecord};
use crate::text::contains_all_tokens;

use super::event::{EventBody, SessionEvent};

/// A potential stress trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stressor {
    pub label: String,
    pub first_mentioned_turn: u64,
    /// Acknowledged by an agent reply at or after the first mention.
    pub surfaced: bool,
}

/// Something the user has available, e.g. time or social support.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub tag: String,
    /// Daily minutes available; `None` means unbounded.
    pub capacity_minutes_per_day: Option<u32>,
}

impl Resource {
    pub fn bounded(tag: impl Into<String>, minutes: u32) -> Self {
        Resource {
            tag: tag.into(),
            capacity_minutes_per_day: Some(minutes),
        }
    }

    pub fn unbounded(tag: impl Into<String>) -> Self {
        Resource {
            tag: tag.into(),
            capacity_minutes_per_day: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Proposed,
    Accepted,
    Rejected,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub index: u32,
    pub description: String,
    pub schedule_hint: String,
    pub required_tags: BTreeSet<String>,
    pub required_minutes_per_day: u32,
    pub status: StepStatus,
    /// Turn of the last status change.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status_turn: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPlan {
    pub steps: Vec<PlanStep>,
    pub proposed_turn: u64,
}

impl ActionPlan {
    /// Step indices run 1..=n without gaps.
    pub fn indices_contiguous(&self) -> bool {
        self.steps.iter().enumerate().all(|(i, s)| s.index as usize == i + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub turn: u64,
    pub speaker: Speaker,
    pub text: String,
}

/// An operator's manual stage change. Exempt from the transition table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub from: Stage,
    pub to: Stage,
    pub turn_index: u64,
    pub note: String,
}

/// Everything known about one session, derived from its event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub stage: Stage,
    pub turn_index: u64,
    pub emotional_keywords: BTreeSet<String>,
    pub semantic_foci: BTreeSet<String>,
    pub stressors: Vec<Stressor>,
    pub resources: Vec<Resource>,
    pub plans: Vec<ActionPlan>,
    pub avoidance_counter: u32,
    pub transitions: Vec<TransitionRecord>,
    pub overrides: Vec<OverrideRecord>,
    pub crisis_flag: bool,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ApplyError {
    #[error("event for session {found:?} applied to session {expected:?}")]
    ForeignSession { expected: String, found: String },
    #[error("out-of-order event: {kind} at turn {found}, expected turn {expected}")]
    OutOfOrder {
        kind: &'static str,
        expected: u64,
        found: u64,
    },
    #[error("incoherent event at turn {turn}: {reason}")]
    Incoherent { turn: u64, reason: String },
}

impl SessionState {
    /// A fresh session: Exploration, turn 0, nothing recorded.
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionState {
            session_id: session_id.into(),
            stage: Stage::Exploration,
            turn_index: 0,
            emotional_keywords: BTreeSet::new(),
            semantic_foci: BTreeSet::new(),
            stressors: Vec::new(),
            resources: Vec::new(),
            plans: Vec::new(),
            avoidance_counter: 0,
            transitions: Vec::new(),
            overrides: Vec::new(),
            crisis_flag: false,
            history: Vec::new(),
        }
    }

    /// Pure reducer: returns the state after `event`.
    pub fn apply_event(&self, event: &SessionEvent) -> Result<SessionState, ApplyError> {
        let mut next = self.clone();
        next.apply(event)?;
        Ok(next)
    }

    /// In-place form of [`SessionState::apply_event`]. On error the state is
    /// left untouched.
    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), ApplyError> {
        if event.sid != self.session_id {
            return Err(ApplyError::ForeignSession {
                expected: self.session_id.clone(),
                found: event.sid.clone(),
            });
        }
        let expected = match event.body {
            EventBody::UserMsg { .. } => self.turn_index + 1,
            _ => self.turn_index,
        };
        if event.turn != expected {
            return Err(ApplyError::OutOfOrder {
                kind: event.body.kind(),
                expected,
                found: event.turn,
            });
        }
        let turn = event.turn;
        let incoherent = |reason: String| ApplyError::Incoherent { turn, reason };

        match &event.body {
            EventBody::UserMsg { text } => {
                self.turn_index = turn;
                self.history.push(HistoryEntry {
                    turn,
                    speaker: Speaker::User,
                    text: text.clone(),
                });
            }
            EventBody::Signal { avoidance_cue, .. } => {
                self.avoidance_counter = if *avoidance_cue { self.avoidance_counter + 1 } else { 0 };
            }
            EventBody::Transition { from, signal, to } => {
                if *from != self.stage {
                    return Err(incoherent(format!(
                        "transition from {from} but stage is {}",
                        self.stage
                    )));
                }
                if next_stage(*from, signal.kind) != *to {
                    return Err(incoherent(format!("{from} + {} does not lead to {to}", signal.kind)));
                }
                if self.transitions.last().is_some_and(|t| t.turn_index >= turn) {
                    return Err(incoherent("second transition in one turn".into()));
                }
                self.stage = *to;
                self.transitions.push(TransitionRecord {
                    from: *from,
                    signal: signal.clone(),
                    to: *to,
                    turn_index: turn,
                });
            }
            EventBody::OperatorOverride { from, to, note } => {
                if *from != self.stage {
                    return Err(incoherent(format!("override from {from} but stage is {}", self.stage)));
                }
                self.stage = *to;
                self.overrides.push(OverrideRecord {
                    from: *from,
                    to: *to,
                    turn_index: turn,
                    note: note.clone(),
                });
            }
            EventBody::Extraction(x) => {
                self.emotional_keywords
                    .extend(x.keywords.iter().map(|k| normalize_label(k)));
                self.semantic_foci.extend(x.foci.iter().map(|k| normalize_label(k)));
                for label in &x.stressors {
                    let label = normalize_label(label);
                    if label.is_empty() || self.stressors.iter().any(|s| s.label == label) {
                        continue;
                    }
                    self.stressors.push(Stressor {
                        label,
                        first_mentioned_turn: turn,
                        surfaced: false,
                    });
                }
                for r in &x.resources {
                    match self.resources.iter_mut().find(|e| e.tag == r.tag) {
                        Some(existing) => existing.capacity_minutes_per_day = r.capacity_minutes_per_day,
                        None => self.resources.push(r.clone()),
                    }
                }
            }
            EventBody::AgentMsg(msg) => {
                for s in self.stressors.iter_mut().filter(|s| !s.surfaced) {
                    if s.first_mentioned_turn <= turn && contains_all_tokens(&msg.reply, &s.label) {
                        s.surfaced = true;
                    }
                }
                self.history.push(HistoryEntry {
                    turn,
                    speaker: Speaker::Agent,
                    text: msg.reply.clone(),
                });
            }
            EventBody::PlanProposed { plan } => {
                if !plan.indices_contiguous() {
                    return Err(incoherent("plan step indices are not contiguous from 1".into()));
                }
                self.plans.push(plan.clone());
            }
            EventBody::StepStatus { plan, step, status } => {
                let target = self
                    .plans
                    .get_mut(*plan)
                    .and_then(|p| p.steps.iter_mut().find(|s| s.index == *step))
                    .ok_or_else(|| incoherent(format!("no step {step} in plan {plan}")))?;
                if target.status_turn == Some(turn) {
                    return Err(incoherent(format!("step {step} changed status twice in one turn")));
                }
                target.status = *status;
                target.status_turn = Some(turn);
            }
            EventBody::CrisisFlag { active } => {
                if *active != (self.stage == Stage::Crisis) {
                    return Err(incoherent(format!(
                        "crisis flag {active} while stage is {}",
                        self.stage
                    )));
                }
            }
            EventBody::Closure { .. } => {
                if self.stage != Stage::Closed {
                    return Err(incoherent("closure recorded before the session closed".into()));
                }
            }
        }
        self.crisis_flag = self.stage == Stage::Crisis;
        Ok(())
    }

    /// Most recent plan, if any, with its position in `plans`.
    pub fn latest_plan(&self) -> Option<(usize, &ActionPlan)> {
        self.plans.iter().enumerate().next_back()
    }

    /// Last `k` history entries.
    pub fn recent_history(&self, k: usize) -> &[HistoryEntry] {
        let start = self.history.len().saturating_sub(k);
        &self.history[start..]
    }
}

fn normalize_label(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// A fresh session state for `session_id`.
pub fn create_session(session_id: impl Into<String>) -> SessionState {
    SessionState::new(session_id)
}

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("event {index}: {source}")]
    Apply {
        index: usize,
        #[source]
        source: ApplyError,
    },
}

/// Folds `events` over a fresh state. The session id is taken from the first
/// event; an empty log replays to a fresh state with an empty id.
pub fn replay(events: &[SessionEvent]) -> Result<SessionState, ReplayError> {
    let sid = events.first().map(|e| e.sid.clone()).unwrap_or_default();
    let mut state = SessionState::new(sid);
    for (index, event) in events.iter().enumerate() {
        state
            .apply(event)
            .map_err(|source| ReplayError::Apply { index, source })?;
    }
    Ok(state)
}
