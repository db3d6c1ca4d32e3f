//! Event-sourced session repository.
//!
//! A session is its append-only log of [`SessionEvent`]s; [`SessionState`] is
//! the fold of that log. [`SessionLog`] keeps both in step for a live session,
//! and [`replay`] rebuilds the state from a stored log.

mod event;
mod feasibility;
mod state;
mod store;

pub use event::{to_jsonl, AgentMessage, EventBody, Extraction, RecordError, SessionEvent, StageEcho, EVENT_VERSION};
pub use feasibility::{check_feasibility, Feasibility, Infeasibility};
pub use state::{
    create_session, replay, ActionPlan, ApplyError, HistoryEntry, OverrideRecord, PlanStep, ReplayError, Resource,
    SessionState, Speaker, StepStatus, Stressor,
};
pub use store::{load_file, parse_log, EventStore, FileStore, LoadedLog, MemoryStore, StoreError};

use crate::clock::Clock;

/// A live session: the event log plus its incrementally maintained state.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    state: SessionState,
    events: Vec<SessionEvent>,
}

impl SessionLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        SessionLog {
            state: SessionState::new(session_id),
            events: Vec::new(),
        }
    }

    /// Rebuilds a live session from stored events.
    pub fn from_events(events: Vec<SessionEvent>) -> Result<Self, ReplayError> {
        let state = replay(&events)?;
        Ok(SessionLog { state, events })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn id(&self) -> &str {
        &self.state.session_id
    }

    /// Stamps, applies and appends one event. User messages open a new turn;
    /// everything else belongs to the current turn.
    pub fn record(&mut self, body: EventBody, clock: &dyn Clock) -> Result<&SessionEvent, ApplyError> {
        let turn = match body {
            EventBody::UserMsg { .. } => self.state.turn_index + 1,
            _ => self.state.turn_index,
        };
        let event = SessionEvent::new(self.state.session_id.clone(), turn, clock.now(), body);
        self.state.apply(&event)?;
        self.events.push(event);
        Ok(self.events.last().expect("just pushed"))
    }

    /// Events appended since `len` (for persisting a turn's worth at once).
    pub fn events_since(&self, len: usize) -> &[SessionEvent] {
        &self.events[len.min(self.events.len())..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::LogicalClock;
    use crate::stage::{SignalKind, Stage, TransitionSignal};

    fn transition(log: &SessionLog, kind: SignalKind) -> EventBody {
        let from = log.state().stage;
        EventBody::Transition {
            from,
            signal: TransitionSignal::new(kind, 0.9, None),
            to: crate::stage::next_stage(from, kind),
        }
    }

    fn user(text: &str) -> EventBody {
        EventBody::UserMsg { text: text.into() }
    }

    #[test]
    fn fresh_session() {
        let s = create_session("a");
        assert_eq!(s.stage, Stage::Exploration);
        assert_eq!(s.turn_index, 0);
        assert_eq!(s.avoidance_counter, 0);
        assert!(s.stressors.is_empty() && s.plans.is_empty() && s.transitions.is_empty());
    }

    #[test]
    fn extraction_is_idempotent() {
        let clock = LogicalClock::default();
        let mut log = SessionLog::new("a");
        let x = Extraction {
            keywords: vec!["anxiety".into()],
            ..Default::default()
        };
        log.record(EventBody::Extraction(x.clone()), &clock).unwrap();
        log.record(EventBody::Extraction(x), &clock).unwrap();
        assert_eq!(
            log.state().emotional_keywords.iter().collect::<Vec<_>>(),
            vec!["anxiety"]
        );
    }

    #[test]
    fn insight_plus_ready_for_action_moves_to_action() {
        let clock = LogicalClock::default();
        let mut log = SessionLog::new("a");
        log.record(user("hi"), &clock).unwrap();
        log.record(transition(&log, SignalKind::ReadyForInsight), &clock)
            .unwrap();
        log.record(user("where to start"), &clock).unwrap();
        log.record(transition(&log, SignalKind::ReadyForAction), &clock)
            .unwrap();
        assert_eq!(log.state().stage, Stage::Action);
    }

    #[test]
    fn step_status_updates_plan() {
        let clock = LogicalClock::default();
        let mut log = SessionLog::new("a");
        log.record(user("hi"), &clock).unwrap();
        let plan = ActionPlan {
            steps: vec![PlanStep {
                index: 1,
                description: "record triggers".into(),
                schedule_hint: "week 1".into(),
                required_tags: ["time".to_string()].into(),
                required_minutes_per_day: 10,
                status: StepStatus::Proposed,
                status_turn: None,
            }],
            proposed_turn: 1,
        };
        log.record(EventBody::PlanProposed { plan }, &clock).unwrap();
        log.record(user("ok"), &clock).unwrap();
        log.record(
            EventBody::StepStatus {
                plan: 0,
                step: 1,
                status: StepStatus::Accepted,
            },
            &clock,
        )
        .unwrap();
        assert_eq!(log.state().plans[0].steps[0].status, StepStatus::Accepted);
        let again = log.record(
            EventBody::StepStatus {
                plan: 0,
                step: 1,
                status: StepStatus::Rejected,
            },
            &clock,
        );
        assert!(matches!(again, Err(ApplyError::Incoherent { .. })));
    }

    #[test]
    fn crisis_then_resolved_returns_to_exploration() {
        let clock = LogicalClock::default();
        let mut log = SessionLog::new("a");
        log.record(user("x"), &clock).unwrap();
        log.record(transition(&log, SignalKind::CrisisTrigger), &clock).unwrap();
        assert!(log.state().crisis_flag);
        log.record(EventBody::CrisisFlag { active: true }, &clock).unwrap();
        log.record(user("y"), &clock).unwrap();
        log.record(transition(&log, SignalKind::CrisisResolved), &clock)
            .unwrap();
        let replayed = replay(log.events()).unwrap();
        assert_eq!(replayed.stage, Stage::Exploration);
        assert!(!replayed.crisis_flag);
        assert_eq!(&replayed, log.state());
    }

    #[test]
    fn replay_of_nothing_is_fresh() {
        assert_eq!(replay(&[]).unwrap(), SessionState::new(""));
    }

    #[test]
    fn out_of_order_events_are_rejected() {
        let clock = LogicalClock::default();
        let mut log = SessionLog::new("a");
        log.record(user("one"), &clock).unwrap();
        log.record(user("two"), &clock).unwrap();
        let mut events = log.events().to_vec();
        events.swap(0, 1);
        assert!(matches!(
            replay(&events),
            Err(ReplayError::Apply {
                index: 0,
                source: ApplyError::OutOfOrder { .. }
            })
        ));
    }

    #[test]
    fn stressor_surfaces_when_agent_names_it() {
        let clock = LogicalClock::default();
        let mut log = SessionLog::new("a");
        log.record(user("my boss"), &clock).unwrap();
        log.record(
            EventBody::Extraction(Extraction {
                stressors: vec!["Supervisor  Conflict".into()],
                ..Default::default()
            }),
            &clock,
        )
        .unwrap();
        assert_eq!(log.state().stressors[0].label, "supervisor conflict");
        assert!(!log.state().stressors[0].surfaced);
        log.record(
            EventBody::AgentMsg(AgentMessage {
                reply: "The conflict with your supervisor sounds draining.".into(),
                stage: Stage::Exploration,
                reasoning_chain: None,
                stage_echo: None,
                suggestions: vec![],
                suppressed: vec![],
                degraded: vec![],
            }),
            &clock,
        )
        .unwrap();
        assert!(log.state().stressors[0].surfaced);
    }
}
