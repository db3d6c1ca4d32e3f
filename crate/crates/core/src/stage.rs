//! Dialogue stages, the nine transition signals, and the rules that move a
//! session between stages.
//!
//! Everything here is pure. [`next_stage`] is total over every
//! `(Stage, SignalKind)` pair, [`applicable`] says which signals a detector is
//! allowed to emit in a stage, and [`resolve`] arbitrates a candidate set down
//! to the single signal that drives the turn.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Where a session currently sits in the helping process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Exploration,
    Insight,
    Action,
    Crisis,
    Closed,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Exploration,
        Stage::Insight,
        Stage::Action,
        Stage::Crisis,
        Stage::Closed,
    ];

    /// Serialized identifier, e.g. `"exploration"`.
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Exploration => "exploration",
            Stage::Insight => "insight",
            Stage::Action => "action",
            Stage::Crisis => "crisis",
            Stage::Closed => "closed",
        }
    }

    /// Human-facing name, e.g. `"Exploration"`.
    pub fn title(self) -> &'static str {
        match self {
            Stage::Exploration => "Exploration",
            Stage::Insight => "Insight",
            Stage::Action => "Action",
            Stage::Crisis => "Crisis",
            Stage::Closed => "Closed",
        }
    }

    /// One of the three helping stages (not crisis, not closed).
    pub fn is_helping(self) -> bool {
        matches!(self, Stage::Exploration | Stage::Insight | Stage::Action)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown identifier: {0:?}")]
pub struct UnknownIdentifier(pub String);

impl FromStr for Stage {
    type Err = UnknownIdentifier;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownIdentifier(s.to_string()))
    }
}

/// The nine kinds of transition signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    /// S1: exploration has surfaced enough to start making sense of it.
    ReadyForInsight,
    /// S2: the user is ready to plan concrete steps.
    ReadyForAction,
    /// S3: the user keeps steering away from the stressor.
    AvoidanceDetected,
    /// S4: advice met with objection.
    ResistanceToAdvice,
    /// S5: safety-critical cue.
    CrisisTrigger,
    /// S6: the user indicates immediate danger has passed.
    CrisisResolved,
    /// S7: a new, unexplored topic was raised.
    NewTopic,
    /// S8: stay in the current stage.
    Continue,
    /// S9: the user wants to end the conversation.
    ClosureSignal,
}

impl SignalKind {
    pub const ALL: [SignalKind; 9] = [
        SignalKind::ReadyForInsight,
        SignalKind::ReadyForAction,
        SignalKind::AvoidanceDetected,
        SignalKind::ResistanceToAdvice,
        SignalKind::CrisisTrigger,
        SignalKind::CrisisResolved,
        SignalKind::NewTopic,
        SignalKind::Continue,
        SignalKind::ClosureSignal,
    ];

    /// Resolver priority, highest first.
    pub const PRIORITY: [SignalKind; 9] = [
        SignalKind::CrisisTrigger,
        SignalKind::CrisisResolved,
        SignalKind::ClosureSignal,
        SignalKind::ResistanceToAdvice,
        SignalKind::AvoidanceDetected,
        SignalKind::NewTopic,
        SignalKind::ReadyForAction,
        SignalKind::ReadyForInsight,
        SignalKind::Continue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::ReadyForInsight => "ready_for_insight",
            SignalKind::ReadyForAction => "ready_for_action",
            SignalKind::AvoidanceDetected => "avoidance_detected",
            SignalKind::ResistanceToAdvice => "resistance_to_advice",
            SignalKind::CrisisTrigger => "crisis_trigger",
            SignalKind::CrisisResolved => "crisis_resolved",
            SignalKind::NewTopic => "new_topic",
            SignalKind::Continue => "continue",
            SignalKind::ClosureSignal => "closure_signal",
        }
    }

    /// Short code `S1`..`S9`.
    pub fn code(self) -> &'static str {
        match self {
            SignalKind::ReadyForInsight => "S1",
            SignalKind::ReadyForAction => "S2",
            SignalKind::AvoidanceDetected => "S3",
            SignalKind::ResistanceToAdvice => "S4",
            SignalKind::CrisisTrigger => "S5",
            SignalKind::CrisisResolved => "S6",
            SignalKind::NewTopic => "S7",
            SignalKind::Continue => "S8",
            SignalKind::ClosureSignal => "S9",
        }
    }

    /// Position in [`SignalKind::PRIORITY`]; lower ranks win.
    pub fn priority_rank(self) -> usize {
        SignalKind::PRIORITY
            .iter()
            .position(|k| *k == self)
            .expect("every kind has a priority")
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalKind {
    type Err = UnknownIdentifier;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        SignalKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s) || k.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownIdentifier(s.to_string()))
    }
}

/// Character-offset span of the text that triggered a signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// A detected signal with its confidence and supporting evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSignal {
    pub kind: SignalKind,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
}

impl TransitionSignal {
    /// Builds a signal, clamping confidence into `[0, 1]`.
    pub fn new(kind: SignalKind, confidence: f64, evidence: Option<Evidence>) -> Self {
        let confidence = if confidence.is_nan() {
            0.0
        } else {
            confidence.clamp(0.0, 1.0)
        };
        TransitionSignal {
            kind,
            confidence,
            evidence,
        }
    }

    /// The stay signal.
    pub fn stay(confidence: f64) -> Self {
        TransitionSignal::new(SignalKind::Continue, confidence, None)
    }

    pub fn with_evidence(kind: SignalKind, confidence: f64, text: &str, start: usize, end: usize) -> Self {
        TransitionSignal::new(
            kind,
            confidence,
            Some(Evidence {
                text: text.to_string(),
                start,
                end,
            }),
        )
    }
}

/// One applied transition, as stored in the session history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub from: Stage,
    pub signal: TransitionSignal,
    pub to: Stage,
    pub turn_index: u64,
}

/// The transition table. Total over all 45 pairs.
pub fn next_stage(from: Stage, signal: SignalKind) -> Stage {
    use SignalKind::*;
    use Stage::*;

    match (signal, from) {
        (_, Closed) => Closed,
        (ReadyForInsight, Exploration) => Insight,
        (ReadyForAction, Insight) => Action,
        (AvoidanceDetected, Exploration | Insight | Action) => Exploration,
        (ResistanceToAdvice, Action) => Insight,
        (CrisisTrigger, Exploration | Insight | Action) => Crisis,
        (CrisisResolved, Crisis) => Exploration,
        (NewTopic, Exploration | Insight | Action) => Exploration,
        (ClosureSignal, Exploration | Insight | Action) => Closed,
        (_, stage) => stage,
    }
}

/// Whether a detector may emit `signal` while the session is in `stage`.
pub fn applicable(stage: Stage, signal: SignalKind) -> bool {
    use SignalKind::*;
    use Stage::*;

    match signal {
        ReadyForInsight => stage == Exploration,
        ReadyForAction => stage == Insight,
        ResistanceToAdvice => stage == Action,
        CrisisResolved => stage == Crisis,
        CrisisTrigger | AvoidanceDetected | NewTopic | ClosureSignal => stage.is_helping(),
        Continue => stage != Closed,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("resolve called with an empty candidate set")]
    EmptyCandidates,
}

/// Picks the signal that drives this turn.
///
/// Inapplicable candidates are dropped; the rest are ordered by the fixed
/// priority list, then by higher confidence, then by earlier evidence. When
/// nothing applicable remains the stay signal is returned.
pub fn resolve(stage: Stage, candidates: &[TransitionSignal]) -> Result<TransitionSignal, ResolveError> {
    if candidates.is_empty() {
        return Err(ResolveError::EmptyCandidates);
    }
    let best = candidates
        .iter()
        .filter(|c| applicable(stage, c.kind))
        .min_by(|a, b| candidate_order(a, b));
    Ok(match best {
        Some(sig) => sig.clone(),
        None => TransitionSignal::stay(1.0),
    })
}

/// Total order used by [`resolve`]: `Less` means "preferred".
fn candidate_order(a: &TransitionSignal, b: &TransitionSignal) -> Ordering {
    let span_key = |s: &TransitionSignal| {
        s.evidence
            .as_ref()
            .map(|e| (e.start, e.end))
            .unwrap_or((usize::MAX, usize::MAX))
    };
    a.kind
        .priority_rank()
        .cmp(&b.kind.priority_rank())
        .then_with(|| b.confidence.total_cmp(&a.confidence))
        .then_with(|| span_key(a).cmp(&span_key(b)))
        // Remaining ties only differ in evidence text; keep the result independent of input order.
        .then_with(|| {
            let text = |s: &TransitionSignal| s.evidence.as_ref().map(|e| e.text.clone());
            text(a).cmp(&text(b))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use SignalKind::*;
    use Stage::*;

    fn sig(kind: SignalKind, confidence: f64) -> TransitionSignal {
        TransitionSignal::new(kind, confidence, None)
    }

    #[test]
    fn forward_and_backtrack_examples() {
        assert_eq!(next_stage(Insight, ReadyForAction), Action);
        assert_eq!(next_stage(Exploration, Continue), Exploration);
        assert_eq!(next_stage(Action, ResistanceToAdvice), Insight);
        assert_eq!(next_stage(Crisis, ClosureSignal), Crisis);
    }

    #[test]
    fn applicability_examples() {
        assert!(!applicable(Exploration, ReadyForAction));
        assert!(applicable(Crisis, CrisisResolved));
        assert!(!applicable(Closed, Continue));
        for kind in SignalKind::ALL {
            assert!(!applicable(Closed, kind));
        }
    }

    #[test]
    fn resolve_examples() {
        let picked = resolve(Insight, &[sig(ReadyForAction, 0.7), sig(CrisisTrigger, 0.9)]).unwrap();
        assert_eq!(picked.kind, CrisisTrigger);
        assert_eq!(resolve(Exploration, &[sig(Continue, 0.3)]).unwrap().kind, Continue);
        let picked = resolve(Action, &[sig(ReadyForInsight, 0.9), sig(Continue, 0.5)]).unwrap();
        assert_eq!(picked.kind, Continue);
        assert_eq!(resolve(Action, &[]), Err(ResolveError::EmptyCandidates));
    }

    #[test]
    fn ties_prefer_confidence_then_earlier_span() {
        let a = TransitionSignal::with_evidence(NewTopic, 0.6, "also", 10, 14);
        let b = TransitionSignal::with_evidence(NewTopic, 0.8, "another thing", 20, 33);
        assert_eq!(resolve(Insight, &[a.clone(), b.clone()]).unwrap(), b);
        let c = TransitionSignal::with_evidence(NewTopic, 0.8, "by the way", 2, 12);
        assert_eq!(resolve(Insight, &[a, b, c.clone()]).unwrap(), c);
    }

    #[test]
    fn identifiers_round_trip() {
        for stage in Stage::ALL {
            assert_eq!(stage.as_str().parse::<Stage>().unwrap(), stage);
            let json = serde_json::to_string(&stage).unwrap();
            assert_eq!(json, format!("\"{}\"", stage.as_str()));
        }
        for kind in SignalKind::ALL {
            assert_eq!(kind.as_str().parse::<SignalKind>().unwrap(), kind);
            assert_eq!(kind.code().parse::<SignalKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn confidence_is_clamped() {
        assert_eq!(sig(Continue, 1.7).confidence, 1.0);
        assert_eq!(sig(Continue, -0.2).confidence, 0.0);
        assert_eq!(sig(Continue, f64::NAN).confidence, 0.0);
    }
}
