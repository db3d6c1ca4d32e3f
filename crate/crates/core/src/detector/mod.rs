//! Transition-signal detection.
//!
//! Three paths feed the resolver: a deterministic cue lexicon
//! ([`detect_cues`]), a prompted classifier over a chat backend
//! ([`classify_llm`]), or both. Crisis cues are scanned in every mode.
//! Avoidance only becomes a candidate after the configured number of
//! consecutive avoidant user turns.

mod cues;
mod lexicon;
mod llm;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cues::{detect_cues, CueHit};
pub use lexicon::{CueLexicon, LexiconError, Pattern, PlanFeedbackLexicon, SuggestionLexicon, BUNDLED_LEXICON};
pub use llm::{classify_llm, parse_classifier_reply, ClassifierOutcome};

use crate::gateway::ChatBackend;
use crate::session::{EventBody, SessionState};
use crate::stage::{SignalKind, Stage, TransitionSignal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectorMode {
    #[default]
    Rules,
    Llm,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    /// Consecutive avoidant user turns needed before avoidance is a candidate.
    pub avoidance_threshold: u32,
    /// Candidates below this confidence are dropped (crisis cues never are).
    pub confidence_floor: f64,
    /// Turns of context handed to the classifier.
    pub context_turns: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            mode: DetectorMode::Rules,
            avoidance_threshold: 2,
            confidence_floor: 0.3,
            context_turns: 6,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.avoidance_threshold < 1 {
            return Err(DetectError::Config("avoidance_threshold must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.confidence_floor) {
            return Err(DetectError::Config("confidence_floor must be within [0, 1]".into()));
        }
        if self.context_turns < 1 {
            return Err(DetectError::Config("context_turns must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DetectError {
    #[error("session is closed")]
    SessionClosed,
    #[error("utterance is empty")]
    EmptyUtterance,
    #[error("detector configuration: {0}")]
    Config(String),
}

/// Outcome of one detection pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Candidate set for the resolver. Always contains the stay signal.
    pub candidates: Vec<TransitionSignal>,
    /// Lexicon hits behind the rule candidates.
    pub hits: Vec<CueHit>,
    /// This turn carried an avoidance cue.
    pub avoidance_cue: bool,
    /// Consecutive avoidant turns including this one.
    pub avoidance_counter: u32,
    /// Set when the classifier path failed and fell back.
    pub degraded: Option<String>,
}

impl Detection {
    pub fn contains(&self, kind: SignalKind) -> bool {
        self.candidates.iter().any(|c| c.kind == kind)
    }

    pub fn kinds(&self) -> Vec<SignalKind> {
        self.candidates.iter().map(|c| c.kind).collect()
    }

    /// The event that records this detection in the session log. Applying it
    /// is what advances the avoidance counter.
    pub fn to_event(&self) -> EventBody {
        EventBody::Signal {
            candidates: self.candidates.clone(),
            avoidance_cue: self.avoidance_cue,
            degraded: self.degraded.clone(),
        }
    }
}

/// Lexicon plus optional classifier backend, configured once and shared.
#[derive(Clone)]
pub struct Detector {
    lexicon: Arc<CueLexicon>,
    config: DetectorConfig,
    classifier: Option<Arc<dyn ChatBackend>>,
}

impl std::fmt::Debug for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Detector")
            .field("config", &self.config)
            .field("classifier", &self.classifier.is_some())
            .finish()
    }
}

impl Detector {
    pub fn new(lexicon: Arc<CueLexicon>, config: DetectorConfig) -> Self {
        Detector {
            lexicon,
            config,
            classifier: None,
        }
    }

    pub fn with_classifier(mut self, backend: Arc<dyn ChatBackend>) -> Self {
        self.classifier = Some(backend);
        self
    }

    /// The same detector running in `mode`.
    pub fn with_mode(&self, mode: DetectorMode) -> Self {
        let mut d = self.clone();
        d.config.mode = mode;
        d
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn lexicon(&self) -> &CueLexicon {
        &self.lexicon
    }

    /// Candidate signals for `utterance`, given the state before this turn's
    /// signal event. Does not modify the state: record
    /// [`Detection::to_event`] to advance the avoidance counter.
    ///
    /// The history in `state` may already contain `utterance` as its last
    /// user entry; the classifier context is built accordingly.
    pub fn detect(&self, state: &SessionState, utterance: &str) -> Result<Detection, DetectError> {
        if state.stage == Stage::Closed {
            return Err(DetectError::SessionClosed);
        }
        if utterance.trim().is_empty() {
            return Err(DetectError::EmptyUtterance);
        }
        let floor = self.config.confidence_floor;
        let hits = detect_cues(utterance, &self.lexicon);
        let use_rules = matches!(self.config.mode, DetectorMode::Rules | DetectorMode::Hybrid);
        let use_llm = matches!(self.config.mode, DetectorMode::Llm | DetectorMode::Hybrid);

        let mut raw: Vec<TransitionSignal> = Vec::new();
        for kind in SignalKind::ALL {
            // Crisis cues are scanned in every mode.
            if kind == SignalKind::CrisisTrigger || use_rules {
                if let Some(sig) = strongest_hit(&hits, kind) {
                    if kind == SignalKind::CrisisTrigger || sig.confidence >= floor {
                        raw.push(sig);
                    }
                }
            }
        }

        let mut degraded = None;
        if use_llm {
            let outcome = match &self.classifier {
                Some(backend) => {
                    let mut context = state.recent_history(self.config.context_turns).to_vec();
                    let already_there = context
                        .last()
                        .is_some_and(|h| h.speaker == crate::session::Speaker::User && h.text == utterance);
                    if !already_there {
                        context.push(crate::session::HistoryEntry {
                            turn: state.turn_index + 1,
                            speaker: crate::session::Speaker::User,
                            text: utterance.to_string(),
                        });
                        let excess = context.len().saturating_sub(self.config.context_turns);
                        context.drain(..excess);
                    }
                    let turn = context.last().map_or(state.turn_index + 1, |h| h.turn);
                    classify_llm(&context, state.stage, backend.as_ref(), floor, turn)
                }
                None => ClassifierOutcome::degraded(floor, "no classifier backend configured"),
            };
            degraded = outcome.degraded;
            raw.extend(outcome.signals.into_iter().filter(|s| s.kind != SignalKind::Continue));
        }

        let avoidance_cue = raw.iter().any(|s| s.kind == SignalKind::AvoidanceDetected);
        let avoidance_counter = if avoidance_cue { state.avoidance_counter + 1 } else { 0 };

        let mut candidates: Vec<TransitionSignal> = Vec::new();
        for sig in raw {
            if sig.kind == SignalKind::AvoidanceDetected && avoidance_counter < self.config.avoidance_threshold {
                continue;
            }
            // Hybrid keeps one candidate per kind: the more confident one.
            match candidates.iter_mut().find(|c| c.kind == sig.kind) {
                Some(existing) if existing.confidence >= sig.confidence => {}
                Some(existing) => *existing = sig,
                None => candidates.push(sig),
            }
        }
        candidates.push(TransitionSignal::stay(floor));

        Ok(Detection {
            candidates,
            hits,
            avoidance_cue,
            avoidance_counter,
            degraded,
        })
    }
}

/// Highest-weight hit of `kind` as a candidate (earliest on ties).
fn strongest_hit(hits: &[CueHit], kind: SignalKind) -> Option<TransitionSignal> {
    hits.iter()
        .filter(|h| h.signal == kind)
        .fold(None::<&CueHit>, |best, h| match best {
            Some(b) if b.weight >= h.weight => Some(b),
            _ => Some(h),
        })
        .map(|h| TransitionSignal::with_evidence(kind, h.weight, &h.pattern, h.span.0, h.span.1))
}
