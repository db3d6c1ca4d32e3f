use std::sync::LazyLock;

use regex::Regex;
use tracing::warn;

use crate::gateway::{ChatBackend, ChatMessage, CompletionParams, CompletionRequest};
use crate::session::{HistoryEntry, Speaker};
use crate::stage::{SignalKind, Stage, TransitionSignal};

const TAXONOMY: &str = "\
You label the latest user message of an emotional-support conversation with exactly one transition signal.
Signals:
- ready_for_insight: the user starts reflecting on why the problem happens
- ready_for_action: the user asks how to change or what to do next
- avoidance_detected: the user deflects away from the stressor under discussion
- resistance_to_advice: the user objects to advice that was offered
- crisis_trigger: the user indicates risk of harming themselves
- crisis_resolved: the user indicates the immediate danger has passed
- new_topic: the user raises a different, unexplored concern
- continue: none of the above
- closure_signal: the user wants to end the conversation
Reply with one line and nothing else: signal=<identifier> confidence=<number between 0 and 1>";

static REPLY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^signal=([a-z_]+) confidence=(0(?:\.[0-9]+)?|1(?:\.0+)?)$").expect("valid regex"));

/// Classifier result; `degraded` carries the reason when the backend failed
/// or replied off-grammar.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutcome {
    pub signals: Vec<TransitionSignal>,
    pub degraded: Option<String>,
}

impl ClassifierOutcome {
    pub fn degraded(floor: f64, reason: impl Into<String>) -> Self {
        ClassifierOutcome {
            signals: vec![TransitionSignal::stay(floor)],
            degraded: Some(reason.into()),
        }
    }
}

/// Strict parse of `signal=<identifier> confidence=<0..1>`.
pub fn parse_classifier_reply(reply: &str) -> Option<(SignalKind, f64)> {
    let caps = REPLY.captures(reply.trim())?;
    let kind = SignalKind::ALL.into_iter().find(|k| k.as_str() == &caps[1])?;
    let confidence: f64 = caps[2].parse().ok()?;
    Some((kind, confidence))
}

fn render_context(context: &[HistoryEntry]) -> String {
    context
        .iter()
        .map(|h| {
            let who = match h.speaker {
                Speaker::User => "user",
                Speaker::Agent => "agent",
            };
            format!("{who}: {}", h.text)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Asks `backend` to label the last turn of `context`. Never fails: backend
/// errors and malformed replies fall back to the stay signal at `floor`.
pub fn classify_llm(
    context: &[HistoryEntry],
    stage: Stage,
    backend: &dyn ChatBackend,
    floor: f64,
    turn_index: u64,
) -> ClassifierOutcome {
    if context.is_empty() {
        return ClassifierOutcome::degraded(floor, "empty classifier context");
    }
    let messages = vec![
        ChatMessage::system(format!("{TAXONOMY}\nCurrent stage: {}", stage.as_str())),
        ChatMessage::user(render_context(context)),
    ];
    let request = CompletionRequest {
        messages: &messages,
        params: CompletionParams {
            temperature: 0.0,
            max_tokens: 16,
        },
        turn_index,
    };
    let reply = match backend.complete(&request) {
        Ok(r) => r,
        Err(e) => {
            warn!(error = %e, "signal classifier unavailable; staying");
            return ClassifierOutcome::degraded(floor, format!("classifier error: {e}"));
        }
    };
    match parse_classifier_reply(&reply) {
        Some((kind, confidence)) if confidence >= floor => ClassifierOutcome {
            signals: vec![TransitionSignal::new(kind, confidence, None)],
            degraded: None,
        },
        Some(_) => ClassifierOutcome {
            signals: vec![TransitionSignal::stay(floor)],
            degraded: None,
        },
        None => {
            warn!("classifier reply off-grammar; staying");
            ClassifierOutcome::degraded(floor, "classifier reply did not parse")
        }
    }
}
