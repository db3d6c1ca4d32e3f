//! The per-turn pipeline: detect, resolve, transition, prompt, complete,
//! parse, gate, extract plan, record.

use std::collections::BTreeSet;
use std::sync::{Arc, LazyLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::clock::Clock;
use crate::detector::{DetectError, Detector, DetectorConfig, DetectorMode};
use crate::gateway::{BackendError, ChatBackend, CompletionRequest};
use crate::prompt::{
    extract_plan, gate_reply, strip_annotations, PromptError, PromptOptions, PromptTemplates, ResponseParser,
};
use crate::session::{
    check_feasibility, ActionPlan, AgentMessage, ApplyError, EventBody, Extraction, Feasibility, Resource, SessionLog,
    StepStatus,
};
use crate::stage::{next_stage, resolve, Stage, TransitionSignal};
use crate::text::fold_chars;

static STEP_REF: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(not\s+)?steps?\s+(\d{1,2})\b").expect("valid regex"));

/// Engine-wide dialogue settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueConfig {
    /// Withhold suggestions before the Action stage.
    pub gating: bool,
    /// Ask the model for a reasoning block.
    pub thinking: bool,
    /// Put stage markers and stage instructions in the prompt.
    pub stage_info: bool,
    /// History entries included in each prompt.
    pub history_window: usize,
    /// Fixed reply for every Crisis-stage turn.
    pub crisis_referral: String,
    /// Fixed reply for the turn that closes the session.
    pub closing_reply: String,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            gating: true,
            thinking: true,
            stage_info: true,
            history_window: 8,
            crisis_referral: "It sounds like you may be in danger right now, and your safety comes first. \
                Please contact your local emergency number or a crisis hotline immediately. \
                If you can, reach out to someone you trust and stay with them."
                .to_string(),
            closing_reply: "Thank you for sharing with me today. Take care of yourself.".to_string(),
        }
    }
}

/// Per-session switches, defaulting to the engine's configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionFlags {
    pub gating: Option<bool>,
    pub thinking: Option<bool>,
    pub stage_info: Option<bool>,
    pub detector_mode: Option<DetectorMode>,
}

/// Switches in effect for one turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveFlags {
    pub gating: bool,
    pub thinking: bool,
    pub stage_info: bool,
    pub detector_mode: DetectorMode,
}

/// Feasibility of one proposed step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub step: u32,
    #[serde(flatten)]
    pub feasibility: Feasibility,
}

/// A plan proposed this turn, with a verdict per step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedPlan {
    /// Position in the session's plan list.
    pub plan_index: usize,
    pub plan: ActionPlan,
    pub verdicts: Vec<StepVerdict>,
}

/// A status change the user's message made to an earlier plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepUpdate {
    pub plan: usize,
    pub step: u32,
    pub status: StepStatus,
}

/// What one user message produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnResult {
    pub turn_index: u64,
    pub reply: String,
    pub stage_before: Stage,
    pub stage_after: Stage,
    pub signal: TransitionSignal,
    pub reasoning_chain: Option<String>,
    /// Suggestion sentences in `reply`.
    pub suggestions: Vec<String>,
    /// Suggestion sentences withheld by gating.
    pub suppressed: Vec<String>,
    pub plan: Option<ProposedPlan>,
    pub step_updates: Vec<StepUpdate>,
    pub degraded_flags: BTreeSet<String>,
    /// The model was not called this turn (crisis or closure).
    pub model_skipped: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum TurnError {
    #[error("session is closed")]
    SessionClosed,
    #[error("message text is empty")]
    EmptyText,
    /// The turn's user message, signal and transition stay in the log.
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("session log rejected an event: {0}")]
    Log(#[from] ApplyError),
    #[error("detector configuration: {0}")]
    Config(String),
}

impl From<DetectError> for TurnError {
    fn from(e: DetectError) -> Self {
        match e {
            DetectError::SessionClosed => TurnError::SessionClosed,
            DetectError::EmptyUtterance => TurnError::EmptyText,
            DetectError::Config(msg) => TurnError::Config(msg),
        }
    }
}

/// Immutable, shareable pipeline components.
#[derive(Clone)]
pub struct Engine {
    detector: Detector,
    templates: Arc<PromptTemplates>,
    parser: Arc<ResponseParser>,
    backend: Arc<dyn ChatBackend>,
    dialogue: DialogueConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("detector", &self.detector)
            .field("dialogue", &self.dialogue)
            .finish()
    }
}

impl Engine {
    pub fn new(
        detector: Detector,
        templates: Arc<PromptTemplates>,
        parser: Arc<ResponseParser>,
        backend: Arc<dyn ChatBackend>,
        dialogue: DialogueConfig,
    ) -> Self {
        Engine {
            detector,
            templates,
            parser,
            backend,
            dialogue,
        }
    }

    /// Engine over the bundled lexicon, templates and fallback lines.
    pub fn bundled(backend: Arc<dyn ChatBackend>, detector: DetectorConfig, dialogue: DialogueConfig) -> Self {
        let lexicon = Arc::new(crate::detector::CueLexicon::bundled());
        let parser = ResponseParser::new(lexicon.suggestion.clone(), crate::prompt::FallbackLines::bundled());
        Engine::new(
            Detector::new(lexicon, detector),
            Arc::new(PromptTemplates::bundled()),
            Arc::new(parser),
            backend,
            dialogue,
        )
    }

    /// Same components, different response backend.
    pub fn with_backend(&self, backend: Arc<dyn ChatBackend>) -> Self {
        Engine {
            backend,
            ..self.clone()
        }
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn parser(&self) -> &ResponseParser {
        &self.parser
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    pub fn backend(&self) -> &Arc<dyn ChatBackend> {
        &self.backend
    }

    pub fn dialogue(&self) -> &DialogueConfig {
        &self.dialogue
    }

    pub fn effective(&self, flags: &SessionFlags) -> EffectiveFlags {
        EffectiveFlags {
            gating: flags.gating.unwrap_or(self.dialogue.gating),
            thinking: flags.thinking.unwrap_or(self.dialogue.thinking),
            stage_info: flags.stage_info.unwrap_or(self.dialogue.stage_info),
            detector_mode: flags.detector_mode.unwrap_or(self.detector.config().mode),
        }
    }

    /// Records the user's declared resources before the first turn.
    pub fn seed_resources(
        &self,
        log: &mut SessionLog,
        resources: &[Resource],
        clock: &dyn Clock,
    ) -> Result<(), ApplyError> {
        if !resources.is_empty() {
            log.record(
                EventBody::Extraction(Extraction {
                    resources: resources.to_vec(),
                    ..Extraction::default()
                }),
                clock,
            )?;
        }
        Ok(())
    }

    /// Runs one turn against `log`. Order: user message, plan feedback,
    /// detection, resolution, transition, then either the fixed crisis or
    /// closing reply or a model round trip (prompt, complete, parse, gate,
    /// plan extraction), and finally the extraction, agent message and plan
    /// events.
    ///
    /// If the backend fails, the events recorded up to the transition stay
    /// in the log and the stage is not rolled back.
    pub fn handle_message(
        &self,
        log: &mut SessionLog,
        text: &str,
        flags: &SessionFlags,
        clock: &dyn Clock,
    ) -> Result<TurnResult, TurnError> {
        if log.state().stage == Stage::Closed {
            return Err(TurnError::SessionClosed);
        }
        if text.trim().is_empty() {
            return Err(TurnError::EmptyText);
        }
        let flags = self.effective(flags);
        let mut degraded = BTreeSet::new();

        log.record(EventBody::UserMsg { text: text.to_string() }, clock)?;
        let step_updates = self.plan_feedback(log, text, clock)?;

        let detector = if flags.detector_mode == self.detector.config().mode {
            self.detector.clone()
        } else {
            self.detector.with_mode(flags.detector_mode)
        };
        let detection = detector.detect(log.state(), text)?;
        if let Some(reason) = &detection.degraded {
            debug!(%reason, "detection degraded");
            degraded.insert("classifier_degraded".to_string());
        }
        log.record(detection.to_event(), clock)?;

        let stage_before = log.state().stage;
        let signal = resolve(stage_before, &detection.candidates).expect("detection always has candidates");
        let stage_after = next_stage(stage_before, signal.kind);
        log.record(
            EventBody::Transition {
                from: stage_before,
                signal: signal.clone(),
                to: stage_after,
            },
            clock,
        )?;
        if stage_before != stage_after && (stage_before == Stage::Crisis || stage_after == Stage::Crisis) {
            log.record(
                EventBody::CrisisFlag {
                    active: stage_after == Stage::Crisis,
                },
                clock,
            )?;
        }

        let turn_index = log.state().turn_index;
        let mut result = TurnResult {
            turn_index,
            reply: String::new(),
            stage_before,
            stage_after,
            signal,
            reasoning_chain: None,
            suggestions: Vec::new(),
            suppressed: Vec::new(),
            plan: None,
            step_updates,
            degraded_flags: BTreeSet::new(),
            model_skipped: false,
        };

        if matches!(stage_after, Stage::Crisis | Stage::Closed) {
            let reply = if stage_after == Stage::Crisis {
                self.dialogue.crisis_referral.clone()
            } else {
                log.record(
                    EventBody::Closure {
                        reason: result.signal.kind.as_str().to_string(),
                    },
                    clock,
                )?;
                self.dialogue.closing_reply.clone()
            };
            log.record(
                EventBody::AgentMsg(AgentMessage {
                    reply: reply.clone(),
                    stage: stage_after,
                    reasoning_chain: None,
                    stage_echo: None,
                    suggestions: Vec::new(),
                    suppressed: Vec::new(),
                    degraded: degraded.iter().cloned().collect(),
                }),
                clock,
            )?;
            result.reply = reply;
            result.model_skipped = true;
            result.degraded_flags = degraded;
            return Ok(result);
        }

        let bundle = self.templates.build_prompt(
            log.state(),
            stage_after,
            PromptOptions {
                thinking: flags.thinking,
                stage_info: flags.stage_info,
                window: self.dialogue.history_window,
            },
        )?;
        let messages = bundle.messages();
        let raw = self
            .backend
            .complete(&CompletionRequest::new(&messages, turn_index))
            .inspect_err(|e| warn!(error = %e, turn = turn_index, "response backend failed"))?;

        let parsed = self.parser.parse(&raw, flags.thinking);
        degraded.extend(parsed.degraded.iter().cloned());
        if let Some(echo) = &parsed.stage_echo {
            if flags.stage_info && echo.stage != stage_after {
                degraded.insert("stage_echo_mismatch".to_string());
            }
        }
        let gated = gate_reply(stage_after, &parsed, flags.gating, &self.parser);
        let plan = extract_plan(&gated.final_reply, turn_index);
        let reply = strip_annotations(&gated.final_reply).trim().to_string();
        let suggestions = self.parser.suggestion_sentences(&reply);

        if !parsed.extractions.is_empty() {
            log.record(EventBody::Extraction(parsed.extractions.clone()), clock)?;
        }
        log.record(
            EventBody::AgentMsg(AgentMessage {
                reply: reply.clone(),
                stage: stage_after,
                reasoning_chain: parsed.reasoning_chain.clone(),
                stage_echo: parsed.stage_echo.clone(),
                suggestions: suggestions.clone(),
                suppressed: gated.suppressed.clone(),
                degraded: degraded.iter().cloned().collect(),
            }),
            clock,
        )?;

        if let Some(mut plan) = plan {
            let resources = log.state().resources.clone();
            let verdicts: Vec<StepVerdict> = plan
                .steps
                .iter_mut()
                .map(|step| {
                    let feasibility = check_feasibility(step, &resources);
                    if !feasibility.is_feasible() {
                        step.status = StepStatus::Infeasible;
                        step.status_turn = Some(turn_index);
                    }
                    StepVerdict {
                        step: step.index,
                        feasibility,
                    }
                })
                .collect();
            log.record(EventBody::PlanProposed { plan: plan.clone() }, clock)?;
            result.plan = Some(ProposedPlan {
                plan_index: log.state().plans.len() - 1,
                plan,
                verdicts,
            });
        }

        result.reply = reply;
        result.reasoning_chain = parsed.reasoning_chain;
        result.suggestions = suggestions;
        result.suppressed = gated.suppressed;
        result.degraded_flags = degraded;
        Ok(result)
    }

    /// Reads acceptance or rejection of the latest plan's proposed steps.
    /// "step N" narrows the answer to the named steps; "not step N" rejects
    /// that step; an answer naming no step applies to every proposed step.
    fn plan_feedback(&self, log: &mut SessionLog, text: &str, clock: &dyn Clock) -> Result<Vec<StepUpdate>, TurnError> {
        let Some((plan_index, plan)) = log.state().latest_plan() else {
            return Ok(Vec::new());
        };
        let open: Vec<u32> = plan
            .steps
            .iter()
            .filter(|s| s.status == StepStatus::Proposed)
            .map(|s| s.index)
            .collect();
        if open.is_empty() {
            return Ok(Vec::new());
        }
        let folded = fold_chars(text);
        let cues = &self.detector.lexicon().plan_feedback;
        let accepts = cues.accept.iter().any(|p| p.is_match(&folded));
        let rejects = cues.reject.iter().any(|p| p.is_match(&folded));
        if !accepts && !rejects {
            return Ok(Vec::new());
        }

        let mut named: Vec<(u32, StepStatus)> = Vec::new();
        for caps in STEP_REF.captures_iter(text) {
            let Ok(step) = caps[2].parse::<u32>() else { continue };
            let status = if caps.get(1).is_some() || !accepts {
                StepStatus::Rejected
            } else {
                StepStatus::Accepted
            };
            if !named.iter().any(|(s, _)| *s == step) {
                named.push((step, status));
            }
        }
        if named.is_empty() {
            let status = if accepts {
                StepStatus::Accepted
            } else {
                StepStatus::Rejected
            };
            named = open.iter().map(|s| (*s, status)).collect();
        }

        let mut updates = Vec::new();
        for (step, status) in named {
            if !open.contains(&step) {
                continue;
            }
            log.record(
                EventBody::StepStatus {
                    plan: plan_index,
                    step,
                    status,
                },
                clock,
            )?;
            updates.push(StepUpdate {
                plan: plan_index,
                step,
                status,
            });
        }
        Ok(updates)
    }
}
