use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::clock::LogicalClock;
use crate::engine::{EffectiveFlags, Engine, SessionFlags, TurnError, TurnResult};
use crate::gateway::{ChatBackend, ScriptedBackend};
use crate::session::{SessionEvent, SessionLog};
use crate::stage::Stage;

use super::metrics::{aggregate, score, AggregateMetrics, MetricsReport};
use super::persona::{simulate_turn, AgentView, LoadedPersona, Persona, PersonaMove, PersonaState};

/// Why a dialogue stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndReason {
    Closed,
    /// The turn cap was reached with the session in crisis.
    CrisisUnresolved,
    TurnCap,
}

/// A finished simulated dialogue.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub persona_id: String,
    pub flags: EffectiveFlags,
    pub events: Vec<SessionEvent>,
    pub turns: Vec<TurnResult>,
    pub persona_moves: Vec<PersonaMove>,
    pub end: EndReason,
    /// Ended by the turn cap rather than by closure.
    pub truncated: bool,
    pub final_stage: Stage,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("persona {persona}, turn {turn}: {source}")]
    Turn {
        persona: String,
        turn: u64,
        #[source]
        source: TurnError,
    },
    #[error("persona {persona}: {reason}")]
    Setup { persona: String, reason: String },
    #[error(transparent)]
    Persona(#[from] super::persona::PersonaError),
}

/// Runs `persona` against `engine` until the session closes or the
/// persona's turn cap is hit. Timestamps come from a logical clock and the
/// session id is `eval-<persona_id>`, so equal inputs give byte-identical
/// logs.
pub fn run_dialogue(persona: &Persona, engine: &Engine, flags: &SessionFlags) -> Result<Transcript, EvalError> {
    let clock = LogicalClock::default();
    let mut log = SessionLog::new(format!("eval-{}", persona.persona_id));
    engine
        .seed_resources(&mut log, &persona.resources, &clock)
        .map_err(|e| EvalError::Setup {
            persona: persona.persona_id.clone(),
            reason: e.to_string(),
        })?;

    let cap = persona.turn_cap();
    let mut persona_state = PersonaState::new();
    let mut turns: Vec<TurnResult> = Vec::new();
    let mut moves = Vec::new();
    let mut end = EndReason::TurnCap;

    while (turns.len() as u64) < cap {
        let view = turns.last().map(AgentView::from);
        let (utterance, next_state) = simulate_turn(persona, &persona_state, view.as_ref());
        persona_state = next_state;
        moves.push(utterance.rule);
        let result = engine
            .handle_message(&mut log, &utterance.utterance, flags, &clock)
            .map_err(|source| EvalError::Turn {
                persona: persona.persona_id.clone(),
                turn: log.state().turn_index,
                source,
            })?;
        let closed = result.stage_after == Stage::Closed;
        turns.push(result);
        if closed {
            end = EndReason::Closed;
            break;
        }
    }
    let final_stage = log.state().stage;
    if end == EndReason::TurnCap && final_stage == Stage::Crisis {
        end = EndReason::CrisisUnresolved;
    }
    Ok(Transcript {
        persona_id: persona.persona_id.clone(),
        flags: engine.effective(flags),
        events: log.events().to_vec(),
        turns,
        persona_moves: moves,
        end,
        truncated: end != EndReason::Closed,
        final_stage,
    })
}

/// Engine for `persona`: its own script when it names one, else `engine`.
pub fn engine_for(persona: &LoadedPersona, engine: &Engine) -> Result<Engine, EvalError> {
    match &persona.script_path {
        Some(path) => {
            let script = ScriptedBackend::load(path).map_err(|e| EvalError::Setup {
                persona: persona.persona.persona_id.clone(),
                reason: e.to_string(),
            })?;
            Ok(engine.with_backend(Arc::new(script) as Arc<dyn ChatBackend>))
        }
        None => Ok(engine.clone()),
    }
}

impl Transcript {
    pub fn score(&self, persona: &Persona, engine: &Engine) -> MetricsReport {
        score(
            &self.events,
            persona,
            engine.parser().suggestion_lexicon(),
            self.final_stage,
            self.truncated,
        )
    }

    /// The event log as newline-delimited records.
    pub fn to_jsonl(&self) -> String {
        crate::session::to_jsonl(&self.events)
    }
}

/// Per-dialogue reports plus their means, for one flag setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmReport {
    pub name: String,
    pub flags: SessionFlags,
    pub dialogues: Vec<MetricsReport>,
    pub aggregate: AggregateMetrics,
}

/// Runs every persona under `flags`.
pub fn run_arm(
    name: &str,
    personas: &[LoadedPersona],
    engine: &Engine,
    flags: SessionFlags,
) -> Result<(ArmReport, Vec<Transcript>), EvalError> {
    let mut reports = Vec::new();
    let mut transcripts = Vec::new();
    for p in personas {
        let engine = engine_for(p, engine)?;
        let t = run_dialogue(&p.persona, &engine, &flags)?;
        reports.push(t.score(&p.persona, &engine));
        transcripts.push(t);
    }
    Ok((
        ArmReport {
            name: name.to_string(),
            flags,
            aggregate: aggregate(&reports),
            dialogues: reports,
        },
        transcripts,
    ))
}

/// Which module an ablation switches off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationAxis {
    /// No stage markers or stage instructions, and no gating.
    Stage,
    /// No reasoning block.
    Thinking,
    Both,
}

impl AblationAxis {
    pub fn variant_flags(self) -> SessionFlags {
        let no_stage = SessionFlags {
            stage_info: Some(false),
            gating: Some(false),
            ..SessionFlags::default()
        };
        match self {
            AblationAxis::Stage => no_stage,
            AblationAxis::Thinking => SessionFlags {
                thinking: Some(false),
                ..SessionFlags::default()
            },
            AblationAxis::Both => SessionFlags {
                thinking: Some(false),
                ..no_stage
            },
        }
    }
}

impl std::str::FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stage" => Ok(AblationAxis::Stage),
            "thinking" => Ok(AblationAxis::Thinking),
            "both" => Ok(AblationAxis::Both),
            other => Err(format!("unknown ablation {other:?}; expected stage, thinking or both")),
        }
    }
}

/// One persona's metrics in both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetrics {
    pub persona_id: String,
    pub baseline: MetricsReport,
    pub variant: MetricsReport,
    /// `variant - baseline`.
    pub delta: AggregateMetrics,
}

/// Baseline and variant arms with paired deltas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeReport {
    pub baseline: ArmReport,
    pub variant: ArmReport,
    pub paired: Vec<PairedMetrics>,
    /// `variant.aggregate - baseline.aggregate`.
    pub delta: AggregateMetrics,
    /// False when the arms did not cover the same personas.
    pub comparable: bool,
}

/// Pairs two arms persona by persona.
pub fn compare(baseline: ArmReport, variant: ArmReport) -> ComparativeReport {
    let same_ids = baseline.dialogues.len() == variant.dialogues.len()
        && baseline
            .dialogues
            .iter()
            .zip(&variant.dialogues)
            .all(|(a, b)| a.persona_id == b.persona_id);
    let paired = if same_ids {
        baseline
            .dialogues
            .iter()
            .zip(&variant.dialogues)
            .map(|(a, b)| PairedMetrics {
                persona_id: a.persona_id.clone(),
                baseline: a.clone(),
                variant: b.clone(),
                delta: AggregateMetrics::from(b).minus(&AggregateMetrics::from(a)),
            })
            .collect()
    } else {
        Vec::new()
    };
    ComparativeReport {
        delta: variant.aggregate.minus(&baseline.aggregate),
        comparable: same_ids,
        paired,
        baseline,
        variant,
    }
}

/// Runs every persona with `baseline` and with `variant` flags.
pub fn run_ablation(
    personas: &[LoadedPersona],
    engine: &Engine,
    baseline: SessionFlags,
    variant: SessionFlags,
) -> Result<ComparativeReport, EvalError> {
    let (base, _) = run_arm("baseline", personas, engine, baseline)?;
    let (var, _) = run_arm("variant", personas, engine, variant)?;
    Ok(compare(base, var))
}
