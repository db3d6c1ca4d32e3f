use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{ProposedPlan, TurnResult};
use crate::session::Resource;
use crate::stage::Stage;
use crate::text::{causal_chains, contains_ci, contains_token_run, sentences};

/// Default dialogue length limit, in user turns.
pub const DEFAULT_TURN_CAP: u64 = 30;

/// Phrases by which a simulated user signals that an explanation landed.
pub const ACKNOWLEDGMENT_CUES: [&str; 7] = [
    "that makes sense",
    "you're right",
    "i never thought of it that way",
    "i see the connection",
    "now i understand",
    "that explains",
    "i hadn't noticed",
];

/// Sentence markers of an analogy or metaphor.
pub const METAPHOR_MARKERS: [&str; 6] = ["resemble", "is like", "as if", "reminds", "similar to", "like a"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenStressor {
    pub label: String,
    /// Substrings of an agent turn that prompt the reveal.
    pub reveal_patterns: Vec<String>,
    /// What the persona says when revealing it.
    pub reveal_line: String,
}

/// A scripted simulated user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub persona_id: String,
    pub opening_line: String,
    pub hidden_stressors: Vec<HiddenStressor>,
    pub root_cause: String,
    /// User turn indices on which the persona deflects.
    #[serde(default)]
    pub avoidance_turns: BTreeSet<u64>,
    #[serde(default = "default_avoidance_line")]
    pub avoidance_line: String,
    /// Said when advice arrives before the persona has come round.
    #[serde(default = "default_resistance_line")]
    pub resistance_line: String,
    /// `{steps}` is replaced by the accepted steps, e.g. "step 1 and step 2".
    #[serde(default = "default_acceptance_line")]
    pub acceptance_line: String,
    #[serde(default = "default_acknowledgment_line")]
    pub acknowledgment_line: String,
    /// Cycled when no other rule fires.
    #[serde(default)]
    pub filler_lines: Vec<String>,
    /// Said on the turn after a plan was accepted.
    #[serde(default)]
    pub closing_line: Option<String>,
    /// Said while the session is in crisis.
    #[serde(default)]
    pub crisis_resolution_line: Option<String>,
    #[serde(default)]
    pub resources: Vec<Resource>,
    #[serde(default)]
    pub turn_cap: Option<u64>,
    /// Scripted backend file for this persona, relative to the persona file.
    #[serde(default)]
    pub script: Option<String>,
}

fn default_avoidance_line() -> String {
    "I don't want to talk about that.".to_string()
}

fn default_resistance_line() -> String {
    "I've already tried things like that. It won't work for me.".to_string()
}

fn default_acceptance_line() -> String {
    "Okay, I can do {steps}.".to_string()
}

fn default_acknowledgment_line() -> String {
    "That makes sense.".to_string()
}

#[derive(Debug, thiserror::Error)]
pub enum PersonaError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("persona {id}: {reason}")]
    Invalid { id: String, reason: String },
}

impl Persona {
    pub fn from_toml(src: &str) -> Result<Self, PersonaError> {
        let persona: Persona = toml::from_str(src).map_err(|source| PersonaError::Parse {
            path: PathBuf::from("<inline>"),
            source,
        })?;
        persona.validate()?;
        Ok(persona)
    }

    pub fn validate(&self) -> Result<(), PersonaError> {
        let invalid = |reason: &str| PersonaError::Invalid {
            id: self.persona_id.clone(),
            reason: reason.to_string(),
        };
        if self.persona_id.trim().is_empty() {
            return Err(invalid("persona_id is empty"));
        }
        if self.opening_line.trim().is_empty() {
            return Err(invalid("opening_line is empty"));
        }
        if self.hidden_stressors.is_empty() {
            return Err(invalid("at least one hidden stressor is required"));
        }
        let anchored = self.hidden_stressors.iter().any(|s| {
            contains_token_run(&s.label, &self.root_cause)
                || s.reveal_patterns
                    .iter()
                    .any(|p| contains_token_run(p, &self.root_cause))
        });
        if !anchored {
            return Err(invalid(
                "root_cause must appear in a hidden stressor label or reveal pattern",
            ));
        }
        if self.turn_cap == Some(0) {
            return Err(invalid("turn_cap must be positive"));
        }
        Ok(())
    }

    pub fn turn_cap(&self) -> u64 {
        self.turn_cap.unwrap_or(DEFAULT_TURN_CAP)
    }
}

/// A persona file and the script it names, resolved against its directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedPersona {
    pub persona: Persona,
    pub path: PathBuf,
    pub script_path: Option<PathBuf>,
}

pub fn load_persona(path: &Path) -> Result<LoadedPersona, PersonaError> {
    let src = std::fs::read_to_string(path).map_err(|source| PersonaError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let persona: Persona = toml::from_str(&src).map_err(|source| PersonaError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    persona.validate()?;
    let script_path = persona
        .script
        .as_ref()
        .map(|s| path.parent().unwrap_or(Path::new(".")).join(s));
    Ok(LoadedPersona {
        persona,
        path: path.to_path_buf(),
        script_path,
    })
}

/// Every `*.toml` persona in `dir`, ordered by persona id.
pub fn load_personas(dir: &Path) -> Result<Vec<LoadedPersona>, PersonaError> {
    let io = |source| PersonaError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            out.push(load_persona(&path)?);
        }
    }
    out.sort_by(|a, b| a.persona.persona_id.cmp(&b.persona.persona_id));
    Ok(out)
}

/// What the persona observes of the agent's last turn.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentView {
    pub stage: Stage,
    pub reply: String,
    pub reasoning_chain: Option<String>,
    pub suggestions: Vec<String>,
    pub plan: Option<ProposedPlan>,
}

impl From<&TurnResult> for AgentView {
    fn from(r: &TurnResult) -> Self {
        AgentView {
            stage: r.stage_after,
            reply: r.reply.clone(),
            reasoning_chain: r.reasoning_chain.clone(),
            suggestions: r.suggestions.clone(),
            plan: r.plan.clone(),
        }
    }
}

/// Mutable side of a persona during one dialogue.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaState {
    /// Index of the user turn about to be produced.
    pub next_turn: u64,
    pub revealed: BTreeSet<usize>,
    pub belief_flag: bool,
    pub acknowledged: bool,
    pub plan_accepted: bool,
    pub filler_index: usize,
}

/// Which rule produced an utterance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PersonaMove {
    Opening,
    CrisisResolution,
    Avoidance,
    Closing,
    Acceptance,
    Resistance,
    Acknowledgment,
    Reveal,
    Filler,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaTurn {
    pub utterance: String,
    pub rule: PersonaMove,
    pub accepted_steps: Vec<u32>,
}

impl PersonaState {
    pub fn new() -> Self {
        PersonaState {
            next_turn: 1,
            ..PersonaState::default()
        }
    }
}

/// An Insight-stage agent turn that ties the root cause into a causal chain.
pub fn turn_restructures(view: &AgentView, root_cause: &str) -> bool {
    if view.stage != Stage::Insight {
        return false;
    }
    [Some(view.reply.as_str()), view.reasoning_chain.as_deref()]
        .into_iter()
        .flatten()
        .flat_map(causal_chains)
        .any(|chain| chain.iter().any(|node| contains_token_run(node, root_cause)))
}

/// A sentence that draws an analogy and names the root cause.
pub fn metaphor_mentions(text: &str, root_cause: &str) -> bool {
    sentences(text)
        .into_iter()
        .any(|s| METAPHOR_MARKERS.iter().any(|m| contains_ci(s, m)) && contains_token_run(s, root_cause))
}

pub fn has_acknowledgment(text: &str) -> bool {
    ACKNOWLEDGMENT_CUES.iter().any(|c| contains_ci(text, c))
}

fn join_steps(steps: &[u32]) -> String {
    let names: Vec<String> = steps.iter().map(|s| format!("step {s}")).collect();
    match names.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Produces the persona's next utterance. The first call returns the
/// opening line; later calls react to `view` through a fixed cascade:
/// crisis resolution, avoidance turn, closing after an accepted plan, plan
/// acceptance, resistance to early advice, acknowledgment of a restructuring
/// turn, stressor reveal, filler.
pub fn simulate_turn(persona: &Persona, state: &PersonaState, view: Option<&AgentView>) -> (PersonaTurn, PersonaState) {
    let mut next = state.clone();
    let turn = state.next_turn.max(1);
    next.next_turn = turn + 1;
    let say = |utterance: &str, rule| PersonaTurn {
        utterance: utterance.to_string(),
        rule,
        accepted_steps: Vec::new(),
    };

    let Some(view) = view else {
        return (say(&persona.opening_line, PersonaMove::Opening), next);
    };

    let flipped_now = !state.belief_flag && turn_restructures(view, &persona.root_cause);
    if flipped_now {
        next.belief_flag = true;
    }

    if view.stage == Stage::Crisis {
        if let Some(line) = &persona.crisis_resolution_line {
            return (say(line, PersonaMove::CrisisResolution), next);
        }
    }
    if persona.avoidance_turns.contains(&turn) {
        return (say(&persona.avoidance_line, PersonaMove::Avoidance), next);
    }
    if state.plan_accepted {
        if let Some(line) = &persona.closing_line {
            return (say(line, PersonaMove::Closing), next);
        }
    }
    if let Some(proposed) = &view.plan {
        if view.stage == Stage::Action {
            let feasible: Vec<u32> = proposed
                .verdicts
                .iter()
                .filter(|v| v.feasibility.is_feasible())
                .map(|v| v.step)
                .collect();
            if !feasible.is_empty() {
                next.plan_accepted = true;
                let utterance = persona.acceptance_line.replace("{steps}", &join_steps(&feasible));
                return (
                    PersonaTurn {
                        utterance,
                        rule: PersonaMove::Acceptance,
                        accepted_steps: feasible,
                    },
                    next,
                );
            }
        }
    }
    if !view.suggestions.is_empty() && !next.belief_flag {
        return (say(&persona.resistance_line, PersonaMove::Resistance), next);
    }
    if flipped_now && !state.acknowledged {
        next.acknowledged = true;
        return (say(&persona.acknowledgment_line, PersonaMove::Acknowledgment), next);
    }
    if let Some((i, stressor)) = persona
        .hidden_stressors
        .iter()
        .enumerate()
        .find(|(i, _)| !state.revealed.contains(i))
    {
        let triggered = stressor
            .reveal_patterns
            .iter()
            .any(|p| contains_ci(&view.reply, p) || view.reasoning_chain.as_deref().is_some_and(|r| contains_ci(r, p)));
        if triggered {
            next.revealed.insert(i);
            return (say(&stressor.reveal_line, PersonaMove::Reveal), next);
        }
    }
    let filler = if persona.filler_lines.is_empty() {
        "I'm not sure what else to say.".to_string()
    } else {
        next.filler_index = state.filler_index + 1;
        persona.filler_lines[state.filler_index % persona.filler_lines.len()].clone()
    };
    (say(&filler, PersonaMove::Filler), next)
}
