use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gateway::ChatMessage;
use crate::session::{HistoryEntry, SessionState, Speaker};
use crate::stage::Stage;

pub const BUNDLED_PROMPTS: &str = include_str!("../../assets/prompts.toml");

/// Stage marker tokens, one per promptable stage.
pub const STAGE_MARKERS: [&str; 4] = ["<Exploration>", "<Insight>", "<Action>", "<Crisis>"];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("cannot build a prompt for a closed session")]
    ClosedStage,
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing templates: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("template {template} lacks placeholder {placeholder}")]
    MissingPlaceholder {
        template: &'static str,
        placeholder: &'static str,
    },
    #[error("no instructions for stage {0}")]
    MissingStage(Stage),
    #[error("template text must not contain stage marker {0}")]
    StrayMarker(String),
    #[error("fallback lines must not be empty")]
    EmptyFallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct StageText {
    instructions: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
struct NeutralText {
    instructions: String,
    stage_title: String,
}

/// Template set loaded from a prompts document.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct PromptTemplates {
    pub version: u32,
    system: String,
    context: String,
    thinking: String,
    output_format: String,
    stages: BTreeMap<Stage, StageText>,
    neutral: NeutralText,
}

/// Knobs for [`PromptTemplates::build_prompt`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptOptions {
    /// Ask for a delimited reasoning block before the reply.
    pub thinking: bool,
    /// Include the stage marker and stage-specific instructions.
    pub stage_info: bool,
    /// History entries to include.
    pub window: usize,
}

impl Default for PromptOptions {
    fn default() -> Self {
        PromptOptions {
            thinking: true,
            stage_info: true,
            window: 8,
        }
    }
}

/// A rendered prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    /// `None` when stage information is withheld.
    pub stage: Option<Stage>,
    pub system_text: String,
    pub state_summary: String,
    pub history: Vec<HistoryEntry>,
    pub stage_instructions: String,
    pub thinking_enabled: bool,
    pub context_text: String,
}

impl PromptBundle {
    /// System prompt followed by the conversation context.
    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(self.system_text.clone()),
            ChatMessage::user(self.context_text.clone()),
        ]
    }

    /// Stage markers present in the system text, with multiplicity.
    pub fn marker_count(&self) -> usize {
        STAGE_MARKERS.iter().map(|m| self.system_text.matches(m).count()).sum()
    }
}

pub fn stage_marker(stage: Stage) -> Option<&'static str> {
    match stage {
        Stage::Exploration => Some(STAGE_MARKERS[0]),
        Stage::Insight => Some(STAGE_MARKERS[1]),
        Stage::Action => Some(STAGE_MARKERS[2]),
        Stage::Crisis => Some(STAGE_MARKERS[3]),
        Stage::Closed => None,
    }
}

fn fill(template: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in pairs {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

impl PromptTemplates {
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_PROMPTS).expect("bundled prompts are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(src: &str) -> Result<Self, PromptError> {
        let t: PromptTemplates = toml::from_str(src)?;
        let required: [(&'static str, &str, &'static [&'static str]); 3] = [
            (
                "system",
                &t.system,
                &[
                    "{stage_marker}",
                    "{stage_instructions}",
                    "{thinking_instructions}",
                    "{state_summary}",
                ],
            ),
            ("context", &t.context, &["{history}"]),
            ("thinking", &t.thinking, &["{stage_title}"]),
        ];
        for (template, text, placeholders) in required {
            for placeholder in placeholders {
                if !text.contains(placeholder) {
                    return Err(PromptError::MissingPlaceholder { template, placeholder });
                }
            }
        }
        for stage in [Stage::Exploration, Stage::Insight, Stage::Action, Stage::Crisis] {
            if !t.stages.contains_key(&stage) {
                return Err(PromptError::MissingStage(stage));
            }
        }
        let all_text = [
            &t.system,
            &t.context,
            &t.thinking,
            &t.output_format,
            &t.neutral.instructions,
        ]
        .into_iter()
        .chain(t.stages.values().map(|s| &s.instructions));
        for text in all_text {
            if let Some(m) = STAGE_MARKERS.iter().find(|m| text.contains(*m)) {
                return Err(PromptError::StrayMarker(m.to_string()));
            }
        }
        Ok(t)
    }

    /// Instructions for `stage`.
    pub fn stage_instructions(&self, stage: Stage) -> Option<&str> {
        self.stages.get(&stage).map(|s| s.instructions.as_str())
    }

    /// Assembles the prompt for a turn generated under `stage`.
    pub fn build_prompt(
        &self,
        state: &SessionState,
        stage: Stage,
        opts: PromptOptions,
    ) -> Result<PromptBundle, PromptError> {
        let marker = stage_marker(stage).ok_or(PromptError::ClosedStage)?;
        let (marker, instructions, title) = if opts.stage_info {
            let instructions = self.stage_instructions(stage).ok_or(PromptError::MissingStage(stage))?;
            (marker, instructions.to_string(), stage.title().to_string())
        } else {
            ("", self.neutral.instructions.clone(), self.neutral.stage_title.clone())
        };
        let thinking = if opts.thinking {
            fill(&self.thinking, &[("stage_title", &title)])
        } else {
            String::new()
        };
        let summary = strip_markers(&state_summary(state));
        let system_text = fill(
            &self.system,
            &[
                ("stage_marker", marker),
                ("stage_instructions", &instructions),
                ("thinking_instructions", &thinking),
                ("state_summary", &summary),
                ("output_format", &self.output_format),
            ],
        );
        let history = state.recent_history(opts.window).to_vec();
        let context_text = fill(&self.context, &[("history", &render_history(&history))]);
        Ok(PromptBundle {
            stage: opts.stage_info.then_some(stage),
            system_text,
            state_summary: summary,
            history,
            stage_instructions: instructions,
            thinking_enabled: opts.thinking,
            context_text,
        })
    }
}

/// Removes stage marker tokens from user-derived text so it cannot add a
/// second marker to the system prompt.
fn strip_markers(text: &str) -> String {
    let mut out = text.to_string();
    loop {
        let before = out.len();
        for m in STAGE_MARKERS {
            out = out.replace(m, "");
        }
        if out.len() == before {
            return out;
        }
    }
}

fn list_or_none(items: Vec<String>) -> String {
    if items.is_empty() {
        "none yet".to_string()
    } else {
        items.join(", ")
    }
}

/// Plain-text digest of what the session has learned about the user.
pub fn state_summary(state: &SessionState) -> String {
    let stressors = state
        .stressors
        .iter()
        .map(|s| {
            if s.surfaced {
                format!("{} (acknowledged)", s.label)
            } else {
                s.label.clone()
            }
        })
        .collect();
    let resources = state
        .resources
        .iter()
        .map(|r| match r.capacity_minutes_per_day {
            Some(m) => format!("{} ({m} min/day)", r.tag),
            None => format!("{} (unbounded)", r.tag),
        })
        .collect();
    format!(
        "Emotional keywords: {}\nSemantic foci: {}\nStressors: {}\nResources: {}",
        list_or_none(state.emotional_keywords.iter().cloned().collect()),
        list_or_none(state.semantic_foci.iter().cloned().collect()),
        list_or_none(stressors),
        list_or_none(resources),
    )
}

fn render_history(history: &[HistoryEntry]) -> String {
    if history.is_empty() {
        return "(no messages yet)".to_string();
    }
    history
        .iter()
        .map(|h| match h.speaker {
            Speaker::User => format!("user: {}", h.text),
            Speaker::Agent => format!("agent: {}", h.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}
