//! Stage-marked prompt assembly, response parsing, suggestion gating and
//! action-plan extraction.

mod gate;
mod parse;
mod plan;
mod template;

use std::path::Path;

use serde::Deserialize;

pub use gate::{gate_reply, gates_suggestions, GatedReply};
pub use parse::{
    parse_extraction, ParsedResponse, ResponseParser, REASONING_CLOSE, REASONING_OPEN, STATE_CLOSE, STATE_OPEN,
};
pub use plan::{extract_plan, strip_annotations, DEFAULT_MINUTES, DEFAULT_TAG};
pub use template::{
    stage_marker, state_summary, PromptBundle, PromptError, PromptOptions, PromptTemplates, BUNDLED_PROMPTS,
    STAGE_MARKERS,
};

pub const BUNDLED_FALLBACKS: &str = include_str!("../../assets/fallbacks.toml");

/// Empathic lines substituted for an empty or fully gated reply.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct FallbackLines {
    pub version: u32,
    pub default: String,
    pub exploration: String,
    pub insight: String,
    pub action: String,
    pub crisis: String,
}

impl FallbackLines {
    pub fn bundled() -> Self {
        Self::from_toml(BUNDLED_FALLBACKS).expect("bundled fallbacks are valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml(src: &str) -> Result<Self, PromptError> {
        let lines: FallbackLines = toml::from_str(src)?;
        for line in [
            &lines.default,
            &lines.exploration,
            &lines.insight,
            &lines.action,
            &lines.crisis,
        ] {
            if line.trim().is_empty() {
                return Err(PromptError::EmptyFallback);
            }
        }
        Ok(lines)
    }
}
