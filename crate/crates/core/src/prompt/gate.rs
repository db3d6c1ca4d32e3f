use serde::{Deserialize, Serialize};

use crate::stage::Stage;
use crate::text::sentences;

use super::{FallbackLines, ParsedResponse, ResponseParser};

/// Reply after premature-suggestion gating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatedReply {
    pub final_reply: String,
    pub suppressed: Vec<String>,
}

/// Stages in which suggestions are withheld.
pub fn gates_suggestions(stage: Stage) -> bool {
    matches!(stage, Stage::Exploration | Stage::Insight)
}

/// Removes suggestion sentences from Exploration and Insight replies. When
/// nothing is left, the stage's fallback line is used instead. Other stages,
/// and every stage when `enabled` is false, pass the reply through.
pub fn gate_reply(stage: Stage, parsed: &ParsedResponse, enabled: bool, parser: &ResponseParser) -> GatedReply {
    if !enabled || !gates_suggestions(stage) {
        return GatedReply {
            final_reply: parsed.reply.clone(),
            suppressed: Vec::new(),
        };
    }
    let (suppressed, kept): (Vec<&str>, Vec<&str>) = sentences(&parsed.reply)
        .into_iter()
        .partition(|s| parser.suggestion_lexicon().is_suggestion(s));
    let final_reply = if suppressed.is_empty() {
        parsed.reply.clone()
    } else if kept.is_empty() {
        parser.fallbacks().for_stage(stage).to_string()
    } else {
        kept.join(" ")
    };
    GatedReply {
        final_reply,
        suppressed: suppressed.into_iter().map(str::to_string).collect(),
    }
}

impl FallbackLines {
    pub fn for_stage(&self, stage: Stage) -> &str {
        match stage {
            Stage::Exploration => &self.exploration,
            Stage::Insight => &self.insight,
            Stage::Action => &self.action,
            Stage::Crisis => &self.crisis,
            Stage::Closed => &self.default,
        }
    }
}
