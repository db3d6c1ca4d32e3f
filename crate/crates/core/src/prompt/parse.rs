use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::detector::SuggestionLexicon;
use crate::session::{Extraction, Resource, StageEcho};
use crate::text::{causal_chains, sentences};

use super::FallbackLines;

/// Opens the private reasoning block.
pub const REASONING_OPEN: &str = "<think>";
/// Closes the private reasoning block.
pub const REASONING_CLOSE: &str = "</think>";
/// Opens the trailing structured extraction block.
pub const STATE_OPEN: &str = "<state>";
/// Closes the trailing structured extraction block.
pub const STATE_CLOSE: &str = "</state>";

const DELIMITERS: [&str; 4] = [REASONING_OPEN, REASONING_CLOSE, STATE_OPEN, STATE_CLOSE];

static STAGE_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)current stage:\s*([a-z]+)\s*;\s*focus:\s*(.+?)\s*$").expect("valid regex"));

/// Model output split into its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub reasoning_chain: Option<String>,
    pub stage_echo: Option<StageEcho>,
    /// User-facing text; never empty.
    pub reply: String,
    /// Suggestion sentences in `reply`.
    pub suggestions: Vec<String>,
    pub extractions: Extraction,
    /// Parse problems, e.g. an unterminated reasoning block.
    pub degraded: Vec<String>,
}

impl ParsedResponse {
    /// Causal chains (two or more linked nodes) in the reasoning block.
    pub fn causal_chains(&self) -> Vec<Vec<String>> {
        self.reasoning_chain.as_deref().map(causal_chains).unwrap_or_default()
    }
}

/// Splits raw model output into reasoning, reply and extraction block.
#[derive(Debug, Clone)]
pub struct ResponseParser {
    suggestions: SuggestionLexicon,
    fallbacks: FallbackLines,
}

/// Removes every complete `open ... close` block from `text`, returning the
/// block contents. `dangling` is true when an opener has no closer after it;
/// the text after such an opener is left in place.
fn take_blocks(text: &mut String, open: &str, close: &str) -> (Vec<String>, bool) {
    let mut blocks = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find(open) {
        let start = from + rel;
        let body_start = start + open.len();
        match text[body_start..].find(close) {
            Some(rel_close) => {
                let body_end = body_start + rel_close;
                blocks.push(text[body_start..body_end].to_string());
                text.replace_range(start..body_end + close.len(), " ");
                from = start;
            }
            None => return (blocks, true),
        }
    }
    (blocks, false)
}

fn strip_delimiters(text: &mut String) {
    loop {
        let before = text.len();
        for d in DELIMITERS {
            *text = text.replace(d, "");
        }
        if text.len() == before {
            return;
        }
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses the extraction block grammar: one `key: a, b, c` line per field.
/// Resources are `tag=minutes`, `tag=unbounded` or a bare `tag` (unbounded).
pub fn parse_extraction(block: &str) -> Extraction {
    let mut x = Extraction::default();
    for line in block.lines() {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        match key.trim().to_ascii_lowercase().as_str() {
            "keywords" => x.keywords.extend(split_list(value)),
            "foci" => x.foci.extend(split_list(value)),
            "stressors" => x.stressors.extend(split_list(value)),
            "resources" => {
                for item in split_list(value) {
                    let (tag, cap) = match item.split_once('=') {
                        Some((t, c)) => (t.trim(), c.trim()),
                        None => (item.as_str(), "unbounded"),
                    };
                    if tag.is_empty() {
                        continue;
                    }
                    let capacity = match cap.parse::<u32>() {
                        Ok(m) => Some(m),
                        Err(_) if cap.eq_ignore_ascii_case("unbounded") => None,
                        Err(_) => continue,
                    };
                    x.resources.push(Resource {
                        tag: tag.to_string(),
                        capacity_minutes_per_day: capacity,
                    });
                }
            }
            _ => {}
        }
    }
    x
}

fn parse_stage_echo(chain: &str) -> Option<StageEcho> {
    chain.lines().find_map(|line| {
        let caps = STAGE_HEADER.captures(line.trim())?;
        let stage = caps[1].parse().ok()?;
        Some(StageEcho {
            stage,
            focus: caps[2].trim().trim_end_matches('.').to_string(),
        })
    })
}

impl ResponseParser {
    pub fn new(suggestions: SuggestionLexicon, fallbacks: FallbackLines) -> Self {
        ResponseParser { suggestions, fallbacks }
    }

    pub fn suggestion_lexicon(&self) -> &SuggestionLexicon {
        &self.suggestions
    }

    pub fn fallbacks(&self) -> &FallbackLines {
        &self.fallbacks
    }

    /// Suggestion sentences in `text`.
    pub fn suggestion_sentences(&self, text: &str) -> Vec<String> {
        sentences(text)
            .into_iter()
            .filter(|s| self.suggestions.is_suggestion(s))
            .map(str::to_string)
            .collect()
    }

    /// Never fails. Complete reasoning blocks are always removed from the
    /// reply; when `thinking` is off their content is discarded too.
    /// Delimiter tokens never survive into the reply.
    pub fn parse(&self, raw: &str, thinking: bool) -> ParsedResponse {
        let mut degraded = Vec::new();
        let mut rest = raw.to_string();

        let (reasoning, dangling_reasoning) = take_blocks(&mut rest, REASONING_OPEN, REASONING_CLOSE);
        if dangling_reasoning {
            degraded.push("unterminated_reasoning".to_string());
        }

        let (state_blocks, dangling_state) = take_blocks(&mut rest, STATE_OPEN, STATE_CLOSE);
        let mut extraction_src = state_blocks.join("\n");
        if dangling_state {
            degraded.push("unterminated_state".to_string());
            if let Some(pos) = rest.find(STATE_OPEN) {
                extraction_src.push('\n');
                extraction_src.push_str(&rest[pos + STATE_OPEN.len()..]);
                rest.truncate(pos);
            }
        }
        strip_delimiters(&mut extraction_src);
        strip_delimiters(&mut rest);

        let mut reply = rest.trim().to_string();
        if reply.is_empty() {
            degraded.push("empty_reply".to_string());
            reply = self.fallbacks.default.clone();
        }

        let reasoning_chain = if thinking && !reasoning.is_empty() {
            let mut joined = reasoning
                .iter()
                .map(|b| b.trim())
                .filter(|b| !b.is_empty())
                .collect::<Vec<_>>()
                .join("\n");
            strip_delimiters(&mut joined);
            Some(joined)
        } else {
            None
        };
        if thinking && reasoning_chain.is_none() {
            degraded.push("missing_reasoning".to_string());
        }
        let stage_echo = reasoning_chain.as_deref().and_then(parse_stage_echo);

        ParsedResponse {
            suggestions: self.suggestion_sentences(&reply),
            reasoning_chain,
            stage_echo,
            reply,
            extractions: parse_extraction(&extraction_src),
            degraded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::CueLexicon;
    use crate::stage::Stage;

    fn parser() -> ResponseParser {
        ResponseParser::new(CueLexicon::bundled().suggestion, FallbackLines::bundled())
    }

    #[test]
    fn reasoning_header_becomes_stage_echo() {
        let raw = "<think>Current stage: Exploration; Focus: Stress-triggering scenarios\nHigh workload → sleep deprivation → emotional breakdown</think>\nCould you tell me more?";
        let p = parser().parse(raw, true);
        assert_eq!(
            p.stage_echo,
            Some(StageEcho {
                stage: Stage::Exploration,
                focus: "Stress-triggering scenarios".into()
            })
        );
        assert_eq!(p.reply, "Could you tell me more?");
        assert_eq!(
            p.causal_chains(),
            vec![vec!["High workload", "sleep deprivation", "emotional breakdown"]]
        );
        assert!(p.degraded.is_empty());
    }

    #[test]
    fn plain_text_passes_through() {
        let p = parser().parse("Hello.", false);
        assert_eq!(p.reply, "Hello.");
        assert_eq!(p.reasoning_chain, None);
        assert!(p.degraded.is_empty());
    }

    #[test]
    fn missing_close_is_degraded_and_keeps_text() {
        let p = parser().parse("<think>half a thought and then the reply", true);
        assert_eq!(p.reply, "half a thought and then the reply");
        assert_eq!(p.reasoning_chain, None);
        assert!(p.degraded.contains(&"unterminated_reasoning".to_string()));
    }

    #[test]
    fn thinking_off_discards_reasoning() {
        let p = parser().parse("<think>Current stage: Insight; Focus: x\na → b</think>Reply.", false);
        assert_eq!(p.reasoning_chain, None);
        assert_eq!(p.stage_echo, None);
        assert_eq!(p.reply, "Reply.");
    }

    #[test]
    fn extraction_block() {
        let raw = "I hear you.\n<state>\nkeywords: anxiety, isolation\nfoci: workplace conflicts\nstressors: supervisor conflict\nresources: time=30, social_support\n</state>";
        let p = parser().parse(raw, false);
        assert_eq!(p.reply, "I hear you.");
        assert_eq!(p.extractions.keywords, vec!["anxiety", "isolation"]);
        assert_eq!(p.extractions.foci, vec!["workplace conflicts"]);
        assert_eq!(p.extractions.stressors, vec!["supervisor conflict"]);
        assert_eq!(
            p.extractions.resources,
            vec![Resource::bounded("time", 30), Resource::unbounded("social_support")]
        );
    }

    #[test]
    fn only_reasoning_yields_fallback() {
        let p = parser().parse("<think>Current stage: Action; Focus: plan</think>", true);
        assert_eq!(p.reply, FallbackLines::bundled().default);
        assert!(p.degraded.contains(&"empty_reply".to_string()));
        assert!(p.reasoning_chain.is_some());
    }

    #[test]
    fn reassembled_tokens_are_stripped() {
        let p = parser().parse("a <thi<think>x</think>nk> b </th</think>ink>", true);
        assert!(!p.reply.contains("<think>") && !p.reply.contains("</think>"));
    }

    #[test]
    fn suggestions_are_listed() {
        let p = parser().parse(
            "I understand how you feel. You could try talking to friends or taking some time to relax daily.",
            false,
        );
        assert_eq!(
            p.suggestions,
            vec!["You could try talking to friends or taking some time to relax daily."]
        );
    }
}
