use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::session::{ActionPlan, PlanStep, StepStatus};
use crate::text::sentences;

/// Resource requirement assumed for steps without an annotation.
pub const DEFAULT_TAG: &str = "time";
pub const DEFAULT_MINUTES: u32 = 10;

static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(\d{1,2})[.)]\s+(.+)$").expect("valid regex"));

static ORDINAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?:(?:in|during|for)\s+)?(?:the\s+)?(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth)\s+(week|day|month)\s*[,:\-]?\s*(.+)$",
    )
    .expect("valid regex")
});

static LABELLED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^(week|day|month)\s+(\d{1,2})\s*[,:\-]\s*(.+)$").expect("valid regex"));

static INNER_HINT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:(first|second|third|fourth|fifth|sixth|seventh|eighth|ninth|tenth)\s+(week|day|month)|(week|day|month)\s+(\d{1,2}))\b",
    )
    .expect("valid regex")
});

static ANNOTATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\s*\[needs:\s*([^\]@]*?)\s*(?:@\s*(\d+)\s*min(?:utes)?\s*/\s*day\s*)?\]").expect("valid regex")
});

static MINUTES: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(\d{1,4})[- ]minutes?\b").expect("valid regex"));

fn ordinal_value(word: &str) -> u32 {
    match word.to_ascii_lowercase().as_str() {
        "first" => 1,
        "second" => 2,
        "third" => 3,
        "fourth" => 4,
        "fifth" => 5,
        "sixth" => 6,
        "seventh" => 7,
        "eighth" => 8,
        "ninth" => 9,
        _ => 10,
    }
}

fn inner_hint(text: &str) -> Option<String> {
    let caps = INNER_HINT.captures(text)?;
    if let (Some(ord), Some(unit)) = (caps.get(1), caps.get(2)) {
        return Some(format!(
            "{} {}",
            unit.as_str().to_ascii_lowercase(),
            ordinal_value(ord.as_str())
        ));
    }
    Some(format!("{} {}", caps[3].to_ascii_lowercase(), &caps[4]))
}

struct RawStep {
    hint: Option<String>,
    body: String,
}

fn numbered_steps(reply: &str) -> Vec<RawStep> {
    reply
        .lines()
        .filter_map(|line| NUMBERED.captures(line))
        .map(|c| RawStep {
            hint: inner_hint(&c[2]),
            body: c[2].trim().to_string(),
        })
        .collect()
}

fn scheduled_steps(reply: &str) -> Vec<RawStep> {
    sentences(reply)
        .into_iter()
        .filter_map(|s| {
            if let Some(c) = ORDINAL.captures(s) {
                return Some(RawStep {
                    hint: Some(format!("{} {}", c[2].to_ascii_lowercase(), ordinal_value(&c[1]))),
                    body: c[3].to_string(),
                });
            }
            LABELLED.captures(s).map(|c| RawStep {
                hint: Some(format!("{} {}", c[1].to_ascii_lowercase(), &c[2])),
                body: c[3].to_string(),
            })
        })
        .collect()
}

fn finish(raw: RawStep, index: u32) -> Option<PlanStep> {
    let mut tags = BTreeSet::new();
    let mut minutes = None;
    let mut annotated = false;
    if let Some(c) = ANNOTATION.captures(&raw.body) {
        annotated = true;
        tags.extend(
            c[1].split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| t.to_ascii_lowercase()),
        );
        minutes = c.get(2).and_then(|m| m.as_str().parse().ok());
    }
    let description = strip_annotations(&raw.body)
        .trim()
        .trim_end_matches(['.', ';', '!'])
        .trim()
        .to_string();
    if description.is_empty() {
        return None;
    }
    if minutes.is_none() {
        minutes = MINUTES.captures(&description).and_then(|c| c[1].parse().ok());
    }
    if !annotated {
        tags.insert(DEFAULT_TAG.to_string());
    }
    Some(PlanStep {
        index,
        description,
        schedule_hint: raw.hint.unwrap_or_else(|| format!("step {index}")),
        required_tags: tags,
        required_minutes_per_day: minutes.unwrap_or(if annotated { 0 } else { DEFAULT_MINUTES }),
        status: StepStatus::Proposed,
        status_turn: None,
    })
}

/// Enumerable steps in `reply`: a numbered list (`1.`, `2)`) or sentences
/// opened by a schedule phrase ("In the first week, ...", "Week 2: ...").
/// A step may carry a `[needs: tag, tag @ N min/day]` annotation; without one
/// it requires [`DEFAULT_TAG`] and the minutes it names, or
/// [`DEFAULT_MINUTES`]. Returns `None` when fewer than one step is found.
pub fn extract_plan(reply: &str, proposed_turn: u64) -> Option<ActionPlan> {
    let mut raw = numbered_steps(reply);
    if raw.is_empty() {
        raw = scheduled_steps(reply);
    }
    let steps: Vec<PlanStep> = raw
        .into_iter()
        .filter_map(|r| {
            let body = r.body.trim();
            (!body.is_empty()).then_some(r)
        })
        .enumerate()
        .filter_map(|(i, r)| finish(r, i as u32 + 1))
        .collect();
    if steps.is_empty() {
        return None;
    }
    Some(ActionPlan { steps, proposed_turn })
}

/// Removes `[needs: ...]` annotations from user-facing text.
pub fn strip_annotations(text: &str) -> String {
    ANNOTATION.replace_all(text, "").into_owned()
}
