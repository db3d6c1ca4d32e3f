//! Brute-force recounts of the dialogue metrics, written without the
//! library's text helpers. Used to cross-check the metric implementations.

use std::sync::OnceLock;

use regex::Regex;
use stagewise::eval::{Persona, ACKNOWLEDGMENT_CUES, METAPHOR_MARKERS};
use stagewise::session::{EventBody, SessionEvent, StepStatus};
use stagewise::stage::Stage;

fn word_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{L}\p{N}]+").unwrap())
}

fn sentence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?](?:\s+|$)|\n").unwrap())
}

pub fn words(text: &str) -> Vec<String> {
    word_re().find_iter(text).map(|m| m.as_str().to_lowercase()).collect()
}

fn has_run(text: &str, needle: &str) -> bool {
    let hay = words(text);
    let need = words(needle);
    !need.is_empty() && (0..hay.len()).any(|i| hay[i..].starts_with(&need))
}

pub fn split_sentences(text: &str) -> Vec<String> {
    sentence_re()
        .split(text)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Lines with at least two arrow-linked nodes.
fn chains(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.replace("->", "→");
        if !line.contains('→') {
            continue;
        }
        let nodes: Vec<String> = line
            .split('→')
            .map(|n| n.trim().trim_end_matches(['.', ';']).trim().to_string())
            .filter(|n| !n.is_empty())
            .collect();
        if nodes.len() >= 2 {
            out.push(nodes);
        }
    }
    out
}

/// Suggestion phrases read straight from the lexicon data file.
pub struct SuggestionPatterns {
    openers: Vec<Regex>,
    generic: Vec<Regex>,
}

fn compile(raw: &str) -> Regex {
    match raw.strip_prefix('~') {
        Some(sub) => Regex::new(&format!("(?i){}", regex::escape(sub))).unwrap(),
        None => Regex::new(&format!(
            r"(?i)(?:^|[^\p{{L}}\p{{N}}]){}(?:$|[^\p{{L}}\p{{N}}])",
            regex::escape(raw)
        ))
        .unwrap(),
    }
}

impl SuggestionPatterns {
    pub fn bundled() -> Self {
        let raw = std::fs::read_to_string(super::asset("lexicon.toml")).unwrap();
        let doc: toml::Table = toml::from_str(&raw).unwrap();
        let list = |key: &str| -> Vec<Regex> {
            doc["suggestion"][key]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| compile(v.as_str().unwrap()))
                .collect()
        };
        SuggestionPatterns {
            openers: list("openers"),
            generic: list("generic"),
        }
    }

    pub fn is_suggestion(&self, s: &str) -> bool {
        self.openers.iter().chain(&self.generic).any(|r| r.is_match(s))
    }

    pub fn is_generic(&self, s: &str) -> bool {
        self.generic.iter().any(|r| r.is_match(s))
    }
}

fn agent_turns(events: &[SessionEvent]) -> Vec<(u64, Stage, String, Option<String>)> {
    let mut out = Vec::new();
    for e in events {
        if let EventBody::AgentMsg(m) = &e.body {
            out.push((e.turn, m.stage, m.reply.clone(), m.reasoning_chain.clone()));
        }
    }
    out
}

fn user_turns(events: &[SessionEvent]) -> Vec<(u64, String)> {
    let mut out = Vec::new();
    for e in events {
        if let EventBody::UserMsg { text } = &e.body {
            out.push((e.turn, text.clone()));
        }
    }
    out
}

pub fn exposure(events: &[SessionEvent], persona: &Persona) -> (usize, usize) {
    let users = user_turns(events);
    let agents = agent_turns(events);
    let mut hits = 0;
    for s in &persona.hidden_stressors {
        let reveal = s.reveal_line.to_lowercase();
        let mut first = None;
        for (turn, text) in &users {
            if text.to_lowercase().contains(&reveal) {
                first = Some(*turn);
                break;
            }
        }
        let Some(first) = first else { continue };
        let label = words(&s.label);
        let mut named = false;
        for (turn, _, reply, _) in &agents {
            let reply_words = words(reply);
            if *turn >= first && label.iter().all(|w| reply_words.contains(w)) {
                named = true;
            }
        }
        if named {
            hits += 1;
        }
    }
    (hits, persona.hidden_stressors.len())
}

pub fn restructured(events: &[SessionEvent], persona: &Persona) -> bool {
    let users = user_turns(events);
    for (turn, stage, reply, chain) in agent_turns(events) {
        if stage != Stage::Insight {
            continue;
        }
        let mut texts = vec![reply];
        texts.extend(chain);
        let mut links = false;
        for t in &texts {
            for nodes in chains(t) {
                if nodes.iter().any(|n| has_run(n, &persona.root_cause)) {
                    links = true;
                }
            }
            for s in split_sentences(t) {
                let lower = s.to_lowercase();
                if METAPHOR_MARKERS.iter().any(|m| lower.contains(m)) && has_run(&s, &persona.root_cause) {
                    links = true;
                }
            }
        }
        if !links {
            continue;
        }
        for (t, text) in &users {
            let lower = text.to_lowercase();
            if *t > turn && ACKNOWLEDGMENT_CUES.iter().any(|c| lower.contains(c)) {
                return true;
            }
        }
    }
    false
}

/// `(accepted, proposed)` using each step's final status.
pub fn adoption(events: &[SessionEvent]) -> (usize, usize) {
    let mut steps: Vec<(usize, u32, StepStatus)> = Vec::new();
    let mut plans = 0;
    for e in events {
        match &e.body {
            EventBody::PlanProposed { plan } => {
                for s in &plan.steps {
                    steps.push((plans, s.index, s.status));
                }
                plans += 1;
            }
            EventBody::StepStatus { plan, step, status } => {
                for entry in steps.iter_mut() {
                    if entry.0 == *plan && entry.1 == *step {
                        entry.2 = *status;
                    }
                }
            }
            _ => {}
        }
    }
    let accepted = steps.iter().filter(|s| s.2 == StepStatus::Accepted).count();
    (accepted, steps.len())
}

/// `(premature, generic, total)` suggestion sentences.
pub fn suggestions(events: &[SessionEvent], patterns: &SuggestionPatterns) -> (usize, usize, usize) {
    let (mut premature, mut generic, mut total) = (0, 0, 0);
    for (_, stage, reply, _) in agent_turns(events) {
        for s in split_sentences(&reply) {
            if !patterns.is_suggestion(&s) {
                continue;
            }
            total += 1;
            if stage == Stage::Exploration || stage == Stage::Insight {
                premature += 1;
            }
            if patterns.is_generic(&s) {
                generic += 1;
            }
        }
    }
    (premature, generic, total)
}

pub fn root_cause(events: &[SessionEvent], persona: &Persona) -> bool {
    agent_turns(events)
        .iter()
        .any(|(_, _, _, chain)| chain.as_deref().is_some_and(|c| has_run(c, &persona.root_cause)))
}

pub fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}
