use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detector::SuggestionLexicon;
use crate::session::{EventBody, SessionEvent, StepStatus};
use crate::stage::Stage;
use crate::text::{causal_chains, contains_all_tokens, contains_ci, contains_token_run, sentences};

use super::persona::{has_acknowledgment, metaphor_mentions, Persona};

/// Metrics for one dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub persona_id: String,
    pub exposure_completeness: f64,
    pub restructuring_success: bool,
    pub adoption_rate: f64,
    /// No plan step was ever proposed; `adoption_rate` is 0 by convention.
    pub no_plan: bool,
    pub premature_suggestion_rate: f64,
    pub ineffective_suggestion_rate: f64,
    /// No suggestion sentence was ever shown; both suggestion rates are 0.
    pub no_suggestions: bool,
    pub root_cause_identified: bool,
    pub user_turns: u64,
    pub final_stage: Stage,
    pub truncated: bool,
}

/// Means over dialogues; booleans count as 0 or 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub dialogues: usize,
    pub exposure_completeness: f64,
    pub restructuring_success: f64,
    pub adoption_rate: f64,
    pub premature_suggestion_rate: f64,
    pub ineffective_suggestion_rate: f64,
    pub root_cause_identified: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn agent_messages(events: &[SessionEvent]) -> impl Iterator<Item = (u64, &crate::session::AgentMessage)> {
    events.iter().filter_map(|e| match &e.body {
        EventBody::AgentMsg(m) => Some((e.turn, m)),
        _ => None,
    })
}

fn user_messages(events: &[SessionEvent]) -> impl Iterator<Item = (u64, &str)> {
    events.iter().filter_map(|e| match &e.body {
        EventBody::UserMsg { text } => Some((e.turn, text.as_str())),
        _ => None,
    })
}

/// Share of hidden stressors that the persona revealed (said its reveal
/// line) and that an agent reply at or after that turn named (all label
/// tokens present).
pub fn exposure_completeness(events: &[SessionEvent], persona: &Persona) -> f64 {
    let exposed = persona
        .hidden_stressors
        .iter()
        .filter(|s| {
            let Some(revealed_at) = user_messages(events)
                .find(|(_, text)| contains_ci(text, &s.reveal_line))
                .map(|(turn, _)| turn)
            else {
                return false;
            };
            agent_messages(events).any(|(turn, m)| turn >= revealed_at && contains_all_tokens(&m.reply, &s.label))
        })
        .count();
    ratio(exposed, persona.hidden_stressors.len())
}

/// An Insight-stage agent turn ties the root cause into a causal chain or an
/// analogy, and a later user turn acknowledges it.
pub fn restructuring_success(events: &[SessionEvent], persona: &Persona) -> bool {
    agent_messages(events)
        .filter(|(_, m)| m.stage == Stage::Insight)
        .filter(|(_, m)| {
            let texts = [Some(m.reply.as_str()), m.reasoning_chain.as_deref()];
            texts.into_iter().flatten().any(|t| {
                causal_chains(t)
                    .iter()
                    .any(|chain| chain.iter().any(|n| contains_token_run(n, &persona.root_cause)))
                    || metaphor_mentions(t, &persona.root_cause)
            })
        })
        .any(|(turn, _)| user_messages(events).any(|(t, text)| t > turn && has_acknowledgment(text)))
}

/// Accepted steps over proposed steps, using each step's last status.
/// Returns `(rate, no_plan)`.
pub fn adoption_rate(events: &[SessionEvent]) -> (f64, bool) {
    let mut status: BTreeMap<(usize, u32), StepStatus> = BTreeMap::new();
    let mut plan_count = 0;
    for e in events {
        match &e.body {
            EventBody::PlanProposed { plan } => {
                for s in &plan.steps {
                    status.insert((plan_count, s.index), s.status);
                }
                plan_count += 1;
            }
            EventBody::StepStatus { plan, step, status: st } => {
                status.insert((*plan, *step), *st);
            }
            _ => {}
        }
    }
    let accepted = status.values().filter(|s| **s == StepStatus::Accepted).count();
    (ratio(accepted, status.len()), status.is_empty())
}

/// Suggestion sentences shown to the user: `(premature, ineffective, total)`
/// counts, where premature means shown before the Action stage and
/// ineffective means generic.
pub fn suggestion_counts(events: &[SessionEvent], lexicon: &SuggestionLexicon) -> (usize, usize, usize) {
    let mut premature = 0;
    let mut generic = 0;
    let mut total = 0;
    for (_, m) in agent_messages(events) {
        for s in sentences(&m.reply).into_iter().filter(|s| lexicon.is_suggestion(s)) {
            total += 1;
            if matches!(m.stage, Stage::Exploration | Stage::Insight) {
                premature += 1;
            }
            if lexicon.is_generic(s) {
                generic += 1;
            }
        }
    }
    (premature, generic, total)
}

/// `(premature_rate, ineffective_rate, no_suggestions)`.
pub fn premature_and_ineffective_rates(events: &[SessionEvent], lexicon: &SuggestionLexicon) -> (f64, f64, bool) {
    let (premature, generic, total) = suggestion_counts(events, lexicon);
    (ratio(premature, total), ratio(generic, total), total == 0)
}

/// Some agent reasoning block names the root cause.
pub fn root_cause_identified(events: &[SessionEvent], persona: &Persona) -> bool {
    agent_messages(events)
        .filter_map(|(_, m)| m.reasoning_chain.as_deref())
        .any(|chain| contains_token_run(chain, &persona.root_cause))
}

/// All metrics for one transcript.
pub fn score(
    events: &[SessionEvent],
    persona: &Persona,
    lexicon: &SuggestionLexicon,
    final_stage: Stage,
    truncated: bool,
) -> MetricsReport {
    let (adoption, no_plan) = adoption_rate(events);
    let (premature, ineffective, no_suggestions) = premature_and_ineffective_rates(events, lexicon);
    MetricsReport {
        persona_id: persona.persona_id.clone(),
        exposure_completeness: exposure_completeness(events, persona),
        restructuring_success: restructuring_success(events, persona),
        adoption_rate: adoption,
        no_plan,
        premature_suggestion_rate: premature,
        ineffective_suggestion_rate: ineffective,
        no_suggestions,
        root_cause_identified: root_cause_identified(events, persona),
        user_turns: user_messages(events).count() as u64,
        final_stage,
        truncated,
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn aggregate(reports: &[MetricsReport]) -> AggregateMetrics {
    let n = reports.len();
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| {
        if n == 0 {
            0.0
        } else {
            reports.iter().map(f).sum::<f64>() / n as f64
        }
    };
    AggregateMetrics {
        dialogues: n,
        exposure_completeness: mean(&|r| r.exposure_completeness),
        restructuring_success: mean(&|r| flag(r.restructuring_success)),
        adoption_rate: mean(&|r| r.adoption_rate),
        premature_suggestion_rate: mean(&|r| r.premature_suggestion_rate),
        ineffective_suggestion_rate: mean(&|r| r.ineffective_suggestion_rate),
        root_cause_identified: mean(&|r| flag(r.root_cause_identified)),
    }
}

impl AggregateMetrics {
    /// `self - other`, field by field.
    pub fn minus(&self, other: &AggregateMetrics) -> AggregateMetrics {
        AggregateMetrics {
            dialogues: self.dialogues,
            exposure_completeness: self.exposure_completeness - other.exposure_completeness,
            restructuring_success: self.restructuring_success - other.restructuring_success,
            adoption_rate: self.adoption_rate - other.adoption_rate,
            premature_suggestion_rate: self.premature_suggestion_rate - other.premature_suggestion_rate,
            ineffective_suggestion_rate: self.ineffective_suggestion_rate - other.ineffective_suggestion_rate,
            root_cause_identified: self.root_cause_identified - other.root_cause_identified,
        }
    }

    pub fn is_zero(&self) -> bool {
        [
            self.exposure_completeness,
            self.restructuring_success,
            self.adoption_rate,
            self.premature_suggestion_rate,
            self.ineffective_suggestion_rate,
            self.root_cause_identified,
        ]
        .iter()
        .all(|v| *v == 0.0)
    }
}

impl From<&MetricsReport> for AggregateMetrics {
    fn from(r: &MetricsReport) -> Self {
        aggregate(std::slice::from_ref(r))
    }
}
