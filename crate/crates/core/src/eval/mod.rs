//! Simulated-user evaluation: personas, dialogue runner, metrics and
//! ablations.

mod metrics;
mod persona;
mod run;

use std::fmt::Write as _;

pub use metrics::{
    adoption_rate, aggregate, exposure_completeness, premature_and_ineffective_rates, restructuring_success,
    root_cause_identified, score, suggestion_counts, AggregateMetrics, MetricsReport,
};
pub use persona::{
    has_acknowledgment, load_persona, load_personas, metaphor_mentions, simulate_turn, turn_restructures, AgentView,
    HiddenStressor, LoadedPersona, Persona, PersonaError, PersonaMove, PersonaState, PersonaTurn, ACKNOWLEDGMENT_CUES,
    DEFAULT_TURN_CAP, METAPHOR_MARKERS,
};
pub use run::{
    compare, engine_for, run_ablation, run_arm, run_dialogue, AblationAxis, ArmReport, ComparativeReport, EndReason,
    EvalError, PairedMetrics, Transcript,
};

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

/// Plain-text table of per-dialogue metrics and their means.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>13} {:>8} {:>9} {:>11} {:>10} {:>6} {:<11}",
        "persona",
        "exposure",
        "restructured",
        "adopted",
        "premature",
        "ineffective",
        "root cause",
        "turns",
        "final stage"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<20} {:>8.3} {:>13} {:>8} {:>9.3} {:>11.3} {:>10} {:>6} {:<11}",
            r.persona_id,
            r.exposure_completeness,
            yes_no(r.restructuring_success),
            if r.no_plan {
                "-".to_string()
            } else {
                format!("{:.3}", r.adoption_rate)
            },
            r.premature_suggestion_rate,
            r.ineffective_suggestion_rate,
            yes_no(r.root_cause_identified),
            r.user_turns,
            format!("{}{}", r.final_stage, if r.truncated { "*" } else { "" }),
        );
    }
    let a = aggregate(reports);
    let _ = writeln!(
        out,
        "{:<20} {:>8.3} {:>13.3} {:>8.3} {:>9.3} {:>11.3} {:>10.3}",
        "mean",
        a.exposure_completeness,
        a.restructuring_success,
        a.adoption_rate,
        a.premature_suggestion_rate,
        a.ineffective_suggestion_rate,
        a.root_cause_identified
    );
    out
}

/// Both arms and the aggregate deltas.
pub fn render_comparison(report: &ComparativeReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "== {} ==", report.baseline.name);
    out.push_str(&render_table(&report.baseline.dialogues));
    let _ = writeln!(out, "\n== {} ==", report.variant.name);
    out.push_str(&render_table(&report.variant.dialogues));
    let d = &report.delta;
    let _ = writeln!(
        out,
        "\ndelta (variant - baseline): exposure {:+.3}, restructured {:+.3}, adopted {:+.3}, premature {:+.3}, ineffective {:+.3}, root cause {:+.3}",
        d.exposure_completeness,
        d.restructuring_success,
        d.adoption_rate,
        d.premature_suggestion_rate,
        d.ineffective_suggestion_rate,
        d.root_cause_identified
    );
    if !report.comparable {
        out.push_str("warning: arms cover different personas; deltas are not comparable\n");
    }
    out
}
