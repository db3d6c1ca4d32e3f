//! The stage machine: transitions, backtracking and signal resolution.
//!
//! cargo run --example stage_machine

use stagewise::stage::{applicable, next_stage, resolve, SignalKind, Stage, TransitionSignal};

fn main() {
    // A typical arc with one setback.
    let arc = [
        SignalKind::Continue,
        SignalKind::ReadyForInsight,
        SignalKind::ReadyForAction,
        SignalKind::ResistanceToAdvice,
        SignalKind::ReadyForAction,
        SignalKind::ClosureSignal,
    ];
    let mut stage = Stage::Exploration;
    for signal in arc {
        let next = next_stage(stage, signal);
        println!("{:<12} --{:<22}--> {next}", stage.as_str(), signal.as_str());
        stage = next;
    }

    // Several cues in one utterance: crisis wins over everything else.
    let candidates = [
        TransitionSignal::with_evidence(SignalKind::ReadyForAction, 0.9, "what should i do", 0, 16),
        TransitionSignal::with_evidence(SignalKind::CrisisTrigger, 0.6, "end it all", 30, 40),
        TransitionSignal::stay(0.3),
    ];
    let picked = resolve(Stage::Insight, &candidates).expect("non-empty candidate set");
    println!(
        "\nin insight, resolved {} candidates to {}",
        candidates.len(),
        picked.kind
    );

    // Signals that do not apply to the current stage are ignored.
    println!("\napplicable signals per stage:");
    for stage in Stage::ALL {
        let codes: Vec<&str> = SignalKind::ALL
            .into_iter()
            .filter(|s| applicable(stage, *s))
            .map(|s| s.code())
            .collect();
        println!("  {:<12} {}", stage.as_str(), codes.join(" "));
    }
}
