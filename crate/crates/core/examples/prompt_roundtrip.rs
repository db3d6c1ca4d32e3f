//! Prompt assembly, response parsing, suggestion gating and plan extraction.
//!
//! cargo run --example prompt_roundtrip

use stagewise::detector::CueLexicon;
use stagewise::prompt::{extract_plan, gate_reply, FallbackLines, PromptOptions, PromptTemplates, ResponseParser};
use stagewise::session::{check_feasibility, Resource, SessionState};
use stagewise::stage::Stage;

fn main() {
    let templates = PromptTemplates::bundled();
    let mut state = SessionState::new("prompt-demo");
    state.emotional_keywords.insert("exhaustion".into());
    let prompt = templates
        .build_prompt(&state, Stage::Exploration, PromptOptions::default())
        .expect("exploration has instructions");
    println!("--- system prompt ---\n{}\n", prompt.system_text);

    let parser = ResponseParser::new(CueLexicon::bundled().suggestion, FallbackLines::bundled());
    let raw = "<think>Current stage: Exploration; Focus: Work stress\n\
               High workload → sleep deprivation → emotional breakdown</think>\n\
               That sounds exhausting. You should try going to bed earlier. \
               What does a typical evening look like for you?\n\
               <state>\nkeywords: exhaustion\nstressors: high workload\n</state>";
    let parsed = parser.parse(raw, true);
    println!("reasoning: {:?}", parsed.reasoning_chain);
    println!("reply:     {}", parsed.reply);
    println!("stressors: {:?}", parsed.extractions.stressors);

    // Advice is withheld until the Action stage.
    for stage in [Stage::Exploration, Stage::Action] {
        let gated = gate_reply(stage, &parsed, true, &parser);
        println!("{stage:>11}: {} (withheld {:?})", gated.final_reply, gated.suppressed);
    }

    // Action replies become plans checked against the user's resources.
    let action = "Let's start small. In the first week, record daily emotional triggers. \
                  In the second week, try a 10-minute meditation session.";
    let plan = extract_plan(action, 5).expect("two scheduled steps");
    let resources = [Resource::bounded("time", 30)];
    for step in &plan.steps {
        println!(
            "step {} [{}] {} min/day: {} -> {:?}",
            step.index,
            step.schedule_hint,
            step.required_minutes_per_day,
            step.description,
            check_feasibility(step, &resources)
        );
    }
}
