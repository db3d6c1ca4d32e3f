//! The three worked cases replayed through the scripted backend.
//!
//! Set `BLESS_GOLDEN=1` to rewrite `assets/golden/*.events.jsonl` from the
//! current engine.

mod support;

use stagewise::engine::SessionFlags;
use stagewise::eval::{run_dialogue, EndReason};
use stagewise::session::{load_file, parse_log, replay, StepStatus};
use stagewise::stage::{SignalKind, Stage};

use support::{asset, live_run};

pub const CASE1_REPLY: &str = "It sounds like your recent workload has been burdensome. Could you describe the specific situations causing this pressure? Is it related to tasks, colleagues, or supervisors?";
pub const CASE2_REPLY: &str = "Does this feeling of being 'trapped' resemble how you felt during your previous business failure? Sometimes past experiences shape our future expectations negatively. Do you think there might be similar reasons for your current situation?";
pub const CASE3_REPLY: &str = "Let's start small. In the first week, record daily emotional triggers to identify stressful situations. In the second week, try a 10-minute meditation session to relieve anxiety.";

fn replies(case: &str) -> Vec<String> {
    live_run(&format!("personas/{case}.toml"))
        .turns
        .iter()
        .map(|t| t.reply.clone())
        .collect()
}

#[test]
fn case1_listens_in_exploration() {
    let run = live_run("personas/case1.toml");
    assert_eq!(run.turns[0].reply, CASE1_REPLY);
    assert_eq!(run.turns[0].stage_after, Stage::Exploration);
    assert!(run.turns.iter().all(|t| t.stage_after == Stage::Exploration));
    assert!(run.turns.iter().all(|t| t.suggestions.is_empty()));
    assert_eq!(run.log.state().stage, Stage::Exploration);
    let supervisor = run
        .log
        .state()
        .stressors
        .iter()
        .find(|s| s.label == "supervisor conflict");
    assert!(supervisor.is_some_and(|s| s.surfaced));
}

#[test]
fn case2_moves_to_insight_with_the_analogy() {
    let run = live_run("personas/case2.toml");
    let t3 = &run.turns[2];
    assert_eq!(t3.signal.kind, SignalKind::ReadyForInsight);
    assert_eq!((t3.stage_before, t3.stage_after), (Stage::Exploration, Stage::Insight));
    assert_eq!(t3.reply, CASE2_REPLY);
    assert_eq!(run.log.state().stage, Stage::Insight);
}

#[test]
fn case3_reaches_a_feasible_two_step_plan() {
    let run = live_run("personas/case3.toml");
    let t5 = &run.turns[4];
    assert_eq!(t5.signal.kind, SignalKind::ReadyForAction);
    assert_eq!(t5.stage_after, Stage::Action);
    assert_eq!(t5.reply, CASE3_REPLY);
    let plan = t5.plan.as_ref().expect("plan proposed");
    assert_eq!(plan.plan.steps.len(), 2);
    assert_eq!(plan.plan.steps[0].schedule_hint, "week 1");
    assert_eq!(plan.plan.steps[1].schedule_hint, "week 2");
    assert_eq!(plan.plan.steps[1].required_minutes_per_day, 10);
    assert!(plan.verdicts.iter().all(|v| v.feasibility.is_feasible()));

    let state = run.log.state();
    assert_eq!(state.stage, Stage::Action);
    let steps = &state.plans[0].steps;
    assert!(steps.iter().all(|s| s.status == StepStatus::Accepted));
}

#[test]
fn per_turn_replies_are_stable() {
    assert_eq!(
        replies("case1"),
        [
            CASE1_REPLY,
            "It sounds like the conflict with your supervisor has been painful, especially being criticized in front of others. How are things outside of work?",
            "Feeling cut off from everyone can make the pressure at work even heavier. Social isolation like that is exhausting. How have you been sleeping lately?",
            "Lying awake and replaying the day sounds draining. What goes through your mind during those nights?",
        ]
    );
    assert_eq!(
        replies("case2"),
        [
            "Losing your job is a lot to carry, and the worry sounds constant. Has anything like this happened before in your life?",
            "That business failure sounds like it left a deep mark. How do you feel when you think about what comes next?",
            CASE2_REPLY,
            "It makes sense that the old loss colors how this one feels. What feels different about your situation this time?",
        ]
    );
    assert_eq!(
        replies("case3"),
        [
            "That sounds draining. What has been taking up most of your energy lately?",
            "It sounds like the high workload leaves you very little room to rest. How has your sleep been?",
            "Sleep deprivation on top of long days would wear anyone down. What goes through your mind when those breakdowns happen?",
            "It seems the long hours cut into your rest, and without rest every small setback feels bigger. The breakdowns may be the end of a chain that starts with your workload, not a sign of weakness.",
            CASE3_REPLY,
            "That sounds like a good start. We can look at how the first week went next time.",
        ]
    );
}

#[test]
fn golden_logs_match_byte_for_byte() {
    let bless = std::env::var("BLESS_GOLDEN").is_ok_and(|v| v == "1");
    for case in ["case1", "case2", "case3"] {
        let run = live_run(&format!("personas/{case}.toml"));
        let live = stagewise::session::to_jsonl(run.log.events());
        let path = asset(&format!("golden/{case}.events.jsonl"));
        if bless {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, &live).unwrap();
        }
        let golden = std::fs::read_to_string(&path).unwrap();
        assert_eq!(golden, live, "{case} drifted from its golden log");

        let loaded = load_file(&path).unwrap();
        assert!(!loaded.truncated);
        let replayed = replay(&loaded.events).unwrap();
        assert_eq!(
            serde_json::to_value(&replayed).unwrap(),
            serde_json::to_value(run.log.state()).unwrap()
        );
    }
}

#[test]
fn eval_runner_matches_the_live_loop() {
    for case in ["case1", "case2", "case3"] {
        let run = live_run(&format!("personas/{case}.toml"));
        let t = run_dialogue(&run.persona.persona, &run.engine, &SessionFlags::default()).unwrap();
        assert_eq!(t.to_jsonl(), stagewise::session::to_jsonl(run.log.events()));
        assert_eq!(t.end, EndReason::TurnCap);
        assert!(t.truncated);
        // Reruns are byte-identical.
        let again = run_dialogue(&run.persona.persona, &run.engine, &SessionFlags::default()).unwrap();
        assert_eq!(t.to_jsonl(), again.to_jsonl());
    }
}

#[test]
fn truncated_golden_log_keeps_the_complete_prefix() {
    let raw = std::fs::read_to_string(asset("golden/case3.events.jsonl")).unwrap();
    let lines: Vec<&str> = raw.lines().collect();
    let last = lines[lines.len() - 1];
    let cut = format!("{}\n{}", lines[..lines.len() - 1].join("\n"), &last[..last.len() / 2]);
    let loaded = parse_log(&cut).unwrap();
    assert!(loaded.truncated);
    assert_eq!(loaded.events.len(), lines.len() - 1);
    let full = parse_log(&raw).unwrap();
    assert_eq!(loaded.events, full.events[..lines.len() - 1]);
}
