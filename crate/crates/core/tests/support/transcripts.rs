//! Twenty hand-built transcripts with hand-counted expectations.

use std::collections::BTreeSet;

use stagewise::clock::{Clock, LogicalClock};
use stagewise::eval::Persona;
use stagewise::session::{ActionPlan, AgentMessage, EventBody, PlanStep, SessionEvent, StepStatus};
use stagewise::stage::Stage;

/// Hand counts; `None` leaves the value to the oracle alone.
#[derive(Debug, Default, Clone)]
pub struct Expect {
    /// `(exposed, hidden)`
    pub exposure: Option<(usize, usize)>,
    pub restructured: Option<bool>,
    /// `(accepted, proposed)`
    pub adoption: Option<(usize, usize)>,
    /// `(premature, generic, total)`
    pub suggestions: Option<(usize, usize, usize)>,
    pub root_cause: Option<bool>,
}

pub struct Hand {
    pub name: &'static str,
    pub persona: Persona,
    pub events: Vec<SessionEvent>,
    pub expect: Expect,
}

struct Builder {
    clock: LogicalClock,
    turn: u64,
    plans: usize,
    events: Vec<SessionEvent>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            clock: LogicalClock::default(),
            turn: 0,
            plans: 0,
            events: Vec::new(),
        }
    }

    fn push(&mut self, body: EventBody) -> &mut Self {
        let ts = self.clock.now();
        self.events.push(SessionEvent::new("hand", self.turn, ts, body));
        self
    }

    fn user(&mut self, text: &str) -> &mut Self {
        self.turn += 1;
        self.push(EventBody::UserMsg { text: text.into() })
    }

    fn agent(&mut self, stage: Stage, reply: &str) -> &mut Self {
        self.agent_chain(stage, reply, None)
    }

    fn agent_chain(&mut self, stage: Stage, reply: &str, chain: Option<&str>) -> &mut Self {
        self.push(EventBody::AgentMsg(AgentMessage {
            reply: reply.into(),
            stage,
            reasoning_chain: chain.map(str::to_string),
            stage_echo: None,
            suggestions: Vec::new(),
            suppressed: Vec::new(),
            degraded: Vec::new(),
        }))
    }

    /// A plan of `n` steps; steps listed in `infeasible` start infeasible.
    fn plan(&mut self, n: u32, infeasible: &[u32]) -> &mut Self {
        let steps = (1..=n)
            .map(|i| PlanStep {
                index: i,
                description: format!("step {i}"),
                schedule_hint: format!("week {i}"),
                required_tags: BTreeSet::from(["time".to_string()]),
                required_minutes_per_day: 10,
                status: if infeasible.contains(&i) {
                    StepStatus::Infeasible
                } else {
                    StepStatus::Proposed
                },
                status_turn: None,
            })
            .collect();
        self.plans += 1;
        let turn = self.turn;
        self.push(EventBody::PlanProposed {
            plan: ActionPlan {
                steps,
                proposed_turn: turn,
            },
        })
    }

    fn status(&mut self, plan: usize, step: u32, status: StepStatus) -> &mut Self {
        self.push(EventBody::StepStatus { plan, step, status })
    }

    fn done(&mut self) -> Vec<SessionEvent> {
        std::mem::take(&mut self.events)
    }
}

pub fn work_persona() -> Persona {
    Persona::from_toml(
        r#"
persona_id = "work"
opening_line = "I'm tired all the time."
root_cause = "workload"

[[hidden_stressors]]
label = "high workload"
reveal_patterns = ["energy"]
reveal_line = "My workload is huge."

[[hidden_stressors]]
label = "sleep deprivation"
reveal_patterns = ["sleep"]
reveal_line = "I barely sleep."

[[hidden_stressors]]
label = "social isolation"
reveal_patterns = ["friends"]
reveal_line = "I feel alone."
"#,
    )
    .unwrap()
}

pub fn business_persona() -> Persona {
    Persona::from_toml(
        r#"
persona_id = "business"
opening_line = "I lost my job."
root_cause = "business failure"

[[hidden_stressors]]
label = "business failure"
reveal_patterns = ["before"]
reveal_line = "My business failed years ago."

[[hidden_stressors]]
label = "financial worries"
reveal_patterns = ["money"]
reveal_line = "Money is tight."
"#,
    )
    .unwrap()
}

const CHAIN: &str =
    "Current stage: Insight; Focus: Breakdowns\nHigh workload → sleep deprivation → emotional breakdown";

pub fn all() -> Vec<Hand> {
    use Stage::*;
    let work = work_persona;
    let biz = business_persona;
    let mut out = Vec::new();
    let mut add = |name, persona, events, expect| {
        out.push(Hand {
            name,
            persona,
            events,
            expect,
        })
    };

    add(
        "empty",
        work(),
        Vec::new(),
        Expect {
            exposure: Some((0, 3)),
            restructured: Some(false),
            adoption: Some((0, 0)),
            suggestions: Some((0, 0, 0)),
            root_cause: Some(false),
        },
    );

    add(
        "two of three surfaced",
        work(),
        Builder::new()
            .user("I'm tired all the time.")
            .agent(Exploration, "Tell me more about that.")
            .user("My workload is huge.")
            .agent(Exploration, "The high workload sounds heavy.")
            .user("I barely sleep.")
            .agent(Exploration, "How long has the sleep deprivation lasted?")
            .user("I feel alone.")
            .agent(Exploration, "That sounds hard.")
            .user("Yes.")
            .agent(Exploration, "Go on.")
            .user("Okay.")
            .agent(Exploration, "I hear you.")
            .done(),
        Expect {
            exposure: Some((2, 3)),
            suggestions: Some((0, 0, 0)),
            ..Expect::default()
        },
    );

    add(
        "all surfaced",
        work(),
        Builder::new()
            .user("My workload is huge.")
            .agent(Exploration, "A high workload wears anyone down.")
            .user("I barely sleep.")
            .agent(Exploration, "Sleep deprivation makes everything harder.")
            .user("I feel alone.")
            .agent(Exploration, "Social isolation on top of that is a lot.")
            .done(),
        Expect {
            exposure: Some((3, 3)),
            ..Expect::default()
        },
    );

    add(
        "named before the reveal only",
        work(),
        Builder::new()
            .user("I'm tired.")
            .agent(Exploration, "Is it a high workload?")
            .user("My workload is huge.")
            .agent(Exploration, "Tell me more.")
            .done(),
        Expect {
            exposure: Some((0, 3)),
            ..Expect::default()
        },
    );

    add(
        "chain then acknowledgment",
        work(),
        Builder::new()
            .user("I break down over small things.")
            .agent_chain(
                Insight,
                "The breakdowns may start with how much you carry.",
                Some(CHAIN),
            )
            .user("That makes sense.")
            .agent(Insight, "What do you notice now?")
            .done(),
        Expect {
            restructured: Some(true),
            root_cause: Some(true),
            ..Expect::default()
        },
    );

    add(
        "chain without acknowledgment",
        work(),
        Builder::new()
            .user("I break down over small things.")
            .agent_chain(
                Insight,
                "The breakdowns may start with how much you carry.",
                Some(CHAIN),
            )
            .user("Maybe.")
            .done(),
        Expect {
            restructured: Some(false),
            root_cause: Some(true),
            ..Expect::default()
        },
    );

    add(
        "acknowledgment before chain",
        work(),
        Builder::new()
            .user("That makes sense, I guess.")
            .agent_chain(Insight, "Let's look at the pattern.", Some(CHAIN))
            .user("Hmm.")
            .done(),
        Expect {
            restructured: Some(false),
            ..Expect::default()
        },
    );

    add(
        "chain outside insight",
        work(),
        Builder::new()
            .user("I'm so tired.")
            .agent_chain(Exploration, "Tell me about your days.", Some(CHAIN))
            .user("That makes sense.")
            .done(),
        Expect {
            restructured: Some(false),
            root_cause: Some(true),
            ..Expect::default()
        },
    );

    add(
        "metaphor then acknowledgment",
        biz(),
        Builder::new()
            .user("I feel trapped, no matter how hard I try, I see no hope.")
            .agent(
                Insight,
                "Does this feeling of being 'trapped' resemble how you felt during your previous business failure? Sometimes past experiences shape our future expectations negatively.",
            )
            .user("You're right. It feels just like when my business failed.")
            .done(),
        Expect {
            restructured: Some(true),
            root_cause: Some(false),
            ..Expect::default()
        },
    );

    add(
        "chain misses the root cause",
        work(),
        Builder::new()
            .user("I can't cope.")
            .agent_chain(
                Insight,
                "Short nights leave little in reserve.",
                Some("Short nights → low resilience"),
            )
            .user("That makes sense.")
            .done(),
        Expect {
            restructured: Some(false),
            root_cause: Some(false),
            ..Expect::default()
        },
    );

    add(
        "two of two accepted",
        work(),
        Builder::new()
            .user("Where do I start?")
            .agent(Action, "Let's start small.")
            .plan(2, &[])
            .user("I can do step 1 and step 2.")
            .status(0, 1, StepStatus::Accepted)
            .status(0, 2, StepStatus::Accepted)
            .done(),
        Expect {
            adoption: Some((2, 2)),
            ..Expect::default()
        },
    );

    add(
        "one of four accepted",
        work(),
        Builder::new()
            .user("What can I do?")
            .agent(Action, "Here is a plan.")
            .plan(4, &[])
            .user("I can do step 3.")
            .status(0, 3, StepStatus::Accepted)
            .done(),
        Expect {
            adoption: Some((1, 4)),
            ..Expect::default()
        },
    );

    add(
        "two plans with a reversal",
        work(),
        Builder::new()
            .user("What can I do?")
            .agent(Action, "First plan.")
            .plan(2, &[])
            .user("I can do step 1.")
            .status(0, 1, StepStatus::Accepted)
            .user("Actually, not step 1.")
            .status(0, 1, StepStatus::Rejected)
            .agent(Action, "Second plan.")
            .plan(3, &[])
            .user("I can do step 1 and step 3.")
            .status(1, 1, StepStatus::Accepted)
            .status(1, 3, StepStatus::Accepted)
            .done(),
        Expect {
            adoption: Some((2, 5)),
            ..Expect::default()
        },
    );

    add(
        "infeasible step in the plan",
        work(),
        Builder::new()
            .user("Give me some steps.")
            .agent(Action, "Three steps.")
            .plan(3, &[3])
            .user("I can do step 1.")
            .status(0, 1, StepStatus::Accepted)
            .done(),
        Expect {
            adoption: Some((1, 3)),
            ..Expect::default()
        },
    );

    add(
        "three of four suggestions premature",
        work(),
        Builder::new()
            .user("I'm tired.")
            .agent(Exploration, "You could try walking. How are you sleeping?")
            .user("Badly.")
            .agent(Insight, "You should rest. I believe in you.")
            .user("What can I do?")
            .agent(Action, "Let's start small.")
            .done(),
        Expect {
            suggestions: Some((3, 1, 4)),
            ..Expect::default()
        },
    );

    add(
        "all suggestions in action",
        work(),
        Builder::new()
            .user("Where do I start?")
            .agent(
                Action,
                "In the first week, keep a log. In the second week, try a 10-minute walk.",
            )
            .done(),
        Expect {
            suggestions: Some((0, 0, 2)),
            ..Expect::default()
        },
    );

    add(
        "generic encouragement",
        biz(),
        Builder::new()
            .user("I see no hope.")
            .agent(
                Exploration,
                "Believe in yourself; things will improve if you keep trying.",
            )
            .done(),
        Expect {
            suggestions: Some((1, 1, 1)),
            ..Expect::default()
        },
    );

    add(
        "questions only",
        biz(),
        Builder::new()
            .user("I lost my job.")
            .agent(Exploration, "How long ago did it happen? What has been hardest?")
            .user("Money is tight.")
            .agent(
                Exploration,
                "Financial worries can take over everything. What worries you most?",
            )
            .done(),
        Expect {
            exposure: Some((1, 2)),
            suggestions: Some((0, 0, 0)),
            restructured: Some(false),
            ..Expect::default()
        },
    );

    add(
        "full arc",
        work(),
        Builder::new()
            .user("My workload is huge.")
            .agent(
                Exploration,
                "A high workload sounds exhausting. You should take a break.",
            )
            .user("I barely sleep.")
            .agent(Exploration, "How is the sleep deprivation affecting you?")
            .user("I keep asking why this keeps happening.")
            .agent_chain(Insight, "It may be a chain.", Some(CHAIN))
            .user("I see the connection. Where do I start?")
            .agent(Action, "In the first week, note your triggers. Stay positive.")
            .plan(2, &[])
            .user("I can do step 1.")
            .status(0, 1, StepStatus::Accepted)
            .done(),
        Expect {
            exposure: Some((2, 3)),
            restructured: Some(true),
            adoption: Some((1, 2)),
            suggestions: Some((1, 1, 3)),
            root_cause: Some(true),
        },
    );

    add(
        "case and arrow variants",
        work(),
        Builder::new()
            .user("well... MY WORKLOAD IS HUGE. yes")
            .agent(Exploration, "Workload that high is a lot.")
            .user("Hmm.")
            .agent_chain(Insight, "It links together.", Some("long hours -> workload -> no rest"))
            .user("I see the connection now.")
            .done(),
        Expect {
            exposure: Some((1, 3)),
            restructured: Some(true),
            root_cause: Some(true),
            ..Expect::default()
        },
    );

    out
}
