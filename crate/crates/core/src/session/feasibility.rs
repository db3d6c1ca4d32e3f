use serde::{Deserialize, Serialize};

use super::state::{PlanStep, Resource};

/// Why a step does not fit the user's resources.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Infeasibility {
    MissingTag { tag: String },
    InsufficientMinutes { tag: String, required: u32, available: u32 },
}

impl std::fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Infeasibility::MissingTag { tag } => f.write_str(tag),
            Infeasibility::InsufficientMinutes {
                tag,
                required,
                available,
            } => {
                write!(f, "{tag}: needs {required} min/day, has {available}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible,
    Infeasible(Infeasibility),
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// A step is feasible when each required tag is matched by some resource and
/// its daily minutes fit the tightest bounded capacity among the matched
/// resources. Tags are checked in sorted order; the first failure is reported.
pub fn check_feasibility(step: &PlanStep, resources: &[Resource]) -> Feasibility {
    let mut tightest: Option<(&str, u32)> = None;
    for tag in &step.required_tags {
        let matched: Vec<&Resource> = resources.iter().filter(|r| &r.tag == tag).collect();
        if matched.is_empty() {
            return Feasibility::Infeasible(Infeasibility::MissingTag { tag: tag.clone() });
        }
        for r in matched {
            if let Some(cap) = r.capacity_minutes_per_day {
                if tightest.is_none_or(|(_, c)| cap < c) {
                    tightest = Some((&r.tag, cap));
                }
            }
        }
    }
    match tightest {
        Some((tag, available)) if step.required_minutes_per_day > available => {
            Feasibility::Infeasible(Infeasibility::InsufficientMinutes {
                tag: tag.to_string(),
                required: step.required_minutes_per_day,
                available,
            })
        }
        _ => Feasibility::Feasible,
    }
}
