//! Bundled kitchen domain, task problems, question templates and
//! regression rules.

pub const KITCHEN_DOMAIN: &str = include_str!("../assets/kitchen.pddl");
pub const CLEAN_DISHES: &str = include_str!("../assets/clean_dishes.pddl");
pub const SERVE_BREAKFAST: &str = include_str!("../assets/serve_breakfast.pddl");
pub const EAT_APPLE: &str = include_str!("../assets/eat_apple.pddl");
pub const TEMPLATES_JSON: &str = include_str!("../assets/templates.json");
pub const REGRESSIONS_JSON: &str = include_str!("../assets/regressions.json");

/// Task ids with their problem text, in reporting order.
pub const PROBLEMS: [(&str, &str); 3] = [
    ("clean_dishes", CLEAN_DISHES),
    ("serve_breakfast", SERVE_BREAKFAST),
    ("eat_apple", EAT_APPLE),
];

pub const TASK_IDS: [&str; 3] = ["clean_dishes", "serve_breakfast", "eat_apple"];

pub fn problem_text(task: &str) -> Option<&'static str> {
    PROBLEMS.iter().find(|(id, _)| *id == task).map(|(_, t)| *t)
}

/// Parses and grounds a bundled task.
pub fn load_task(task: &str) -> Result<crate::pddl::GroundTask, String> {
    let text = problem_text(task).ok_or_else(|| format!("unknown task `{task}`"))?;
    let domain = crate::pddl::parse_domain(KITCHEN_DOMAIN).map_err(|e| format!("kitchen.pddl:{e}"))?;
    let problem = crate::pddl::parse_problem(text, &domain).map_err(|e| format!("{task}.pddl:{e}"))?;
    crate::pddl::ground(&domain, &problem).map_err(|e| e.to_string())
}
