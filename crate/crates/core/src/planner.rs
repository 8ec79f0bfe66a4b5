//! Forward state-space search over grounded tasks.
//!
//! The default search is breadth-first with duplicate detection. Successors
//! are generated in the task's canonical action order and each state keeps
//! the parent that discovered it first, so the returned plan is the
//! lexicographically smallest among the shortest ones.

use std::cmp::Reverse;
use std::collections::hash_map::Entry;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::pddl::{sexpr, GroundAction, GroundAtom, GroundTask, State};

pub const DEFAULT_MAX_EXPANSIONS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Plan {
    pub steps: Vec<GroundAction>,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.steps.iter().map(GroundAction::name).collect()
    }

    /// Plan-file text: one `name(arg1, arg2)` per line.
    pub fn to_text(&self) -> String {
        self.steps.iter().map(|a| format!("{}\n", a.name())).collect()
    }

    /// Reads a plan file. Blank lines and `;` comments are skipped, and both
    /// `name(a, b)` and `(name a b)` lines are accepted.
    pub fn parse(task: &GroundTask, text: &str) -> Result<Plan, PlanFileError> {
        let mut steps = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let (schema, binding) =
                sexpr::read_call_syntax(line).map_err(|e| PlanFileError::Syntax {
                    line: i + 1,
                    message: e.message,
                })?;
            let action = task
                .find_action(&schema, &binding)
                .ok_or_else(|| PlanFileError::UnknownAction {
                    line: i + 1,
                    action: line.to_string(),
                })?;
            steps.push(action.clone());
        }
        Ok(Plan { steps })
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanFileError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown action `{action}`")]
    UnknownAction { line: usize, action: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Solved(Plan),
    Unsolvable,
    /// Carries the number of expanded nodes.
    BudgetExceeded(usize),
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&Plan> {
        match self {
            PlanOutcome::Solved(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    BreadthFirst,
    /// A* with the additive heuristic. Faster on larger tasks; the
    /// heuristic is inadmissible so plans may be longer than optimal.
    AStarAdditive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub max_expansions: usize,
    pub strategy: Strategy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_expansions: DEFAULT_MAX_EXPANSIONS,
            strategy: Strategy::BreadthFirst,
        }
    }
}

pub fn plan(task: &GroundTask) -> PlanOutcome {
    plan_with(task, &SearchConfig::default())
}

/// Plans from `new_init` instead of the task's own initial state.
pub fn replan(task: &GroundTask, new_init: &State) -> PlanOutcome {
    replan_with(task, new_init, &SearchConfig::default())
}

pub fn replan_with(task: &GroundTask, new_init: &State, config: &SearchConfig) -> PlanOutcome {
    search(task, new_init, config)
}

pub fn plan_with(task: &GroundTask, config: &SearchConfig) -> PlanOutcome {
    search(task, &task.init, config)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanInvalid {
    /// `step` is 1-based.
    #[error("step {step} inapplicable")]
    Inapplicable {
        step: usize,
        action: String,
        missing: GroundAtom,
    },
    #[error("goal not reached")]
    GoalNotReached { missing: GroundAtom },
}

/// Sequential applicability from the task's initial state, then goal check.
pub fn check_plan(task: &GroundTask, plan: &Plan) -> Result<State, PlanInvalid> {
    let mut state = task.init.clone();
    for (i, a) in plan.steps.iter().enumerate() {
        state = crate::pddl::apply_strict(&state, a).map_err(|e| PlanInvalid::Inapplicable {
            step: i + 1,
            action: e.action,
            missing: e.missing,
        })?;
    }
    if let Some(missing) = task.goal.iter().find(|g| !state.contains(*g)) {
        return Err(PlanInvalid::GoalNotReached {
            missing: missing.clone(),
        });
    }
    Ok(state)
}

pub fn validate_plan(task: &GroundTask, plan: &Plan) -> bool {
    check_plan(task, plan).is_ok()
}

type Bits = Box<[u64]>;

struct Encoded {
    words: usize,
    pre: Vec<Bits>,
    add: Vec<Bits>,
    del: Vec<Bits>,
    goal: Bits,
    /// Sparse forms of `pre`, `add` and `goal` for the heuristic.
    pre_idx: Vec<Vec<usize>>,
    add_idx: Vec<Vec<usize>>,
    goal_idx: Vec<usize>,
}

fn encode_set(task: &GroundTask, words: usize, atoms: &State) -> Bits {
    let mut bits = vec![0u64; words].into_boxed_slice();
    for a in atoms {
        // Atoms outside the universe cannot affect any action or the goal.
        if let Ok(i) = task.atoms.binary_search(a) {
            bits[i / 64] |= 1 << (i % 64);
        }
    }
    bits
}

fn encode(task: &GroundTask) -> Encoded {
    let words = task.atoms.len().div_ceil(64).max(1);
    let enc = |s: &State| encode_set(task, words, s);
    Encoded {
        words,
        pre: task.actions.iter().map(|a| enc(&a.pre)).collect(),
        add: task.actions.iter().map(|a| enc(&a.add)).collect(),
        del: task.actions.iter().map(|a| enc(&a.del)).collect(),
        goal: enc(&task.goal),
        pre_idx: task.actions.iter().map(|a| indices(task, &a.pre)).collect(),
        add_idx: task.actions.iter().map(|a| indices(task, &a.add)).collect(),
        goal_idx: indices(task, &task.goal),
    }
}

fn indices(task: &GroundTask, atoms: &State) -> Vec<usize> {
    atoms.iter().filter_map(|a| task.atoms.binary_search(a).ok()).collect()
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x & !y == 0)
}

fn successor(state: &[u64], add: &[u64], del: &[u64]) -> Bits {
    state
        .iter()
        .zip(add.iter().zip(del))
        .map(|(s, (a, d))| (s & !d) | a)
        .collect()
}

struct Node {
    state: Bits,
    parent: usize,
    action: usize,
}

fn extract(task: &GroundTask, nodes: &[Node], mut i: usize) -> Plan {
    let mut steps = Vec::new();
    while i != 0 {
        steps.push(task.actions[nodes[i].action].clone());
        i = nodes[i].parent;
    }
    steps.reverse();
    Plan { steps }
}

fn search(task: &GroundTask, init: &State, config: &SearchConfig) -> PlanOutcome {
    let enc = encode(task);
    let start = encode_set(task, enc.words, init);
    if task.goal.iter().any(|g| task.atoms.binary_search(g).is_err()) {
        return PlanOutcome::Unsolvable;
    }
    // Unreachable even with deletes ignored: no need to exhaust the space.
    if h_add(&enc, task.atoms.len(), &start).is_none() {
        return PlanOutcome::Unsolvable;
    }
    match config.strategy {
        Strategy::BreadthFirst => bfs(task, &enc, start, config.max_expansions),
        Strategy::AStarAdditive => astar(task, &enc, start, config.max_expansions),
    }
}

fn bfs(task: &GroundTask, enc: &Encoded, start: Bits, budget: usize) -> PlanOutcome {
    if subset(&enc.goal, &start) {
        return PlanOutcome::Solved(Plan::default());
    }
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: 0,
        action: usize::MAX,
    }];
    let mut seen: HashMap<Bits, usize> = HashMap::from([(start, 0)]);
    let mut queue = VecDeque::from([0usize]);
    let mut expanded = 0;
    while let Some(i) = queue.pop_front() {
        if expanded == budget {
            return PlanOutcome::BudgetExceeded(expanded);
        }
        expanded += 1;
        for a in 0..task.actions.len() {
            if !subset(&enc.pre[a], &nodes[i].state) {
                continue;
            }
            let next = successor(&nodes[i].state, &enc.add[a], &enc.del[a]);
            if let Entry::Vacant(slot) = seen.entry(next.clone()) {
                let id = nodes.len();
                slot.insert(id);
                let reached = subset(&enc.goal, &next);
                nodes.push(Node {
                    state: next,
                    parent: i,
                    action: a,
                });
                if reached {
                    return PlanOutcome::Solved(extract(task, &nodes, id));
                }
                queue.push_back(id);
            }
        }
    }
    PlanOutcome::Unsolvable
}

/// Additive heuristic: sum over goal atoms of their relaxed cost.
fn h_add(enc: &Encoded, n_atoms: usize, state: &[u64]) -> Option<u64> {
    const INF: u64 = u64::MAX / 4;
    let mut cost: Vec<u64> = (0..n_atoms)
        .map(|i| if state[i / 64] >> (i % 64) & 1 == 1 { 0 } else { INF })
        .collect();
    loop {
        let mut changed = false;
        for (pre, add) in enc.pre_idx.iter().zip(&enc.add_idx) {
            let c = pre.iter().fold(1u64, |c, &i| c.saturating_add(cost[i]));
            if c >= INF {
                continue;
            }
            for &i in add {
                if c < cost[i] {
                    cost[i] = c;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut h = 0u64;
    for &i in &enc.goal_idx {
        if cost[i] >= INF {
            return None;
        }
        h += cost[i];
    }
    Some(h)
}

fn astar(task: &GroundTask, enc: &Encoded, start: Bits, budget: usize) -> PlanOutcome {
    let n_atoms = task.atoms.len();
    let Some(h0) = h_add(enc, n_atoms, &start) else {
        return PlanOutcome::Unsolvable;
    };
    let mut nodes = vec![Node {
        state: start.clone(),
        parent: 0,
        action: usize::MAX,
    }];
    let mut best_g: HashMap<Bits, (u64, usize)> = HashMap::from([(start, (0, 0))]);
    // (f, h, insertion order) keeps pops deterministic.
    let mut open = BinaryHeap::from([Reverse((h0, h0, 0usize, 0u64))]);
    let mut expanded = 0;
    while let Some(Reverse((_, _, i, g))) = open.pop() {
        if best_g[&nodes[i].state].0 < g {
            continue;
        }
        if subset(&enc.goal, &nodes[i].state) {
            return PlanOutcome::Solved(extract(task, &nodes, i));
        }
        if expanded == budget {
            return PlanOutcome::BudgetExceeded(expanded);
        }
        expanded += 1;
        for a in 0..task.actions.len() {
            if !subset(&enc.pre[a], &nodes[i].state) {
                continue;
            }
            let next = successor(&nodes[i].state, &enc.add[a], &enc.del[a]);
            let ng = g + 1;
            if best_g.get(&next).is_some_and(|&(bg, _)| bg <= ng) {
                continue;
            }
            let Some(h) = h_add(enc, n_atoms, &next) else {
                continue;
            };
            let id = nodes.len();
            best_g.insert(next.clone(), (ng, id));
            nodes.push(Node {
                state: next,
                parent: i,
                action: a,
            });
            open.push(Reverse((ng + h, h, id, ng)));
        }
    }
    PlanOutcome::Unsolvable
}
