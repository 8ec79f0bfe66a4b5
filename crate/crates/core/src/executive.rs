//! Closed-loop controllers. Each policy executes a symbolic plan in a
//! [`World`] and learns about the world only through oracle answers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::pddl::{self, GroundAction, GroundAtom, GroundTask, State};
use crate::planner::{self, Plan, PlanOutcome, SearchConfig};
use crate::rng;
use crate::vqa::{
    Answer, Oracle, OracleProfile, QueryStyle, Reply, SimulatedOracle, Target, TemplateTable, VqaError,
};
use crate::worldsim::{RegressionRules, World, WorldConfig, WorldError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    #[serde(rename = "tpvqa")]
    Tpvqa,
    #[serde(rename = "effectvqa")]
    EffectVqa,
    #[serde(rename = "tp")]
    TpOpenLoop,
    #[serde(rename = "successvqa")]
    SuccessVqa,
    #[serde(rename = "palmevqa")]
    PalmEVqa,
}

impl Policy {
    pub const ALL: [Policy; 5] = [
        Policy::Tpvqa,
        Policy::EffectVqa,
        Policy::TpOpenLoop,
        Policy::SuccessVqa,
        Policy::PalmEVqa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Tpvqa => "tpvqa",
            Policy::EffectVqa => "effectvqa",
            Policy::TpOpenLoop => "tp",
            Policy::SuccessVqa => "successvqa",
            Policy::PalmEVqa => "palmevqa",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (expected tpvqa, effectvqa, tp, successvqa or palmevqa)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    pub max_retries_per_action: usize,
    pub max_replans: usize,
    pub max_total_steps: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            max_retries_per_action: 10,
            max_replans: 10,
            max_total_steps: 100,
        }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<(), ExecutiveError> {
        if self.max_retries_per_action == 0 || self.max_replans == 0 || self.max_total_steps == 0 {
            return Err(ExecutiveError::Config("budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ExecutiveError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Vqa(#[from] VqaError),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// One answered question and the reply that would mean "as expected".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Judged {
    pub target: Target,
    pub question: String,
    pub expected: Reply,
    pub answer: Answer,
}

impl Judged {
    pub fn unsatisfied(&self) -> bool {
        self.answer.reply != self.expected
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub answers: Vec<Judged>,
    pub unsatisfied_count: usize,
    pub satisfied: bool,
}

/// Unsatisfied only when a strict majority of answers say so; a tie or an
/// empty list counts as satisfied.
pub fn majority_satisfied(unsatisfied: usize, total: usize) -> bool {
    unsatisfied <= total / 2
}

impl Verdict {
    pub fn new(answers: Vec<Judged>) -> Self {
        let unsatisfied_count = answers.iter().filter(|j| j.unsatisfied()).count();
        Verdict {
            satisfied: majority_satisfied(unsatisfied_count, answers.len()),
            unsatisfied_count,
            answers,
        }
    }

    fn to_json(&self) -> Value {
        let answers: Vec<Value> = self
            .answers
            .iter()
            .map(|j| {
                json!({
                    "target": j.target.to_string(),
                    "question": j.question,
                    "expected": j.expected,
                    "reply": j.answer.reply,
                    "truthful": j.answer.truthful,
                    "abstained": j.answer.abstained,
                })
            })
            .collect();
        json!({
            "answers": answers,
            "unsatisfied": self.unsatisfied_count,
            "satisfied": self.satisfied,
        })
    }
}

fn ask(
    target: Target,
    style: QueryStyle,
    expected: Reply,
    observation: &crate::worldsim::Observation,
    templates: &TemplateTable,
    oracle: &mut dyn Oracle,
) -> Result<Judged, VqaError> {
    let q = templates.render(&target, style)?;
    let answer = oracle.answer(&q, observation)?;
    Ok(Judged {
        target,
        question: q.text,
        expected,
        answer,
    })
}

/// One precondition query per atom of `action.pre`.
pub fn check_preconditions(
    action: &GroundAction,
    observation: &crate::worldsim::Observation,
    templates: &TemplateTable,
    oracle: &mut dyn Oracle,
) -> Result<Verdict, VqaError> {
    let answers = action
        .pre
        .iter()
        .map(|a| {
            ask(
                Target::Atom(a.clone()),
                QueryStyle::PredicatePrecondition,
                Reply::Yes,
                observation,
                templates,
                oracle,
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(Verdict::new(answers))
}

/// Add effects should now hold, delete effects should not.
pub fn check_effects(
    action: &GroundAction,
    observation: &crate::worldsim::Observation,
    templates: &TemplateTable,
    oracle: &mut dyn Oracle,
) -> Result<Verdict, VqaError> {
    let wanted = action
        .add
        .iter()
        .map(|a| (a, Reply::Yes))
        .chain(action.del.iter().map(|a| (a, Reply::No)));
    let answers = wanted
        .map(|(a, expected)| {
            ask(
                Target::Atom(a.clone()),
                QueryStyle::PredicateEffect,
                expected,
                observation,
                templates,
                oracle,
            )
        })
        .collect::<Result<_, _>>()?;
    Ok(Verdict::new(answers))
}

/// Atoms assumed to hold once a possession-class atom is retracted.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FallbackMap {
    pub entries: BTreeMap<GroundAtom, Vec<GroundAtom>>,
}

impl FallbackMap {
    /// `in_hand(o)` falls back to the first `on(o, _)` atom of `init`.
    pub fn from_init(init: &State) -> Self {
        let mut entries = BTreeMap::new();
        for a in init {
            if a.predicate == "on" && a.args.len() == 2 {
                entries
                    .entry(GroundAtom::new("in_hand", [a.args[0].as_str()]))
                    .or_insert_with(|| vec![a.clone()]);
            }
        }
        FallbackMap { entries }
    }

    pub fn get(&self, atom: &GroundAtom) -> Option<&[GroundAtom]> {
        self.entries.get(atom).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Repair {
    pub belief: State,
    pub retracted: Vec<GroundAtom>,
    pub asserted: Vec<GroundAtom>,
    pub warnings: Vec<String>,
}

pub const DEFAULT_POSSESSION: [&str; 1] = ["in_hand"];

/// Retracts atoms answered No and asserts atoms answered Yes. A held object
/// that turns out not to be held is assumed back at its fallback location.
/// Rigid atoms are never retracted: no action can restore them, so a single
/// wrong answer would otherwise make the task unsolvable for good.
pub fn repair_belief(
    belief: &State,
    verdict: &Verdict,
    fallback: &FallbackMap,
    possession: &[&str],
    rigid: &State,
) -> Repair {
    let mut out = Repair {
        belief: belief.clone(),
        ..Repair::default()
    };
    for j in &verdict.answers {
        let Target::Atom(atom) = &j.target else {
            continue;
        };
        match j.answer.reply {
            Reply::No if rigid.contains(atom) => {}
            Reply::No => {
                let was_believed = out.belief.remove(atom);
                out.retracted.push(atom.clone());
                if was_believed && possession.contains(&atom.predicate.as_str()) {
                    match fallback.get(atom) {
                        Some(atoms) => {
                            for a in atoms {
                                if out.belief.insert(a.clone()) {
                                    out.asserted.push(a.clone());
                                }
                            }
                        }
                        None => out.warnings.push(format!("no fallback for {atom}")),
                    }
                }
            }
            Reply::Yes => {
                if out.belief.insert(atom.clone()) {
                    out.asserted.push(atom.clone());
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Plan,
    Precheck,
    Execute,
    Effectcheck,
    Repair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: usize,
    pub phase: Phase,
    pub payload: Value,
}

/// Line-delimited JSON, one event per line.
pub fn trace_to_jsonl(trace: &[TraceEvent]) -> String {
    trace
        .iter()
        .map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n")
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    GoalReached,
    BudgetExhausted,
    Unsolvable,
    /// The policy ran out of plan while the goal still does not hold.
    PlanExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub completed: bool,
    pub steps_taken: usize,
    pub replans: usize,
    pub retries: usize,
    /// Most retries spent on any single plan step.
    pub peak_retries: usize,
    pub failure_reason: FailureReason,
    pub trace: Vec<TraceEvent>,
}

/// Everything a trial needs apart from the policy and the seed.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub task_id: String,
    pub task: GroundTask,
    pub templates: TemplateTable,
    pub world: WorldConfig,
    pub budgets: Budgets,
    pub fallback: FallbackMap,
    pub possession: Vec<&'static str>,
    pub search: SearchConfig,
    pub record_trace: bool,
    /// Atoms repair never retracts; see [`repair_belief`].
    pub rigid: State,
    /// Plan from `task.init`, filled by the first trial. Every trial starts
    /// from the same belief, so it is searched once.
    initial_plan: OnceLock<PlanOutcome>,
}

impl TrialSetup {
    pub fn new(task_id: &str, task: GroundTask, world: WorldConfig, budgets: Budgets) -> Self {
        TrialSetup {
            task_id: task_id.to_string(),
            fallback: FallbackMap::from_init(&task.init),
            rigid: task.rigid_atoms(),
            task,
            templates: TemplateTable::kitchen(),
            world,
            budgets,
            possession: DEFAULT_POSSESSION.to_vec(),
            search: SearchConfig::default(),
            record_trace: false,
            initial_plan: OnceLock::new(),
        }
    }

    /// A bundled kitchen task with the bundled regression rules, default
    /// failure probabilities and default budgets.
    pub fn kitchen(task_id: &str) -> Result<Self, ExecutiveError> {
        let domain = pddl::parse_domain(crate::assets::KITCHEN_DOMAIN)
            .map_err(|e| ExecutiveError::Config(format!("kitchen.pddl:{e}")))?;
        let task = crate::assets::load_task(task_id).map_err(ExecutiveError::Config)?;
        let rules = RegressionRules::kitchen(&domain)?;
        Ok(Self::new(task_id, task, WorldConfig::new(rules, 0), Budgets::default()))
    }
}

/// Runs one trial against the simulated oracle. The world and the oracle
/// draw from separate streams derived from `seed`.
pub fn run_trial(
    policy: Policy,
    setup: &TrialSetup,
    profile: &OracleProfile,
    seed: u64,
) -> Result<TrialResult, ExecutiveError> {
    let mut oracle = SimulatedOracle::new(profile.clone(), &setup.task_id, rng::derive(seed, &[2]));
    run_trial_with(policy, setup, seed, &mut oracle)
}

pub fn run_trial_with(
    policy: Policy,
    setup: &TrialSetup,
    seed: u64,
    oracle: &mut dyn Oracle,
) -> Result<TrialResult, ExecutiveError> {
    setup.budgets.validate()?;
    let world_config = WorldConfig {
        seed: rng::derive(seed, &[1]),
        ..setup.world.clone()
    };
    let world = World::reset(&setup.task, world_config)?;
    let mut run = Run {
        setup,
        world,
        oracle,
        belief: setup.task.init.clone(),
        steps: 0,
        replans: 0,
        retries: 0,
        peak_retries: 0,
        trace: Vec::new(),
    };
    let reason = run.control(policy)?;
    Ok(TrialResult {
        completed: reason == FailureReason::GoalReached,
        steps_taken: run.steps,
        replans: run.replans,
        retries: run.retries,
        peak_retries: run.peak_retries,
        failure_reason: reason,
        trace: run.trace,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Before {
    Nothing,
    Preconditions,
    Affordance,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum After {
    Nothing,
    Effects,
    Success,
}

struct Run<'a> {
    setup: &'a TrialSetup,
    world: World,
    oracle: &'a mut dyn Oracle,
    belief: State,
    steps: usize,
    replans: usize,
    retries: usize,
    peak_retries: usize,
    trace: Vec<TraceEvent>,
}

enum Replanned {
    Plan(Plan),
    Stop(FailureReason),
}

impl Run<'_> {
    fn emit(&mut self, phase: Phase, payload: impl FnOnce() -> Value) {
        if self.setup.record_trace {
            self.trace.push(TraceEvent {
                step: self.steps,
                phase,
                payload: payload(),
            });
        }
    }

    fn search(&mut self, reason: &str) -> Replanned {
        let outcome = if self.belief == self.setup.task.init {
            self.setup
                .initial_plan
                .get_or_init(|| planner::replan_with(&self.setup.task, &self.belief, &self.setup.search))
                .clone()
        } else {
            planner::replan_with(&self.setup.task, &self.belief, &self.setup.search)
        };
        self.emit(Phase::Plan, || match &outcome {
            PlanOutcome::Solved(p) => json!({"reason": reason, "plan": p.names()}),
            PlanOutcome::Unsolvable => json!({"reason": reason, "unsolvable": true}),
            PlanOutcome::BudgetExceeded(n) => json!({"reason": reason, "budget_exceeded": n}),
        });
        match outcome {
            PlanOutcome::Solved(p) => Replanned::Plan(p),
            PlanOutcome::Unsolvable => Replanned::Stop(FailureReason::Unsolvable),
            PlanOutcome::BudgetExceeded(_) => Replanned::Stop(FailureReason::BudgetExhausted),
        }
    }

    fn replan(&mut self) -> Replanned {
        if self.replans == self.setup.budgets.max_replans {
            return Replanned::Stop(FailureReason::BudgetExhausted);
        }
        self.replans += 1;
        self.search("replan")
    }

    fn control(&mut self, policy: Policy) -> Result<FailureReason, ExecutiveError> {
        let (before, after) = match policy {
            Policy::Tpvqa => (Before::Preconditions, After::Effects),
            Policy::EffectVqa => (Before::Nothing, After::Effects),
            Policy::TpOpenLoop => (Before::Nothing, After::Nothing),
            Policy::SuccessVqa => (Before::Nothing, After::Success),
            Policy::PalmEVqa => (Before::Affordance, After::Success),
        };
        let mut plan = match self.search("initial") {
            Replanned::Plan(p) => p,
            Replanned::Stop(r) => return Ok(r),
        };
        'plan: loop {
            for action in plan.steps.clone() {
                let mut attempts = 0;
                loop {
                    if let Some(stop) = self.before(before, &action)? {
                        match stop {
                            Replanned::Plan(p) => {
                                plan = p;
                                continue 'plan;
                            }
                            Replanned::Stop(r) => return Ok(r),
                        }
                    }
                    if self.steps == self.setup.budgets.max_total_steps {
                        return Ok(FailureReason::BudgetExhausted);
                    }
                    let outcome = self.world.execute(&action)?;
                    self.steps += 1;
                    self.emit(Phase::Execute, || {
                        json!({
                            "action": action.name(),
                            "succeeded": outcome.succeeded,
                            "regressed": outcome.regressed,
                        })
                    });
                    if self.world.goal_reached(&self.setup.task) {
                        return Ok(FailureReason::GoalReached);
                    }
                    if self.after(after, &action)? {
                        self.belief = pddl::apply(&self.belief, &action);
                        break;
                    }
                    if attempts == self.setup.budgets.max_retries_per_action {
                        return Ok(FailureReason::BudgetExhausted);
                    }
                    attempts += 1;
                    self.retries += 1;
                    self.peak_retries = self.peak_retries.max(attempts);
                }
            }
            return Ok(FailureReason::PlanExhausted);
        }
    }

    /// `Some` when the policy abandons the current plan.
    fn before(&mut self, mode: Before, action: &GroundAction) -> Result<Option<Replanned>, ExecutiveError> {
        match mode {
            Before::Nothing => Ok(None),
            Before::Preconditions => {
                let obs = self.world.observe()?;
                let v = check_preconditions(action, &obs, &self.setup.templates, self.oracle)?;
                self.emit(Phase::Precheck, || {
                    let mut p = v.to_json();
                    p["action"] = json!(action.name());
                    p
                });
                if v.satisfied {
                    return Ok(None);
                }
                let repair = repair_belief(
                    &self.belief,
                    &v,
                    &self.setup.fallback,
                    &self.setup.possession,
                    &self.setup.rigid,
                );
                self.emit(Phase::Repair, || {
                    json!({
                        "retracted": repair.retracted.iter().map(ToString::to_string).collect::<Vec<_>>(),
                        "asserted": repair.asserted.iter().map(ToString::to_string).collect::<Vec<_>>(),
                        "warnings": repair.warnings,
                    })
                });
                self.belief = repair.belief;
                Ok(Some(self.replan()))
            }
            Before::Affordance => {
                let obs = self.world.observe()?;
                let j = ask(
                    Target::Action(action.clone()),
                    QueryStyle::NameAffordance,
                    Reply::Yes,
                    &obs,
                    &self.setup.templates,
                    self.oracle,
                )?;
                let v = Verdict::new(vec![j]);
                self.emit(Phase::Precheck, || {
                    let mut p = v.to_json();
                    p["action"] = json!(action.name());
                    p
                });
                if v.satisfied {
                    return Ok(None);
                }
                let retracted: Vec<GroundAtom> = action
                    .pre
                    .iter()
                    .filter(|a| !self.setup.rigid.contains(*a) && self.belief.contains(*a))
                    .cloned()
                    .collect();
                for a in &retracted {
                    self.belief.remove(a);
                }
                self.emit(Phase::Repair, || {
                    json!({
                        "retracted": retracted.iter().map(ToString::to_string).collect::<Vec<_>>(),
                        "asserted": [],
                        "warnings": [],
                    })
                });
                Ok(Some(self.replan()))
            }
        }
    }

    /// Whether the policy believes the action worked.
    fn after(&mut self, mode: After, action: &GroundAction) -> Result<bool, ExecutiveError> {
        let v = match mode {
            After::Nothing => return Ok(true),
            After::Effects => {
                let obs = self.world.observe()?;
                check_effects(action, &obs, &self.setup.templates, self.oracle)?
            }
            After::Success => {
                let obs = self.world.observe()?;
                let j = ask(
                    Target::Action(action.clone()),
                    QueryStyle::NameSuccess,
                    Reply::Yes,
                    &obs,
                    &self.setup.templates,
                    self.oracle,
                )?;
                Verdict::new(vec![j])
            }
        };
        self.emit(Phase::Effectcheck, || {
            let mut p = v.to_json();
            p["action"] = json!(action.name());
            p
        });
        Ok(v.satisfied)
    }
}
