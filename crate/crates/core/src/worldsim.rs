//! Ground-truth environment. Commanded actions fail with probability
//! `p_fail` (always, when their true preconditions do not hold), and a
//! failure may additionally regress earlier progress according to per-schema
//! rules. Policies never see the true state: an [`Observation`] only opens
//! up to the oracle.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Deserialize;
use thiserror::Error;

use crate::pddl::{self, Domain, GroundAction, GroundAtom, GroundTask, Literal, State, Term};
use crate::rng::{self, Rng};
use crate::vqa::OracleKey;

pub const POOL_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorldError {
    #[error("invalid world config: {0}")]
    Config(String),
    #[error("invalid regression rules: {0}")]
    Rules(String),
    #[error("invalid image manifest: {0}")]
    Manifest(String),
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("image manifest has no {outcome} pool for `{action}`")]
    MissingPool { action: String, outcome: &'static str },
}

/// One candidate regression of a failed action. Patterns range over the
/// trigger schema's parameters and domain constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegressionRule {
    pub trigger: String,
    pub params: Vec<String>,
    pub reverts: Vec<Literal>,
    pub restores: Vec<Literal>,
}

impl RegressionRule {
    fn bind(&self, patterns: &[Literal], binding: &[String]) -> State {
        patterns
            .iter()
            .map(|lit| GroundAtom {
                predicate: lit.predicate.clone(),
                args: lit
                    .args
                    .iter()
                    .map(|t| match t {
                        Term::Const(c) => c.clone(),
                        Term::Var(v) => {
                            let i = self.params.iter().position(|p| p == v).expect("checked at load");
                            binding[i].clone()
                        }
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn reverts_for(&self, action: &GroundAction) -> State {
        self.bind(&self.reverts, &action.binding)
    }

    pub fn restores_for(&self, action: &GroundAction) -> State {
        self.bind(&self.restores, &action.binding)
    }
}

/// Candidate regressions per schema, in preference order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegressionRules {
    pub rules: BTreeMap<String, Vec<RegressionRule>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    reverts: Vec<String>,
    #[serde(default)]
    restores: Vec<String>,
}

impl RegressionRules {
    /// Reads `{"schema": [{"reverts": ["in_hand(?o)"], "restores": [...]}]}`
    /// and checks every pattern against `domain`.
    pub fn from_json(text: &str, domain: &Domain) -> Result<Self, WorldError> {
        let raw: BTreeMap<String, Vec<RawRule>> =
            serde_json::from_str(text).map_err(|e| WorldError::Rules(e.to_string()))?;
        let mut rules = BTreeMap::new();
        for (trigger, candidates) in raw {
            let schema = domain
                .schema(&trigger)
                .ok_or_else(|| WorldError::Rules(format!("unknown schema `{trigger}`")))?;
            let params: Vec<String> = schema.parameters.iter().map(|p| p.name.clone()).collect();
            let mut list = Vec::new();
            for c in candidates {
                let pattern = |text: &String| pattern(text, &params, domain, &trigger);
                list.push(RegressionRule {
                    trigger: trigger.clone(),
                    params: params.clone(),
                    reverts: c.reverts.iter().map(pattern).collect::<Result<_, _>>()?,
                    restores: c.restores.iter().map(pattern).collect::<Result<_, _>>()?,
                });
            }
            rules.insert(trigger, list);
        }
        Ok(RegressionRules { rules })
    }

    pub fn kitchen(domain: &Domain) -> Result<Self, WorldError> {
        Self::from_json(crate::assets::REGRESSIONS_JSON, domain)
    }

    pub fn candidates(&self, schema: &str) -> &[RegressionRule] {
        self.rules.get(schema).map_or(&[], Vec::as_slice)
    }
}

fn pattern(text: &str, params: &[String], domain: &Domain, trigger: &str) -> Result<Literal, WorldError> {
    let (predicate, args) = pddl::sexpr::read_call_syntax(text).map_err(|e| WorldError::Rules(e.to_string()))?;
    let decl = domain
        .predicate(&predicate)
        .ok_or_else(|| WorldError::Rules(format!("undeclared predicate in `{text}`")))?;
    if decl.arity() != args.len() {
        return Err(WorldError::Rules(format!("wrong arity in `{text}`")));
    }
    let mut terms = Vec::new();
    for a in args {
        match a.strip_prefix('?') {
            Some(v) if params.iter().any(|p| p == v) => terms.push(Term::Var(v.to_string())),
            Some(v) => {
                return Err(WorldError::Rules(format!("`?{v}` is not a parameter of `{trigger}`")))
            }
            None if domain.constants.iter().any(|c| c.name == a) => terms.push(Term::Const(a)),
            None => return Err(WorldError::Rules(format!("`{a}` is not a domain constant"))),
        }
    }
    Ok(Literal { predicate, args: terms })
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePools {
    pub success: Vec<String>,
    pub failure: Vec<String>,
}

/// Observation image pools keyed by action identifier, e.g. `wash(plate)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageManifest {
    pub pools: BTreeMap<String, ImagePools>,
}

impl ImageManifest {
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let pools: BTreeMap<String, ImagePools> =
            serde_json::from_str(text).map_err(|e| WorldError::Manifest(e.to_string()))?;
        for (action, p) in &pools {
            for (kind, list) in [("success", &p.success), ("failure", &p.failure)] {
                if list.len() != POOL_SIZE {
                    return Err(WorldError::Manifest(format!(
                        "`{action}` {kind} pool has {} images, expected {POOL_SIZE}",
                        list.len()
                    )));
                }
            }
        }
        Ok(ImageManifest { pools })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldConfig {
    pub p_fail: f64,
    /// Conditional on failure.
    pub p_regress: f64,
    pub regression_rules: RegressionRules,
    pub seed: u64,
    pub manifest: Option<ImageManifest>,
}

impl WorldConfig {
    pub fn new(regression_rules: RegressionRules, seed: u64) -> Self {
        WorldConfig {
            p_fail: 0.25,
            p_regress: 0.25,
            regression_rules,
            seed,
            manifest: None,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        for (name, p) in [("p_fail", self.p_fail), ("p_regress", self.p_regress)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(WorldError::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Result of one commanded action. The true state itself stays inside the
/// world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutionOutcome {
    pub succeeded: bool,
    pub regressed: bool,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct LastExecution {
    action: String,
    succeeded: bool,
}

/// A snapshot of the world taken after the last command. Only the oracle,
/// holding an [`OracleKey`], can look inside.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    snapshot: State,
    last: Option<LastExecution>,
    pub image_ref: Option<String>,
}

impl Observation {
    pub fn last_action(&self) -> Option<&str> {
        self.last.as_ref().map(|l| l.action.as_str())
    }

    pub fn snapshot(&self, _key: &OracleKey) -> &State {
        &self.snapshot
    }

    /// Whether the last command succeeded; `None` before any command.
    pub fn last_succeeded(&self, _key: &OracleKey) -> Option<bool> {
        self.last.as_ref().map(|l| l.succeeded)
    }
}

#[derive(Debug, Clone)]
pub struct World {
    task: GroundTask,
    config: WorldConfig,
    state: State,
    achieved: HashMap<GroundAtom, usize>,
    step: usize,
    last: Option<LastExecution>,
    outcome_rng: Rng,
    image_rng: Rng,
}

impl World {
    pub fn reset(task: &GroundTask, config: WorldConfig) -> Result<World, WorldError> {
        config.validate()?;
        Ok(World {
            task: task.clone(),
            state: task.init.clone(),
            achieved: task.init.iter().map(|a| (a.clone(), 0)).collect(),
            step: 0,
            last: None,
            outcome_rng: rng::stream(rng::derive(config.seed, &[0])),
            image_rng: rng::stream(rng::derive(config.seed, &[1])),
            config,
        })
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn execute(&mut self, action: &GroundAction) -> Result<ExecutionOutcome, WorldError> {
        if !self.task.actions.contains(action) {
            return Err(WorldError::UnknownAction(action.name()));
        }
        self.step += 1;
        let succeeded =
            pddl::applicable(&self.state, action) && self.outcome_rng.gen::<f64>() >= self.config.p_fail;
        let mut regressed = false;
        if succeeded {
            self.state = pddl::apply(&self.state, action);
            for a in &action.add {
                self.achieved.insert(a.clone(), self.step);
            }
        } else if self.outcome_rng.gen::<f64>() < self.config.p_regress {
            regressed = self.regress(action);
        }
        self.last = Some(LastExecution {
            action: action.name(),
            succeeded,
        });
        Ok(ExecutionOutcome {
            succeeded,
            regressed,
            step: self.step,
        })
    }

    /// Applies the candidate whose reverted atoms were achieved most
    /// recently; earlier candidates win ties.
    fn regress(&mut self, action: &GroundAction) -> bool {
        let mut best: Option<(usize, State, State)> = None;
        for rule in self.config.regression_rules.candidates(&action.schema) {
            let reverts = rule.reverts_for(action);
            if reverts.is_empty() || !reverts.is_subset(&self.state) {
                continue;
            }
            let recency = reverts.iter().map(|a| self.achieved.get(a).copied().unwrap_or(0)).max().unwrap_or(0);
            if best.as_ref().is_none_or(|(r, _, _)| recency > *r) {
                best = Some((recency, reverts, rule.restores_for(action)));
            }
        }
        let Some((_, reverts, restores)) = best else {
            return false;
        };
        for a in &reverts {
            self.state.remove(a);
        }
        for a in restores {
            self.achieved.insert(a.clone(), self.step);
            self.state.insert(a);
        }
        true
    }

    pub fn observe(&mut self) -> Result<Observation, WorldError> {
        let image_ref = match (&self.config.manifest, &self.last) {
            (Some(m), Some(last)) => {
                let outcome = if last.succeeded { "success" } else { "failure" };
                let pools = m.pools.get(&last.action).ok_or_else(|| WorldError::MissingPool {
                    action: last.action.clone(),
                    outcome,
                })?;
                let pool = if last.succeeded { &pools.success } else { &pools.failure };
                pool.choose(&mut self.image_rng).cloned()
            }
            _ => None,
        };
        Ok(Observation {
            snapshot: self.state.clone(),
            last: self.last.clone(),
            image_ref,
        })
    }

    pub fn goal_reached(&self, task: &GroundTask) -> bool {
        task.goal.is_subset(&self.state)
    }
}
