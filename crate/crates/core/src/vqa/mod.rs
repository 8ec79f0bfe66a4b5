//! Yes/no questions about atoms and actions, answered by a simulated noisy
//! oracle or by a remote VQA service.

mod remote;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pddl::{Domain, GroundAction, GroundAtom};
use crate::rng::Rng;
use crate::worldsim::Observation;

pub use remote::{RemoteConfig, RemoteError, RemoteOracle};

/// Capability to read an [`Observation`]'s hidden contents. It can only be
/// created inside this module, so policies cannot peek at the true state.
pub struct OracleKey {
    _private: (),
}

const KEY: OracleKey = OracleKey { _private: () };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryStyle {
    #[serde(rename = "precondition")]
    PredicatePrecondition,
    #[serde(rename = "effect")]
    PredicateEffect,
    #[serde(rename = "affordance")]
    NameAffordance,
    #[serde(rename = "success")]
    NameSuccess,
}

impl QueryStyle {
    pub const ALL: [QueryStyle; 4] = [
        QueryStyle::PredicatePrecondition,
        QueryStyle::NameAffordance,
        QueryStyle::PredicateEffect,
        QueryStyle::NameSuccess,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QueryStyle::PredicatePrecondition => "precondition",
            QueryStyle::PredicateEffect => "effect",
            QueryStyle::NameAffordance => "affordance",
            QueryStyle::NameSuccess => "success",
        }
    }

    /// Name styles ask about a whole action rather than one atom.
    pub fn is_name_style(self) -> bool {
        matches!(self, QueryStyle::NameAffordance | QueryStyle::NameSuccess)
    }
}

impl fmt::Display for QueryStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for QueryStyle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        QueryStyle::ALL
            .into_iter()
            .find(|q| q.as_str() == s)
            .ok_or_else(|| format!("unknown query style `{s}` (expected precondition, effect, affordance or success)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VqaError {
    #[error("invalid template table: {0}")]
    Templates(String),
    #[error("no {style} template for `{name}`")]
    MissingTemplate { name: String, style: QueryStyle },
    #[error("{style} questions take {expected} targets")]
    WrongTarget { style: QueryStyle, expected: &'static str },
    #[error("template for `{name}` needs argument {{{slot}}}")]
    MissingArgument { name: String, slot: usize },
    #[error("oracle profile `{profile}` has no entry for ({task}, {style})")]
    MissingProfileEntry { profile: String, task: String, style: QueryStyle },
    #[error("invalid oracle profile: {0}")]
    Profile(String),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTemplate {
    /// Predicate name for predicate styles, schema name for name styles.
    pub predicate: String,
    pub style: QueryStyle,
    pub pattern: String,
}

impl QuestionTemplate {
    /// Highest `{i}` slot plus one.
    pub fn slot_count(&self) -> usize {
        let mut n = 0;
        let mut rest = self.pattern.as_str();
        while let Some(i) = rest.find('{') {
            rest = &rest[i + 1..];
            if let Some(j) = rest.find('}') {
                if let Ok(k) = rest[..j].parse::<usize>() {
                    n = n.max(k + 1);
                }
                rest = &rest[j + 1..];
            }
        }
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Atom(GroundAtom),
    Action(GroundAction),
}

impl Target {
    fn name(&self) -> &str {
        match self {
            Target::Atom(a) => &a.predicate,
            Target::Action(a) => &a.schema,
        }
    }

    fn args(&self) -> &[String] {
        match self {
            Target::Atom(a) => &a.args,
            Target::Action(a) => &a.binding,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Atom(a) => a.fmt(f),
            Target::Action(a) => a.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub text: String,
    pub target: Target,
    pub style: QueryStyle,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateTable {
    entries: BTreeMap<(QueryStyle, String), QuestionTemplate>,
}

impl TemplateTable {
    pub fn from_templates(list: Vec<QuestionTemplate>) -> Result<Self, VqaError> {
        let mut entries = BTreeMap::new();
        for t in list {
            let key = (t.style, t.predicate.clone());
            if entries.insert(key, t.clone()).is_some() {
                return Err(VqaError::Templates(format!("duplicate {} template for `{}`", t.style, t.predicate)));
            }
        }
        Ok(TemplateTable { entries })
    }

    pub fn from_json(text: &str) -> Result<Self, VqaError> {
        let list: Vec<QuestionTemplate> =
            serde_json::from_str(text).map_err(|e| VqaError::Templates(e.to_string()))?;
        Self::from_templates(list)
    }

    pub fn kitchen() -> Self {
        Self::from_json(crate::assets::TEMPLATES_JSON).expect("bundled templates are valid")
    }

    pub fn get(&self, style: QueryStyle, name: &str) -> Option<&QuestionTemplate> {
        self.entries.get(&(style, name.to_string()))
    }

    /// Checks that every predicate has both predicate-style templates and
    /// every schema both name-style templates, with matching slot counts.
    pub fn check_covers(&self, domain: &Domain) -> Result<(), VqaError> {
        let mut wanted: Vec<(QueryStyle, &str, usize)> = Vec::new();
        for p in &domain.predicates {
            for s in [QueryStyle::PredicatePrecondition, QueryStyle::PredicateEffect] {
                wanted.push((s, &p.name, p.arity()));
            }
        }
        for a in &domain.schemas {
            for s in [QueryStyle::NameAffordance, QueryStyle::NameSuccess] {
                wanted.push((s, &a.name, a.parameters.len()));
            }
        }
        for (style, name, arity) in wanted {
            let t = self.get(style, name).ok_or_else(|| VqaError::MissingTemplate {
                name: name.to_string(),
                style,
            })?;
            if t.slot_count() != arity {
                return Err(VqaError::Templates(format!(
                    "{style} template for `{name}` has {} slots, expected {arity}",
                    t.slot_count()
                )));
            }
        }
        Ok(())
    }

    pub fn render(&self, target: &Target, style: QueryStyle) -> Result<Question, VqaError> {
        match (target, style.is_name_style()) {
            (Target::Atom(_), true) => return Err(VqaError::WrongTarget { style, expected: "action" }),
            (Target::Action(_), false) => return Err(VqaError::WrongTarget { style, expected: "atom" }),
            _ => {}
        }
        let t = self.get(style, target.name()).ok_or_else(|| VqaError::MissingTemplate {
            name: target.name().to_string(),
            style,
        })?;
        let args = target.args();
        let slots = t.slot_count();
        if slots > args.len() {
            return Err(VqaError::MissingArgument {
                name: target.name().to_string(),
                slot: args.len(),
            });
        }
        let mut text = t.pattern.clone();
        for (i, a) in args.iter().enumerate().take(slots) {
            text = text.replace(&format!("{{{i}}}"), a);
        }
        Ok(Question {
            text,
            target: target.clone(),
            style,
        })
    }

    pub fn render_atom(&self, atom: &GroundAtom, style: QueryStyle) -> Result<Question, VqaError> {
        self.render(&Target::Atom(atom.clone()), style)
    }

    pub fn render_action(&self, action: &GroundAction, style: QueryStyle) -> Result<Question, VqaError> {
        self.render(&Target::Action(action.clone()), style)
    }
}

/// Per-(task, style) probability that the oracle answers truthfully.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleProfile {
    pub name: String,
    pub accuracy: BTreeMap<String, BTreeMap<QueryStyle, f64>>,
}

impl OracleProfile {
    /// Measured accuracies of an off-the-shelf VQA model on the three
    /// kitchen tasks.
    pub fn measured() -> Self {
        let rows = [
            ("clean_dishes", [0.63, 0.58, 0.79, 0.45]),
            ("serve_breakfast", [0.53, 0.33, 0.60, 0.30]),
            ("eat_apple", [0.70, 0.43, 0.71, 0.47]),
        ];
        let accuracy = rows
            .into_iter()
            .map(|(task, values)| (task.to_string(), QueryStyle::ALL.into_iter().zip(values).collect()))
            .collect();
        OracleProfile {
            name: "measured".into(),
            accuracy,
        }
    }

    pub fn uniform(name: &str, tasks: &[&str], p: f64) -> Self {
        let accuracy = tasks
            .iter()
            .map(|t| (t.to_string(), QueryStyle::ALL.into_iter().map(|s| (s, p)).collect()))
            .collect();
        OracleProfile {
            name: name.into(),
            accuracy,
        }
    }

    pub fn perfect() -> Self {
        Self::uniform("perfect", &crate::assets::TASK_IDS, 1.0)
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "measured" => Some(Self::measured()),
            "perfect" => Some(Self::perfect()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), VqaError> {
        for (task, row) in &self.accuracy {
            for (style, p) in row {
                if !(0.0..=1.0).contains(p) {
                    return Err(VqaError::Profile(format!("({task}, {style}) = {p} is outside [0, 1]")));
                }
            }
        }
        Ok(())
    }

    pub fn accuracy(&self, task: &str, style: QueryStyle) -> Result<f64, VqaError> {
        self.accuracy
            .get(task)
            .and_then(|row| row.get(&style))
            .copied()
            .ok_or_else(|| VqaError::MissingProfileEntry {
                profile: self.name.clone(),
                task: task.to_string(),
                style,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reply {
    Yes,
    No,
}

impl Reply {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Reply::Yes
        } else {
            Reply::No
        }
    }

    pub fn is_yes(self) -> bool {
        self == Reply::Yes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Answer {
    pub reply: Reply,
    /// Whether the reply matches the truth. Known only for the simulated
    /// oracle; diagnostic, never used for control.
    pub truthful: Option<bool>,
    /// A remote error was turned into a default reply.
    pub abstained: bool,
}

/// The truth a question refers to.
pub fn ground_truth(question: &Question, observation: &Observation) -> bool {
    let snapshot = observation.snapshot(&KEY);
    match (&question.target, question.style) {
        (Target::Action(a), QueryStyle::NameAffordance) => a.pre.is_subset(snapshot),
        (Target::Action(_), _) => observation.last_succeeded(&KEY) == Some(true),
        (Target::Atom(atom), _) => snapshot.contains(atom),
    }
}

/// Truthful with probability `accuracy`, otherwise the opposite.
pub fn oracle_answer(
    question: &Question,
    observation: &Observation,
    profile: &OracleProfile,
    task: &str,
    rng: &mut Rng,
) -> Result<Answer, VqaError> {
    let p = profile.accuracy(task, question.style)?;
    let truth = ground_truth(question, observation);
    let truthful = rng.gen::<f64>() < p;
    Ok(Answer {
        reply: Reply::from_bool(truth == truthful),
        truthful: Some(truthful),
        abstained: false,
    })
}

/// Anything that can answer rendered questions about an observation.
pub trait Oracle {
    fn answer(&mut self, question: &Question, observation: &Observation) -> Result<Answer, VqaError>;
}

pub struct SimulatedOracle {
    pub profile: OracleProfile,
    pub task: String,
    rng: Rng,
}

impl SimulatedOracle {
    pub fn new(profile: OracleProfile, task: &str, seed: u64) -> Self {
        SimulatedOracle {
            profile,
            task: task.to_string(),
            rng: crate::rng::stream(seed),
        }
    }
}

impl Oracle for SimulatedOracle {
    fn answer(&mut self, question: &Question, observation: &Observation) -> Result<Answer, VqaError> {
        oracle_answer(question, observation, &self.profile, &self.task, &mut self.rng)
    }
}
