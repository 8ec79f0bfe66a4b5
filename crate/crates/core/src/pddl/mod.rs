//! STRIPS subset of PDDL: syntax tree, parser, printer, grounding and the
//! set-based state semantics shared by the planner and the simulator.

mod ground;
mod parse;
mod print;
pub mod sexpr;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ground::{ground, ground_with, GroundOptions};
pub use parse::{parse_domain, parse_problem};
pub use print::{print_domain, print_problem};

/// Type every object belongs to when no type is given.
pub const UNIVERSAL_TYPE: &str = "object";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(pos: sexpr::Pos, message: impl Into<String>) -> Self {
        ParseError {
            line: pos.line,
            column: pos.column,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("problem targets domain `{problem}` but domain is `{domain}`")]
    DomainMismatch { domain: String, problem: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action {action} is not applicable: missing {missing}")]
pub struct InapplicableError {
    pub action: String,
    pub missing: GroundAtom,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypedName {
    pub name: String,
    pub ty: String,
}

impl TypedName {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        TypedName {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedName>,
}

impl PredicateDecl {
    pub fn arity(&self) -> usize {
        self.params.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Schema parameter, stored without the leading `?`.
    Var(String),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub predicate: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub parameters: Vec<TypedName>,
    pub preconditions: Vec<Literal>,
    pub add_effects: Vec<Literal>,
    pub delete_effects: Vec<Literal>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub requirements: Vec<String>,
    pub types: Vec<String>,
    pub constants: Vec<TypedName>,
    pub predicates: Vec<PredicateDecl>,
    pub schemas: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    pub fn has_type(&self, ty: &str) -> bool {
        ty == UNIVERSAL_TYPE || self.types.iter().any(|t| t == ty)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<TypedName>,
    pub init: State,
    pub goal: State,
}

/// A predicate applied to object constants. Ordering is lexicographic on
/// predicate then arguments, which makes [`State`] a canonical set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundAtom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl GroundAtom {
    pub fn new<S: Into<String>>(predicate: impl Into<String>, args: impl IntoIterator<Item = S>) -> Self {
        GroundAtom {
            predicate: predicate.into(),
            args: args.into_iter().map(Into::into).collect(),
        }
    }

    /// Parses `pred(a, b)` or `(pred a b)`.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let (predicate, args) = sexpr::read_call_syntax(text)?;
        Ok(GroundAtom { predicate, args })
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.predicate, self.args.join(", "))
    }
}

pub type State = BTreeSet<GroundAtom>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundAction {
    pub schema: String,
    pub binding: Vec<String>,
    pub pre: State,
    pub add: State,
    pub del: State,
}

impl GroundAction {
    /// Identifier in plan-file syntax, e.g. `place_on(bread, plate)`.
    pub fn name(&self) -> String {
        format!("{}({})", self.schema, self.binding.join(", "))
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.schema, self.binding.join(", "))
    }
}

/// A grounded planning task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTask {
    pub name: String,
    pub objects: Vec<TypedName>,
    pub atoms: Vec<GroundAtom>,
    pub init: State,
    pub goal: State,
    /// Canonical order: schema declaration order, then bindings in
    /// lexicographic object order.
    pub actions: Vec<GroundAction>,
}

impl GroundTask {
    pub fn find_action(&self, schema: &str, binding: &[String]) -> Option<&GroundAction> {
        self.actions
            .iter()
            .find(|a| a.schema == schema && a.binding == binding)
    }

    /// Looks up an action by its plan-file identifier.
    pub fn action_by_name(&self, text: &str) -> Option<&GroundAction> {
        let (schema, binding) = sexpr::read_call_syntax(text).ok()?;
        self.find_action(&schema, &binding)
    }

    pub fn contains_atom(&self, atom: &GroundAtom) -> bool {
        self.atoms.binary_search(atom).is_ok()
    }

    /// Initial atoms that no action adds or deletes. They hold in every
    /// reachable state.
    pub fn rigid_atoms(&self) -> State {
        rigid_atoms(&self.init, &self.actions)
    }

    pub fn with_init(&self, init: State) -> GroundTask {
        GroundTask {
            init,
            ..self.clone()
        }
    }
}

pub(crate) fn rigid_atoms(init: &State, actions: &[GroundAction]) -> State {
    let touched: std::collections::BTreeSet<&GroundAtom> =
        actions.iter().flat_map(|a| a.add.iter().chain(&a.del)).collect();
    init.iter().filter(|a| !touched.contains(a)).cloned().collect()
}

pub fn applicable(state: &State, action: &GroundAction) -> bool {
    action.pre.is_subset(state)
}

/// `(state \ del) ∪ add`, returned as a new value.
pub fn apply(state: &State, action: &GroundAction) -> State {
    let mut next: State = state.difference(&action.del).cloned().collect();
    next.extend(action.add.iter().cloned());
    next
}

/// Like [`apply`] but refuses actions whose preconditions do not hold.
pub fn apply_strict(state: &State, action: &GroundAction) -> Result<State, InapplicableError> {
    if let Some(missing) = action.pre.iter().find(|a| !state.contains(*a)) {
        return Err(InapplicableError {
            action: action.name(),
            missing: missing.clone(),
        });
    }
    Ok(apply(state, action))
}
