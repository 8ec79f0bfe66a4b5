use std::collections::BTreeSet;

use super::{
    ActionSchema, Domain, GroundAction, GroundAtom, GroundError, GroundTask, Literal, Problem,
    State, Term, TypedName, UNIVERSAL_TYPE,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GroundOptions {
    /// Drop precondition atoms that hold initially and that no action adds
    /// or deletes. Plans are unchanged, but the executive then never asks
    /// about them. Off by default.
    pub simplify_statics: bool,
}

pub fn ground(domain: &Domain, problem: &Problem) -> Result<GroundTask, GroundError> {
    ground_with(domain, problem, GroundOptions::default())
}

pub fn ground_with(
    domain: &Domain,
    problem: &Problem,
    options: GroundOptions,
) -> Result<GroundTask, GroundError> {
    if domain.name != problem.domain_name {
        return Err(GroundError::DomainMismatch {
            domain: domain.name.clone(),
            problem: problem.domain_name.clone(),
        });
    }
    let mut objects: Vec<TypedName> = problem
        .objects
        .iter()
        .chain(&domain.constants)
        .cloned()
        .collect();
    objects.sort_by(|a, b| a.name.cmp(&b.name));

    let mut actions = Vec::new();
    for schema in &domain.schemas {
        ground_schema(schema, &objects, &mut actions);
    }

    if options.simplify_statics {
        let statics = super::rigid_atoms(&problem.init, &actions);
        for a in &mut actions {
            a.pre.retain(|p| !statics.contains(p));
        }
    }

    let mut atoms: BTreeSet<GroundAtom> = problem.init.iter().chain(&problem.goal).cloned().collect();
    for a in &actions {
        atoms.extend(a.pre.iter().chain(&a.add).chain(&a.del).cloned());
    }

    Ok(GroundTask {
        name: problem.name.clone(),
        objects,
        atoms: atoms.into_iter().collect(),
        init: problem.init.clone(),
        goal: problem.goal.clone(),
        actions,
    })
}

fn candidates<'a>(param: &TypedName, objects: &'a [TypedName]) -> Vec<&'a str> {
    objects
        .iter()
        .filter(|o| param.ty == UNIVERSAL_TYPE || o.ty == param.ty)
        .map(|o| o.name.as_str())
        .collect()
}

/// Appends every type-consistent binding of `schema`, first parameter most
/// significant, each position in object-name order.
fn ground_schema(schema: &ActionSchema, objects: &[TypedName], out: &mut Vec<GroundAction>) {
    let domains: Vec<Vec<&str>> = schema
        .parameters
        .iter()
        .map(|p| candidates(p, objects))
        .collect();
    if domains.iter().any(Vec::is_empty) {
        return;
    }
    let mut idx = vec![0usize; domains.len()];
    loop {
        let binding: Vec<String> = idx
            .iter()
            .zip(&domains)
            .map(|(&i, d)| d[i].to_string())
            .collect();
        out.push(instantiate(schema, binding));

        let mut k = idx.len();
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn substitute(lit: &Literal, schema: &ActionSchema, binding: &[String]) -> GroundAtom {
    let args = lit
        .args
        .iter()
        .map(|t| match t {
            Term::Const(c) => c.clone(),
            Term::Var(v) => {
                let i = schema
                    .parameters
                    .iter()
                    .position(|p| &p.name == v)
                    .expect("parser checks variables against parameters");
                binding[i].clone()
            }
        })
        .collect();
    GroundAtom {
        predicate: lit.predicate.clone(),
        args,
    }
}

fn instantiate(schema: &ActionSchema, binding: Vec<String>) -> GroundAction {
    let ground = |lits: &[Literal]| -> State { lits.iter().map(|l| substitute(l, schema, &binding)).collect() };
    let pre = ground(&schema.preconditions);
    let add = ground(&schema.add_effects);
    // Distinct literals can collide under a binding; the add wins.
    let del = ground(&schema.delete_effects)
        .difference(&add)
        .cloned()
        .collect();
    GroundAction {
        schema: schema.name.clone(),
        binding,
        pre,
        add,
        del,
    }
}
