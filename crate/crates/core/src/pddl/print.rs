use std::fmt::Write;

use super::{Domain, GroundAtom, Literal, Problem, Term, TypedName};

fn typed(names: &[TypedName], variables: bool) -> String {
    names
        .iter()
        .map(|t| {
            let q = if variables { "?" } else { "" };
            format!("{q}{} - {}", t.name, t.ty)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn literal(l: &Literal) -> String {
    let mut s = format!("({}", l.predicate);
    for t in &l.args {
        match t {
            Term::Var(v) => write!(s, " ?{v}").unwrap(),
            Term::Const(c) => write!(s, " {c}").unwrap(),
        }
    }
    s.push(')');
    s
}

fn atom(a: &GroundAtom) -> String {
    let mut s = format!("({}", a.predicate);
    for arg in &a.args {
        write!(s, " {arg}").unwrap();
    }
    s.push(')');
    s
}

/// Normalized PDDL text: lowercase, two-space indentation, one section per line.
pub fn print_domain(d: &Domain) -> String {
    let mut out = format!("(define (domain {})\n", d.name);
    if !d.requirements.is_empty() {
        writeln!(out, "  (:requirements {})", d.requirements.join(" ")).unwrap();
    }
    if !d.types.is_empty() {
        writeln!(out, "  (:types {})", d.types.join(" ")).unwrap();
    }
    if !d.constants.is_empty() {
        writeln!(out, "  (:constants {})", typed(&d.constants, false)).unwrap();
    }
    out.push_str("  (:predicates");
    for p in &d.predicates {
        if p.params.is_empty() {
            write!(out, "\n    ({})", p.name).unwrap();
        } else {
            write!(out, "\n    ({} {})", p.name, typed(&p.params, true)).unwrap();
        }
    }
    out.push_str(")\n");
    for s in &d.schemas {
        writeln!(out, "  (:action {}", s.name).unwrap();
        writeln!(out, "    :parameters ({})", typed(&s.parameters, true)).unwrap();
        let pre: Vec<String> = s.preconditions.iter().map(literal).collect();
        writeln!(out, "    :precondition (and {})", pre.join(" ")).unwrap();
        let mut eff: Vec<String> = s.add_effects.iter().map(literal).collect();
        eff.extend(s.delete_effects.iter().map(|l| format!("(not {})", literal(l))));
        writeln!(out, "    :effect (and {}))", eff.join(" ")).unwrap();
    }
    out.push_str(")\n");
    out
}

pub fn print_problem(p: &Problem) -> String {
    let mut out = format!("(define (problem {})\n", p.name);
    writeln!(out, "  (:domain {})", p.domain_name).unwrap();
    writeln!(out, "  (:objects {})", typed(&p.objects, false)).unwrap();
    out.push_str("  (:init");
    for a in &p.init {
        write!(out, "\n    {}", atom(a)).unwrap();
    }
    out.push_str(")\n");
    let goal: Vec<String> = p.goal.iter().map(atom).collect();
    writeln!(out, "  (:goal (and {})))", goal.join(" ")).unwrap();
    out
}
