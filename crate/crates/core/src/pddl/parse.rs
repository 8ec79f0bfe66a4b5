use std::collections::{BTreeSet, HashSet};

use super::sexpr::{read_one, Pos, SExpr};
use super::{
    ActionSchema, Domain, GroundAtom, Literal, ParseError, PredicateDecl, Problem, State, Term,
    TypedName, UNIVERSAL_TYPE,
};

const SUPPORTED_REQUIREMENTS: [&str; 2] = [":strips", ":typing"];

type Result<T> = std::result::Result<T, ParseError>;

fn err<T>(pos: Pos, message: impl Into<String>) -> Result<T> {
    Err(ParseError::new(pos, message))
}

fn expect_list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr]> {
    e.as_list()
        .ok_or_else(|| ParseError::new(e.pos(), format!("expected {what}")))
}

fn expect_symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str> {
    e.as_symbol()
        .ok_or_else(|| ParseError::new(e.pos(), format!("expected {what}")))
}

fn identifier(e: &SExpr, what: &str) -> Result<String> {
    let s = expect_symbol(e, what)?;
    if s.starts_with('?') || s.starts_with(':') || s == "-" {
        return err(e.pos(), format!("expected {what}, found `{s}`"));
    }
    Ok(s.to_string())
}

/// Splits the `(define (<kind> NAME) sections...)` wrapper.
fn header<'a>(expr: &'a SExpr, kind: &str) -> Result<(String, &'a [SExpr])> {
    let items = expect_list(expr, "(define ...)")?;
    match items.first().and_then(SExpr::as_symbol) {
        Some("define") => {}
        _ => return err(expr.pos(), "expected `define`"),
    }
    let Some(head) = items.get(1) else {
        return err(expr.pos(), format!("expected ({kind} <name>)"));
    };
    let head_items = expect_list(head, &format!("({kind} <name>)"))?;
    match (head_items.first().and_then(SExpr::as_symbol), head_items.get(1)) {
        (Some(k), Some(name)) if k == kind && head_items.len() == 2 => {
            Ok((identifier(name, &format!("{kind} name"))?, &items[2..]))
        }
        _ => err(head.pos(), format!("expected ({kind} <name>)")),
    }
}

fn section(e: &SExpr) -> Result<(&str, &[SExpr], Pos)> {
    let items = expect_list(e, "a section")?;
    let Some(first) = items.first() else {
        return err(e.pos(), "empty section");
    };
    let key = expect_symbol(first, "a section keyword")?;
    if !key.starts_with(':') {
        return err(first.pos(), format!("expected a section keyword, found `{key}`"));
    }
    Ok((key, &items[1..], e.pos()))
}

/// `a b - t c` → [(a,t), (b,t), (c,object)]. Returns positions alongside.
fn typed_list(items: &[SExpr], variables: bool) -> Result<Vec<(TypedName, Pos)>> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, Pos)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let item = &items[i];
        let sym = expect_symbol(item, "a name")?;
        if sym == "-" {
            let Some(ty) = items.get(i + 1) else {
                return err(item.pos(), "expected a type after `-`");
            };
            let ty = identifier(ty, "a type name")?;
            if pending.is_empty() {
                return err(item.pos(), "type annotation without names");
            }
            for (name, pos) in pending.drain(..) {
                out.push((TypedName::new(name, ty.clone()), pos));
            }
            i += 2;
            continue;
        }
        let name = if variables {
            match sym.strip_prefix('?') {
                Some(v) if !v.is_empty() => v.to_string(),
                _ => return err(item.pos(), format!("expected a variable, found `{sym}`")),
            }
        } else {
            identifier(item, "a name")?
        };
        pending.push((name, item.pos()));
        i += 1;
    }
    for (name, pos) in pending {
        out.push((TypedName::new(name, UNIVERSAL_TYPE), pos));
    }
    Ok(out)
}

fn literal(e: &SExpr) -> Result<(Literal, Pos)> {
    let items = expect_list(e, "an atom")?;
    let Some(first) = items.first() else {
        return err(e.pos(), "empty atom");
    };
    let predicate = identifier(first, "a predicate name")?;
    if predicate == "and" || predicate == "not" {
        return err(e.pos(), format!("unexpected `{predicate}`"));
    }
    let mut args = Vec::new();
    for a in &items[1..] {
        let s = expect_symbol(a, "a term")?;
        match s.strip_prefix('?') {
            Some(v) if !v.is_empty() => args.push(Term::Var(v.to_string())),
            Some(_) => return err(a.pos(), "empty variable name"),
            None => args.push(Term::Const(identifier(a, "a term")?)),
        }
    }
    Ok((Literal { predicate, args }, e.pos()))
}

fn conjunction_items(e: &SExpr) -> Result<Vec<&SExpr>> {
    let items = expect_list(e, "a condition")?;
    match items.first().and_then(SExpr::as_symbol) {
        None if items.is_empty() => Ok(Vec::new()),
        Some("and") => Ok(items[1..].iter().collect()),
        _ => Ok(vec![e]),
    }
}

fn precondition(e: &SExpr) -> Result<Vec<(Literal, Pos)>> {
    let mut out = Vec::new();
    for item in conjunction_items(e)? {
        if let Some(head) = item.as_list().and_then(|l| l.first()).and_then(SExpr::as_symbol) {
            if head == "not" {
                return err(item.pos(), "negative preconditions are not supported");
            }
            if head == "and" {
                out.extend(precondition(item)?);
                continue;
            }
            if head == "or" || head == "imply" || head == "forall" || head == "exists" {
                return err(item.pos(), format!("`{head}` is outside the STRIPS subset"));
            }
        }
        out.push(literal(item)?);
    }
    Ok(out)
}

#[derive(Default)]
struct Effects {
    add: Vec<(Literal, Pos)>,
    del: Vec<(Literal, Pos)>,
}

fn effect(e: &SExpr, into: &mut Effects) -> Result<()> {
    for item in conjunction_items(e)? {
        let list = expect_list(item, "an effect")?;
        match list.first().and_then(SExpr::as_symbol) {
            Some("and") => effect(item, into)?,
            Some("not") => {
                if list.len() != 2 {
                    return err(item.pos(), "`not` takes exactly one atom");
                }
                into.del.push(literal(&list[1])?);
            }
            Some(head @ ("when" | "forall" | "increase" | "decrease")) => {
                return err(item.pos(), format!("`{head}` is outside the STRIPS subset"));
            }
            _ => into.add.push(literal(item)?),
        }
    }
    Ok(())
}

struct RawAction<'a> {
    name: String,
    pos: Pos,
    body: &'a [SExpr],
}

pub fn parse_domain(text: &str) -> Result<Domain> {
    let expr = read_one(text)?;
    let (name, sections) = header(&expr, "domain")?;

    let mut domain = Domain {
        name,
        requirements: Vec::new(),
        types: Vec::new(),
        constants: Vec::new(),
        predicates: Vec::new(),
        schemas: Vec::new(),
    };
    let mut raw_actions = Vec::new();
    let mut constant_pos = Vec::new();
    let mut predicate_pos = Vec::new();

    for s in sections {
        let (key, body, pos) = section(s)?;
        match key {
            ":requirements" => {
                for r in body {
                    let flag = expect_symbol(r, "a requirement flag")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&flag) {
                        return err(r.pos(), format!("unknown requirement flag `{flag}`"));
                    }
                    domain.requirements.push(flag.to_string());
                }
            }
            ":types" => {
                for (t, tpos) in typed_list(body, false)? {
                    if t.ty != UNIVERSAL_TYPE {
                        return err(tpos, "type hierarchies are not supported");
                    }
                    if t.name == UNIVERSAL_TYPE || domain.types.contains(&t.name) {
                        return err(tpos, format!("duplicate type `{}`", t.name));
                    }
                    domain.types.push(t.name);
                }
            }
            ":constants" => {
                for (c, cpos) in typed_list(body, false)? {
                    constant_pos.push(cpos);
                    domain.constants.push(c);
                }
            }
            ":predicates" => {
                for p in body {
                    let items = expect_list(p, "a predicate declaration")?;
                    let Some(first) = items.first() else {
                        return err(p.pos(), "empty predicate declaration");
                    };
                    let name = identifier(first, "a predicate name")?;
                    let params = typed_list(&items[1..], true)?
                        .into_iter()
                        .map(|(t, _)| t)
                        .collect();
                    predicate_pos.push(p.pos());
                    domain.predicates.push(PredicateDecl { name, params });
                }
            }
            ":action" => {
                let Some(first) = body.first() else {
                    return err(pos, "expected an action name");
                };
                raw_actions.push(RawAction {
                    name: identifier(first, "an action name")?,
                    pos,
                    body: &body[1..],
                });
            }
            other => return err(pos, format!("unknown domain section `{other}`")),
        }
    }

    let mut seen = HashSet::new();
    for (p, pos) in domain.predicates.iter().zip(&predicate_pos) {
        if !seen.insert(p.name.clone()) {
            return err(*pos, format!("duplicate predicate `{}`", p.name));
        }
        for param in &p.params {
            if !domain.has_type(&param.ty) {
                return err(*pos, format!("undeclared type `{}` in predicate `{}`", param.ty, p.name));
            }
        }
    }
    let mut seen = HashSet::new();
    for (c, pos) in domain.constants.iter().zip(&constant_pos) {
        if !domain.has_type(&c.ty) {
            return err(*pos, format!("undeclared type `{}` for constant `{}`", c.ty, c.name));
        }
        if !seen.insert(c.name.clone()) {
            return err(*pos, format!("duplicate constant `{}`", c.name));
        }
    }

    for raw in raw_actions {
        if domain.schemas.iter().any(|s| s.name == raw.name) {
            return err(raw.pos, format!("duplicate action `{}`", raw.name));
        }
        let schema = action(&domain, raw)?;
        domain.schemas.push(schema);
    }
    Ok(domain)
}

fn action(domain: &Domain, raw: RawAction<'_>) -> Result<ActionSchema> {
    let mut parameters = Vec::new();
    let mut pre = Vec::new();
    let mut effects = Effects::default();
    let mut i = 0;
    while i < raw.body.len() {
        let key_expr = &raw.body[i];
        let key = expect_symbol(key_expr, "an action keyword")?;
        let Some(value) = raw.body.get(i + 1) else {
            return err(key_expr.pos(), format!("missing value for `{key}`"));
        };
        match key {
            ":parameters" => {
                for (p, ppos) in typed_list(expect_list(value, "a parameter list")?, true)? {
                    if !domain.has_type(&p.ty) {
                        return err(ppos, format!("undeclared type `{}`", p.ty));
                    }
                    if parameters.iter().any(|q: &TypedName| q.name == p.name) {
                        return err(ppos, format!("duplicate parameter `?{}`", p.name));
                    }
                    parameters.push(p);
                }
            }
            ":precondition" => pre = precondition(value)?,
            ":effect" => effect(value, &mut effects)?,
            other => return err(key_expr.pos(), format!("unknown action keyword `{other}`")),
        }
        i += 2;
    }

    let check = |(lit, pos): &(Literal, Pos)| -> Result<()> {
        let Some(decl) = domain.predicate(&lit.predicate) else {
            return err(*pos, format!("undeclared predicate `{}`", lit.predicate));
        };
        if decl.arity() != lit.args.len() {
            return err(
                *pos,
                format!(
                    "predicate `{}` expects {} arguments, found {}",
                    lit.predicate,
                    decl.arity(),
                    lit.args.len()
                ),
            );
        }
        for t in &lit.args {
            match t {
                Term::Var(v) if !parameters.iter().any(|p| &p.name == v) => {
                    return err(*pos, format!("variable `?{v}` is not a parameter of `{}`", raw.name));
                }
                Term::Const(c) if !domain.constants.iter().any(|k| &k.name == c) => {
                    return err(*pos, format!("undeclared constant `{c}`"));
                }
                _ => {}
            }
        }
        Ok(())
    };
    pre.iter().try_for_each(check)?;
    effects.add.iter().try_for_each(check)?;
    effects.del.iter().try_for_each(check)?;

    let add: BTreeSet<Literal> = effects.add.iter().map(|(l, _)| l.clone()).collect();
    if let Some((l, pos)) = effects.del.iter().find(|(l, _)| add.contains(l)) {
        return err(*pos, format!("`{}` is both added and deleted", l.predicate));
    }

    Ok(ActionSchema {
        name: raw.name,
        parameters,
        preconditions: dedup(pre),
        add_effects: dedup(effects.add),
        delete_effects: dedup(effects.del),
    })
}

fn dedup(lits: Vec<(Literal, Pos)>) -> Vec<Literal> {
    let mut out: Vec<Literal> = Vec::with_capacity(lits.len());
    for (l, _) in lits {
        if !out.contains(&l) {
            out.push(l);
        }
    }
    out
}

/// Parses a problem and checks it against `domain` (predicates, arities,
/// object declarations). A mismatching `:domain` name is reported by
/// grounding, not here.
pub fn parse_problem(text: &str, domain: &Domain) -> Result<Problem> {
    let expr = read_one(text)?;
    let (name, sections) = header(&expr, "problem")?;
    let mut domain_name = None;
    let mut objects: Vec<TypedName> = Vec::new();
    let mut init_raw = Vec::new();
    let mut goal_raw = Vec::new();

    for s in sections {
        let (key, body, pos) = section(s)?;
        match key {
            ":domain" => match body {
                [d] => domain_name = Some(identifier(d, "a domain name")?),
                _ => return err(pos, "expected (:domain <name>)"),
            },
            ":requirements" => {
                for r in body {
                    let flag = expect_symbol(r, "a requirement flag")?;
                    if !SUPPORTED_REQUIREMENTS.contains(&flag) {
                        return err(r.pos(), format!("unknown requirement flag `{flag}`"));
                    }
                }
            }
            ":objects" => {
                for (o, opos) in typed_list(body, false)? {
                    if !domain.has_type(&o.ty) {
                        return err(opos, format!("undeclared type `{}` for object `{}`", o.ty, o.name));
                    }
                    if objects.iter().chain(&domain.constants).any(|k| k.name == o.name) {
                        return err(opos, format!("duplicate object `{}`", o.name));
                    }
                    objects.push(o);
                }
            }
            ":init" => {
                for a in body {
                    init_raw.push(literal(a)?);
                }
            }
            ":goal" => match body {
                [g] => goal_raw = precondition(g)?,
                _ => return err(pos, "expected (:goal <condition>)"),
            },
            other => return err(pos, format!("unknown problem section `{other}`")),
        }
    }
    let Some(domain_name) = domain_name else {
        return err(expr.pos(), "missing (:domain <name>)");
    };

    let ground_atom = |(lit, pos): (Literal, Pos)| -> Result<GroundAtom> {
        let Some(decl) = domain.predicate(&lit.predicate) else {
            return err(pos, format!("undeclared predicate `{}`", lit.predicate));
        };
        if decl.arity() != lit.args.len() {
            return err(
                pos,
                format!(
                    "predicate `{}` expects {} arguments, found {}",
                    lit.predicate,
                    decl.arity(),
                    lit.args.len()
                ),
            );
        }
        let mut args = Vec::with_capacity(lit.args.len());
        for t in lit.args {
            match t {
                Term::Var(v) => return err(pos, format!("variable `?{v}` in a ground atom")),
                Term::Const(c) => {
                    if !objects.iter().chain(&domain.constants).any(|o| o.name == c) {
                        return err(pos, format!("undeclared object `{c}` in `{}`", lit.predicate));
                    }
                    args.push(c);
                }
            }
        }
        Ok(GroundAtom {
            predicate: lit.predicate,
            args,
        })
    };
    let init: State = init_raw.into_iter().map(ground_atom).collect::<Result<_>>()?;
    let goal: State = goal_raw.into_iter().map(ground_atom).collect::<Result<_>>()?;

    Ok(Problem {
        name,
        domain_name,
        objects,
        init,
        goal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "(define (domain d)
      (:requirements :strips :typing)
      (:types item)
      (:predicates (near ?x) (held ?o - item))
      (:action grab :parameters (?o - item)
        :precondition (near ?o)
        :effect (and (held ?o) (not (near ?o)))))";

    #[test]
    fn empty_domain() {
        let d = parse_domain("(define (domain d) (:predicates) )").unwrap();
        assert_eq!(d.name, "d");
        assert!(d.predicates.is_empty());
        assert!(d.schemas.is_empty());
    }

    #[test]
    fn truncated_domain_is_unbalanced() {
        let e = parse_domain("(define (domain").unwrap_err();
        assert!(e.message.contains("unbalanced"));
        assert!(e.message.contains("end of input"));
    }

    #[test]
    fn tiny_domain_parses() {
        let d = parse_domain(TINY).unwrap();
        let grab = d.schema("grab").unwrap();
        assert_eq!(grab.preconditions.len(), 1);
        assert_eq!(grab.add_effects[0].predicate, "held");
        assert_eq!(grab.delete_effects[0].predicate, "near");
    }

    #[test]
    fn rejects_unknown_requirement() {
        let e = parse_domain("(define (domain d) (:requirements :adl))").unwrap_err();
        assert!(e.message.contains("unknown requirement flag `:adl`"), "{e}");
        assert_eq!((e.line, e.column), (1, 35));
    }

    #[test]
    fn rejects_undeclared_predicate_and_type() {
        let e = parse_domain(
            "(define (domain d) (:predicates (p)) (:action a :parameters () :effect (q)))",
        )
        .unwrap_err();
        assert!(e.message.contains("undeclared predicate `q`"), "{e}");
        let e = parse_domain("(define (domain d) (:predicates (p ?x - thing)))").unwrap_err();
        assert!(e.message.contains("undeclared type `thing`"), "{e}");
    }

    #[test]
    fn rejects_negative_preconditions_and_free_variables() {
        let e = parse_domain(
            "(define (domain d) (:predicates (p ?x)) (:action a :parameters (?x) :precondition (not (p ?x))))",
        )
        .unwrap_err();
        assert!(e.message.contains("negative"), "{e}");
        let e = parse_domain(
            "(define (domain d) (:predicates (p ?x)) (:action a :parameters () :effect (p ?y)))",
        )
        .unwrap_err();
        assert!(e.message.contains("`?y`"), "{e}");
    }

    #[test]
    fn rejects_overlapping_add_and_delete() {
        let e = parse_domain(
            "(define (domain d) (:predicates (p)) (:action a :parameters () :effect (and (p) (not (p)))))",
        )
        .unwrap_err();
        assert!(e.message.contains("both added and deleted"), "{e}");
    }

    #[test]
    fn problem_checks() {
        let d = parse_domain(TINY).unwrap();
        let p = parse_problem(
            "(define (problem p) (:domain d) (:objects cup - item) (:init (near cup)) (:goal (and)))",
            &d,
        )
        .unwrap();
        assert!(p.goal.is_empty());
        assert!(p.init.contains(&GroundAtom::new("near", ["cup"])));

        let e = parse_problem(
            "(define (problem p) (:domain d) (:objects cup - item) (:init) (:goal (held cup cup)))",
            &d,
        )
        .unwrap_err();
        assert!(e.message.contains("`held`"), "{e}");

        let e = parse_problem(
            "(define (problem p) (:domain d) (:objects cup - item) (:init (near mug)) (:goal (held cup)))",
            &d,
        )
        .unwrap_err();
        assert!(e.message.contains("undeclared object `mug`"), "{e}");
    }
}
