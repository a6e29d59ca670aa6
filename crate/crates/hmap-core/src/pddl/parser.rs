//! Hand-rolled s-expression reader and PDDL interpretation.
//!
//! Symbols are lower-cased; `;` starts a line comment. Errors carry the
//! line/column of the offending token.

use super::{
    ActionSchema, Domain, GroundAtom, Literal, ParamAtom, PddlError, PredicateDecl, Problem, Term,
    TypeHierarchy, TypedParam, ROOT_TYPE,
};
use std::collections::BTreeSet;

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: usize,
    col: usize,
}

#[derive(Debug)]
enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }
}

fn err(pos: Pos, msg: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
    col: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Reader {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(&c) = self.chars.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(&c) = self.chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            col: self.col,
        }
    }

    fn read(&mut self) -> Result<Sexp, PddlError> {
        self.skip_trivia();
        let pos = self.pos();
        match self.chars.peek() {
            None => Err(err(pos, "unexpected end of input")),
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.chars.peek() {
                        None => return Err(err(pos, "unclosed parenthesis")),
                        Some(')') => {
                            self.bump();
                            return Ok(Sexp::List(items, pos));
                        }
                        Some(_) => items.push(self.read()?),
                    }
                }
            }
            Some(')') => Err(err(pos, "unexpected `)`")),
            Some(_) => {
                let mut s = String::new();
                while let Some(&c) = self.chars.peek() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == ';' {
                        break;
                    }
                    s.push(c.to_ascii_lowercase());
                    self.bump();
                }
                Ok(Sexp::Sym(s, pos))
            }
        }
    }

    fn read_all(&mut self) -> Result<Sexp, PddlError> {
        let top = self.read()?;
        self.skip_trivia();
        if self.chars.peek().is_some() {
            return Err(err(self.pos(), "trailing input after top-level form"));
        }
        Ok(top)
    }
}

fn as_sym<'s>(s: &'s Sexp) -> Result<&'s str, PddlError> {
    match s {
        Sexp::Sym(x, _) => Ok(x),
        Sexp::List(_, p) => Err(err(*p, "expected a symbol")),
    }
}

fn as_list<'s>(s: &'s Sexp) -> Result<&'s [Sexp], PddlError> {
    match s {
        Sexp::List(items, _) => Ok(items),
        Sexp::Sym(x, p) => Err(err(*p, format!("expected a list, found `{x}`"))),
    }
}

/// Parse `name name - type name ...` lists as used for parameters, objects,
/// and type declarations. Names without an explicit type get `default_ty`.
fn parse_typed_list(items: &[Sexp], default_ty: &str) -> Result<Vec<(String, String)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let sym = as_sym(&items[i])?;
        if sym == "-" {
            i += 1;
            let ty = as_sym(items.get(i).ok_or_else(|| {
                err(items[i - 1].pos(), "expected a type after `-`")
            })?)?;
            for name in pending.drain(..) {
                out.push((name, ty.to_string()));
            }
        } else {
            pending.push(sym.to_string());
        }
        i += 1;
    }
    for name in pending {
        out.push((name, default_ty.to_string()));
    }
    Ok(out)
}

fn parse_atom(items: &[Sexp], pos: Pos) -> Result<ParamAtom, PddlError> {
    if items.is_empty() {
        return Err(err(pos, "empty atom"));
    }
    let pred = as_sym(&items[0])?.to_string();
    let args = items[1..]
        .iter()
        .map(|s| {
            let sym = as_sym(s)?;
            Ok(if let Some(v) = sym.strip_prefix('?') {
                Term::Var(v.to_string())
            } else {
                Term::Const(sym.to_string())
            })
        })
        .collect::<Result<Vec<_>, PddlError>>()?;
    Ok(ParamAtom { pred, args })
}

/// A formula is a single literal, `(not <atom>)`, or `(and <lit>*)`.
fn parse_formula(s: &Sexp) -> Result<Vec<Literal>, PddlError> {
    let items = as_list(s)?;
    if items.is_empty() {
        return Ok(Vec::new()); // `()` — empty conjunction
    }
    let head = as_sym(&items[0])?;
    match head {
        "and" => {
            let mut lits = Vec::new();
            for part in &items[1..] {
                lits.extend(parse_formula(part)?);
            }
            Ok(lits)
        }
        "not" => {
            if items.len() != 2 {
                return Err(err(s.pos(), "`not` takes exactly one atom"));
            }
            let atom = parse_atom(as_list(&items[1])?, items[1].pos())?;
            Ok(vec![Literal {
                positive: false,
                atom,
            }])
        }
        _ => Ok(vec![Literal {
            positive: true,
            atom: parse_atom(items, s.pos())?,
        }]),
    }
}

const SUPPORTED_REQUIREMENTS: &[&str] = &[":strips", ":typing", ":negative-preconditions"];

pub fn parse_domain(text: &str) -> Result<Domain, PddlError> {
    let top = Reader::new(text).read_all()?;
    let items = as_list(&top)?;
    if items.is_empty() || as_sym(&items[0])? != "define" {
        return Err(err(top.pos(), "expected `(define (domain ...) ...)`"));
    }
    let head = as_list(&items[1])?;
    if head.len() != 2 || as_sym(&head[0])? != "domain" {
        return Err(err(items[1].pos(), "expected `(domain <name>)`"));
    }
    let mut domain = Domain {
        name: as_sym(&head[1])?.to_string(),
        requirements: BTreeSet::new(),
        types: TypeHierarchy::new(),
        predicates: Vec::new(),
        actions: Vec::new(),
    };

    for section in &items[2..] {
        let parts = as_list(section)?;
        if parts.is_empty() {
            return Err(err(section.pos(), "empty section"));
        }
        match as_sym(&parts[0])? {
            ":requirements" => {
                for r in &parts[1..] {
                    let name = as_sym(r)?;
                    if !SUPPORTED_REQUIREMENTS.contains(&name) {
                        return Err(PddlError::UnsupportedRequirement(name.to_string()));
                    }
                    domain.requirements.insert(name.to_string());
                }
            }
            ":types" => {
                for (ty, parent) in parse_typed_list(&parts[1..], ROOT_TYPE)? {
                    domain.types.insert(&ty, &parent);
                }
            }
            ":predicates" => {
                for p in &parts[1..] {
                    let decl = as_list(p)?;
                    if decl.is_empty() {
                        return Err(err(p.pos(), "empty predicate declaration"));
                    }
                    let name = as_sym(&decl[0])?.to_string();
                    let params = parse_typed_list(&decl[1..], ROOT_TYPE)?
                        .into_iter()
                        .map(|(n, ty)| {
                            let n = n.strip_prefix('?').unwrap_or(&n).to_string();
                            TypedParam { name: n, ty }
                        })
                        .collect();
                    domain.predicates.push(PredicateDecl { name, params });
                }
            }
            ":action" => {
                let mut name = None;
                let mut params = Vec::new();
                let mut pre = Vec::new();
                let mut eff = Vec::new();
                let mut i = 1;
                name.replace(as_sym(&parts[1])?.to_string());
                i += 1;
                while i < parts.len() {
                    let key = as_sym(&parts[i])?;
                    let value = parts.get(i + 1).ok_or_else(|| {
                        err(parts[i].pos(), format!("missing value for `{key}`"))
                    })?;
                    match key {
                        ":parameters" => {
                            params = parse_typed_list(as_list(value)?, ROOT_TYPE)?
                                .into_iter()
                                .map(|(n, ty)| {
                                    let n = n.strip_prefix('?').unwrap_or(&n).to_string();
                                    TypedParam { name: n, ty }
                                })
                                .collect();
                        }
                        ":precondition" => pre = parse_formula(value)?,
                        ":effect" => eff = parse_formula(value)?,
                        other => {
                            return Err(err(
                                parts[i].pos(),
                                format!("unsupported action section `{other}`"),
                            ))
                        }
                    }
                    i += 2;
                }
                domain.actions.push(ActionSchema {
                    name: name.unwrap(),
                    params,
                    pre,
                    eff,
                });
            }
            other => {
                return Err(err(
                    section.pos(),
                    format!("unsupported domain section `{other}`"),
                ))
            }
        }
    }

    domain.validate()?;
    Ok(domain)
}

pub fn parse_problem(text: &str) -> Result<Problem, PddlError> {
    let top = Reader::new(text).read_all()?;
    let items = as_list(&top)?;
    if items.is_empty() || as_sym(&items[0])? != "define" {
        return Err(err(top.pos(), "expected `(define (problem ...) ...)`"));
    }
    let head = as_list(&items[1])?;
    if head.len() != 2 || as_sym(&head[0])? != "problem" {
        return Err(err(items[1].pos(), "expected `(problem <name>)`"));
    }
    let mut problem = Problem {
        name: as_sym(&head[1])?.to_string(),
        domain_name: String::new(),
        objects: Vec::new(),
        init: Vec::new(),
        goal: Vec::new(),
    };

    for section in &items[2..] {
        let parts = as_list(section)?;
        if parts.is_empty() {
            return Err(err(section.pos(), "empty section"));
        }
        match as_sym(&parts[0])? {
            ":domain" => {
                problem.domain_name = as_sym(&parts[1])?.to_string();
            }
            ":objects" => {
                problem.objects = parse_typed_list(&parts[1..], ROOT_TYPE)?;
            }
            ":init" => {
                for a in &parts[1..] {
                    let atom = parse_atom(as_list(a)?, a.pos())?;
                    let args = atom
                        .args
                        .iter()
                        .map(|t| match t {
                            Term::Const(c) => Ok(c.clone()),
                            Term::Var(_) => Err(err(a.pos(), "init atoms must be ground")),
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let ground = GroundAtom {
                        pred: atom.pred,
                        args,
                    };
                    if !problem.init.contains(&ground) {
                        problem.init.push(ground);
                    }
                }
            }
            ":goal" => {
                if parts.len() != 2 {
                    return Err(err(section.pos(), "`:goal` takes one formula"));
                }
                problem.goal = parse_formula(&parts[1])?;
                for lit in &problem.goal {
                    if lit.atom.args.iter().any(|t| matches!(t, Term::Var(_))) {
                        return Err(err(parts[1].pos(), "goal atoms must be ground"));
                    }
                }
            }
            other => {
                return Err(err(
                    section.pos(),
                    format!("unsupported problem section `{other}`"),
                ))
            }
        }
    }
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    // §IV-F operator, verbatim shape.
    const PICKUP_DOMAIN: &str = r#"
(define (domain manipulation)
  (:requirements :strips :typing)
  (:types robot object location)
  (:predicates (at ?x ?l) (holding ?r ?o))
  (:action PickupObject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (at ?o ?l) (at ?r ?l))
   :effect (and (holding ?r ?o) (not (at ?o ?l)))))
"#;

    #[test]
    fn parses_pickup_domain() {
        let d = parse_domain(PICKUP_DOMAIN).unwrap();
        assert_eq!(d.name, "manipulation");
        assert_eq!(d.actions.len(), 1);
        let a = &d.actions[0];
        assert_eq!(a.name, "pickupobject");
        assert_eq!(a.params.len(), 3);
        assert_eq!(a.pre.len(), 2);
        assert!(a.pre.iter().all(|l| l.positive));
        assert_eq!(a.eff.len(), 2);
        assert_eq!(a.eff.iter().filter(|l| !l.positive).count(), 1);
    }

    #[test]
    fn empty_action_list_domain() {
        let d = parse_domain("(define (domain empty) (:requirements :strips))").unwrap();
        assert!(d.actions.is_empty());
    }

    #[test]
    fn rejects_durative_actions() {
        let e = parse_domain("(define (domain t) (:requirements :durative-actions))").unwrap_err();
        match e {
            PddlError::UnsupportedRequirement(r) => assert_eq!(r, ":durative-actions"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_position() {
        let e = parse_domain("(define (domain x)\n  (:action").unwrap_err();
        match e {
            PddlError::Syntax { line, .. } => assert_eq!(line, 2), // unclosed `(:action`
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn parses_problem_with_negated_goal() {
        let p = parse_problem(
            "(define (problem p) (:domain manipulation)
             (:objects tomato - object fridge - location)
             (:init (at tomato fridge))
             (:goal (and (at tomato fridge) (not (holding r tomato)))))",
        )
        .unwrap();
        assert_eq!(p.objects.len(), 2);
        assert_eq!(p.init.len(), 1);
        assert_eq!(p.goal.len(), 2);
        assert!(!p.goal[1].positive);
    }

    #[test]
    fn rejects_arity_mismatch() {
        let text = PICKUP_DOMAIN.replace("(at ?o ?l)", "(at ?o)");
        match parse_domain(&text).unwrap_err() {
            PddlError::Arity { name, used, declared } => {
                assert_eq!(name, "at");
                assert_eq!((used, declared), (1, 2));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_undeclared_parameter() {
        let text = PICKUP_DOMAIN.replace("(holding ?r ?o)", "(holding ?r ?x)");
        assert!(matches!(
            parse_domain(&text).unwrap_err(),
            PddlError::UnknownParameter { .. }
        ));
    }
}
