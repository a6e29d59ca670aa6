//! STRIPS-with-typing PDDL subset: parsing, printing, grounding, and
//! transition semantics.
//!
//! Supported requirements: `:strips`, `:typing`, `:negative-preconditions`.
//! Conditional effects, costs, and durative actions are out of scope.
//! Symbols are normalized to lower case on parse.

mod ground;
mod parser;
mod printer;

pub use ground::{
    apply, applicable, validate_plan, AtomId, GroundAction, GroundActionId, GroundModel, State,
    StepFailure, ValidationReport, DEFAULT_GROUNDING_CAP,
};
pub use parser::{parse_domain, parse_problem};
pub use printer::{serialize_domain, serialize_problem};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PddlError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unsupported requirement {0}")]
    UnsupportedRequirement(String),
    #[error("predicate {name} used with arity {used}, declared with {declared}")]
    Arity {
        name: String,
        used: usize,
        declared: usize,
    },
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("unknown object or constant {0}")]
    UnknownObject(String),
    #[error("unknown type {0}")]
    UnknownType(String),
    #[error("parameter {param} not declared in action {action}")]
    UnknownParameter { action: String, param: String },
    #[error("action {action} both adds and deletes {atom}")]
    ContradictoryEffect { action: String, atom: String },
    #[error("duplicate {kind} name {name}")]
    Duplicate { kind: &'static str, name: String },
    #[error("type hierarchy contains a cycle through {0}")]
    TypeCycle(String),
    #[error("grounding would exceed the cap of {cap} actions")]
    GroundingExplosion { cap: usize },
    #[error("problem references domain {found}, expected {expected}")]
    DomainMismatch { expected: String, found: String },
    #[error("action {action} is not applicable: requires {literal}")]
    Inapplicable { action: String, literal: String },
    #[error("unknown ground action ({name} {args})", args = .args.join(" "))]
    UnknownAction { name: String, args: Vec<String> },
    #[error("domains disagree on {kind} {name}")]
    MergeConflict { kind: &'static str, name: String },
}

/// A term in a parameterized atom: either an action parameter or a constant.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Var(String),
    Const(String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(v) => write!(f, "?{v}"),
            Term::Const(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamAtom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl fmt::Display for ParamAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A possibly negated parameterized atom.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Literal {
    pub positive: bool,
    pub atom: ParamAtom,
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.atom)
        } else {
            write!(f, "(not {})", self.atom)
        }
    }
}

/// A fully ground atom, e.g. `(at tomato counter)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAtom {
    pub pred: String,
    pub args: Vec<String>,
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.pred)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypedParam {
    pub name: String,
    pub ty: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredicateDecl {
    pub name: String,
    pub params: Vec<TypedParam>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<TypedParam>,
    pub pre: Vec<Literal>,
    pub eff: Vec<Literal>,
}

/// Type hierarchy with implicit root `object`. Types never listed as a key
/// default to `object` as their parent.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeHierarchy {
    parents: BTreeMap<String, String>,
}

pub const ROOT_TYPE: &str = "object";

impl TypeHierarchy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, ty: &str, parent: &str) {
        if ty != ROOT_TYPE {
            self.parents.insert(ty.to_string(), parent.to_string());
        }
    }

    pub fn declared(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parents.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// True iff `ty` equals `ancestor` or transitively derives from it.
    pub fn is_subtype(&self, ty: &str, ancestor: &str) -> bool {
        if ty == ancestor || ancestor == ROOT_TYPE {
            return true;
        }
        let mut cur = ty;
        let mut steps = 0;
        while let Some(p) = self.parents.get(cur) {
            if p == ancestor {
                return true;
            }
            cur = p;
            steps += 1;
            if steps > self.parents.len() {
                break; // cycle guard; validated separately
            }
        }
        false
    }

    pub fn check_acyclic(&self) -> Result<(), PddlError> {
        for start in self.parents.keys() {
            let mut cur = start.as_str();
            let mut steps = 0;
            while let Some(p) = self.parents.get(cur) {
                cur = p;
                steps += 1;
                if steps > self.parents.len() {
                    return Err(PddlError::TypeCycle(start.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub requirements: BTreeSet<String>,
    pub types: TypeHierarchy,
    pub predicates: Vec<PredicateDecl>,
    pub actions: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, name: &str) -> Option<&PredicateDecl> {
        self.predicates.iter().find(|p| p.name == name)
    }

    pub fn action(&self, name: &str) -> Option<&ActionSchema> {
        self.actions.iter().find(|a| a.name == name)
    }

    /// Structural checks shared by the parser and programmatic construction.
    pub fn validate(&self) -> Result<(), PddlError> {
        self.types.check_acyclic()?;
        let mut seen = BTreeSet::new();
        for p in &self.predicates {
            if !seen.insert(&p.name) {
                return Err(PddlError::Duplicate {
                    kind: "predicate",
                    name: p.name.clone(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for a in &self.actions {
            if !seen.insert(&a.name) {
                return Err(PddlError::Duplicate {
                    kind: "action",
                    name: a.name.clone(),
                });
            }
            let param_names: BTreeSet<_> = a.params.iter().map(|p| p.name.as_str()).collect();
            for lit in a.pre.iter().chain(a.eff.iter()) {
                let decl = self
                    .predicate(&lit.atom.pred)
                    .ok_or_else(|| PddlError::UnknownPredicate(lit.atom.pred.clone()))?;
                if decl.params.len() != lit.atom.args.len() {
                    return Err(PddlError::Arity {
                        name: lit.atom.pred.clone(),
                        used: lit.atom.args.len(),
                        declared: decl.params.len(),
                    });
                }
                for t in &lit.atom.args {
                    if let Term::Var(v) = t {
                        if !param_names.contains(v.as_str()) {
                            return Err(PddlError::UnknownParameter {
                                action: a.name.clone(),
                                param: v.clone(),
                            });
                        }
                    }
                }
            }
            // no atom may be both added and deleted
            let adds: BTreeSet<_> = a.eff.iter().filter(|l| l.positive).map(|l| &l.atom).collect();
            for l in a.eff.iter().filter(|l| !l.positive) {
                if adds.contains(&l.atom) {
                    return Err(PddlError::ContradictoryEffect {
                        action: a.name.clone(),
                        atom: l.atom.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Merge another domain into this one. Shared predicates and actions must
    /// be declared identically; used to build the joint multi-robot domain.
    pub fn merge(&mut self, other: &Domain) -> Result<(), PddlError> {
        for (ty, parent) in other.types.declared() {
            match self.types.parents.get(ty) {
                Some(p) if p != parent => {
                    return Err(PddlError::MergeConflict {
                        kind: "type",
                        name: ty.to_string(),
                    })
                }
                Some(_) => {}
                None => self.types.insert(ty, parent),
            }
        }
        for p in &other.predicates {
            match self.predicate(&p.name) {
                Some(mine) if mine != p => {
                    return Err(PddlError::MergeConflict {
                        kind: "predicate",
                        name: p.name.clone(),
                    })
                }
                Some(_) => {}
                None => self.predicates.push(p.clone()),
            }
        }
        for a in &other.actions {
            match self.action(&a.name) {
                Some(mine) if mine != a => {
                    return Err(PddlError::MergeConflict {
                        kind: "action",
                        name: a.name.clone(),
                    })
                }
                Some(_) => {}
                None => self.actions.push(a.clone()),
            }
        }
        self.requirements.extend(other.requirements.iter().cloned());
        self.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    pub domain_name: String,
    /// Objects with their types, in declaration order.
    pub objects: Vec<(String, String)>,
    pub init: Vec<GroundAtom>,
    /// Conjunctive goal; negated atoms allowed.
    pub goal: Vec<Literal>,
}

impl Problem {
    pub fn object_type(&self, name: &str) -> Option<&str> {
        self.objects
            .iter()
            .find(|(o, _)| o == name)
            .map(|(_, t)| t.as_str())
    }

    pub fn validate(&self, domain: &Domain) -> Result<(), PddlError> {
        if self.domain_name != domain.name {
            return Err(PddlError::DomainMismatch {
                expected: domain.name.clone(),
                found: self.domain_name.clone(),
            });
        }
        let check_atom = |pred: &str, args: &[String]| -> Result<(), PddlError> {
            let decl = domain
                .predicate(pred)
                .ok_or_else(|| PddlError::UnknownPredicate(pred.to_string()))?;
            if decl.params.len() != args.len() {
                return Err(PddlError::Arity {
                    name: pred.to_string(),
                    used: args.len(),
                    declared: decl.params.len(),
                });
            }
            for a in args {
                if self.object_type(a).is_none() {
                    return Err(PddlError::UnknownObject(a.clone()));
                }
            }
            Ok(())
        };
        for atom in &self.init {
            check_atom(&atom.pred, &atom.args)?;
        }
        for lit in &self.goal {
            let args: Vec<String> = lit
                .atom
                .args
                .iter()
                .map(|t| match t {
                    Term::Const(c) => Ok(c.clone()),
                    Term::Var(v) => Err(PddlError::UnknownObject(format!("?{v}"))),
                })
                .collect::<Result<_, _>>()?;
            check_atom(&lit.atom.pred, &args)?;
        }
        Ok(())
    }
}
