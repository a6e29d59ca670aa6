//! PDDL pretty-printing. `parse(serialize(x)) == x` for every valid input.

use super::{Domain, Literal, Problem, TypedParam};
use std::fmt::Write;

fn write_typed_params(out: &mut String, params: &[TypedParam]) {
    for (i, p) in params.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "?{} - {}", p.name, p.ty).unwrap();
    }
}

fn write_conjunction(out: &mut String, lits: &[Literal]) {
    match lits {
        [] => out.push_str("(and)"),
        [single] => write!(out, "{single}").unwrap(),
        many => {
            out.push_str("(and");
            for l in many {
                write!(out, " {l}").unwrap();
            }
            out.push(')');
        }
    }
}

pub fn serialize_domain(d: &Domain) -> String {
    let mut out = String::new();
    writeln!(out, "(define (domain {})", d.name).unwrap();
    if !d.requirements.is_empty() {
        let reqs: Vec<&str> = d.requirements.iter().map(String::as_str).collect();
        writeln!(out, "  (:requirements {})", reqs.join(" ")).unwrap();
    }
    let types: Vec<String> = d
        .types
        .declared()
        .map(|(ty, parent)| format!("{ty} - {parent}"))
        .collect();
    if !types.is_empty() {
        writeln!(out, "  (:types {})", types.join(" ")).unwrap();
    }
    if !d.predicates.is_empty() {
        out.push_str("  (:predicates");
        for p in &d.predicates {
            out.push_str(" (");
            out.push_str(&p.name);
            if !p.params.is_empty() {
                out.push(' ');
                write_typed_params(&mut out, &p.params);
            }
            out.push(')');
        }
        out.push_str(")\n");
    }
    for a in &d.actions {
        writeln!(out, "  (:action {}", a.name).unwrap();
        out.push_str("   :parameters (");
        write_typed_params(&mut out, &a.params);
        out.push_str(")\n   :precondition ");
        write_conjunction(&mut out, &a.pre);
        out.push_str("\n   :effect ");
        write_conjunction(&mut out, &a.eff);
        out.push_str(")\n");
    }
    out.push_str(")\n");
    out
}

pub fn serialize_problem(p: &Problem) -> String {
    let mut out = String::new();
    writeln!(out, "(define (problem {})", p.name).unwrap();
    writeln!(out, "  (:domain {})", p.domain_name).unwrap();
    if !p.objects.is_empty() {
        let objs: Vec<String> = p
            .objects
            .iter()
            .map(|(o, ty)| format!("{o} - {ty}"))
            .collect();
        writeln!(out, "  (:objects {})", objs.join(" ")).unwrap();
    }
    out.push_str("  (:init");
    for atom in &p.init {
        write!(out, " {atom}").unwrap();
    }
    out.push_str(")\n  (:goal ");
    write_conjunction(&mut out, &p.goal);
    out.push_str("))\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::{parse_domain, parse_problem};
    use super::*;

    #[test]
    fn domain_round_trip() {
        let text = "(define (domain d) (:requirements :strips :typing)
            (:types robot location)
            (:predicates (at ?x ?l) (open ?l))
            (:action moveto :parameters (?r - robot ?a - location ?b - location)
             :precondition (at ?r ?a)
             :effect (and (at ?r ?b) (not (at ?r ?a)))))";
        let d = parse_domain(text).unwrap();
        let printed = serialize_domain(&d);
        assert_eq!(parse_domain(&printed).unwrap(), d);
        assert_eq!(printed.matches("(:action").count(), 1);
    }

    #[test]
    fn problem_round_trip() {
        let text = "(define (problem p) (:domain d)
            (:objects tomato - object fridge - location)
            (:init (at tomato fridge))
            (:goal (at tomato fridge)))";
        let p = parse_problem(text).unwrap();
        let printed = serialize_problem(&p);
        assert!(printed.contains("(:goal"));
        assert_eq!(parse_problem(&printed).unwrap(), p);
    }

    #[test]
    fn empty_conjunctions_survive() {
        let text = "(define (domain d) (:predicates (p))
            (:action a :parameters () :precondition (and) :effect (p)))";
        let d = parse_domain(text).unwrap();
        assert!(d.actions[0].pre.is_empty());
        let reparsed = parse_domain(&serialize_domain(&d)).unwrap();
        assert_eq!(reparsed, d);
    }
}
