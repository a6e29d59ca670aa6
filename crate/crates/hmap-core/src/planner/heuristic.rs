//! Additive delete-relaxation heuristic.
//!
//! Atom costs are propagated to a fixpoint over the delete-free relaxation;
//! negated preconditions and negated goals are treated as free. The state
//! value is the sum of positive goal atom costs (`usize::MAX` when some goal
//! atom is unreachable in the relaxation).

use crate::pddl::{GroundModel, State};

pub fn h_add(model: &GroundModel, state: &State) -> usize {
    let n = model.num_atoms();
    let mut cost = vec![usize::MAX; n];
    for &id in state.ids() {
        cost[id.0 as usize] = 0;
    }
    let mut changed = true;
    while changed {
        changed = false;
        for action in &model.actions {
            let mut total = 1usize;
            let mut reachable = true;
            for p in &action.pre_pos {
                match cost[p.0 as usize] {
                    usize::MAX => {
                        reachable = false;
                        break;
                    }
                    c => total = total.saturating_add(c),
                }
            }
            if !reachable {
                continue;
            }
            for a in &action.add {
                if total < cost[a.0 as usize] {
                    cost[a.0 as usize] = total;
                    changed = true;
                }
            }
        }
    }
    let mut h = 0usize;
    for g in &model.goal_pos {
        match cost[g.0 as usize] {
            usize::MAX => return usize::MAX,
            c => h = h.saturating_add(c),
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem, GroundModel};

    #[test]
    fn zero_at_goal_states() {
        let d = parse_domain("(define (domain d) (:predicates (p ?x)))").unwrap();
        let p = parse_problem(
            "(define (problem q) (:domain d) (:objects a) (:init (p a)) (:goal (p a)))",
        )
        .unwrap();
        let m = GroundModel::build(&d, &p).unwrap();
        assert_eq!(h_add(&m, &m.init), 0);
    }

    #[test]
    fn counts_relaxed_steps() {
        let d = parse_domain(
            "(define (domain d) (:predicates (a) (b) (c))
             (:action ab :parameters () :precondition (a) :effect (b))
             (:action bc :parameters () :precondition (b) :effect (c)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem q) (:domain d) (:init (a)) (:goal (c)))",
        )
        .unwrap();
        let m = GroundModel::build(&d, &p).unwrap();
        assert_eq!(h_add(&m, &m.init), 2);
    }

    #[test]
    fn unreachable_goal_is_infinite() {
        let d = parse_domain("(define (domain d) (:predicates (a) (b)))").unwrap();
        let p = parse_problem("(define (problem q) (:domain d) (:init (a)) (:goal (b)))").unwrap();
        let m = GroundModel::build(&d, &p).unwrap();
        assert_eq!(h_add(&m, &m.init), usize::MAX);
    }
}
