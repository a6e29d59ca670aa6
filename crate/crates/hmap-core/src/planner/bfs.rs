//! Breadth-first oracle: provably shortest plans under uniform action cost.

use super::{PlannerError, SearchBudget, SolveInput, SolveOutcome, Solver};
use crate::pddl::{applicable, apply, GroundActionId, GroundModel, State};
use std::collections::{HashMap, VecDeque};

pub const DEFAULT_NODE_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BfsOutcome {
    Plan(Vec<GroundActionId>),
    NoneWithinDepth,
}

/// Exhaustive uniform-cost search. Expansion order follows ground-action id,
/// so the returned plan is the lexicographically first among the shortest.
pub fn bfs_oracle(
    model: &GroundModel,
    depth_cap: usize,
    node_cap: usize,
) -> Result<BfsOutcome, PlannerError> {
    if model.goal_satisfied(&model.init) {
        return Ok(BfsOutcome::Plan(Vec::new()));
    }
    let mut parents: HashMap<State, Option<(State, GroundActionId)>> = HashMap::new();
    parents.insert(model.init.clone(), None);
    let mut frontier = VecDeque::new();
    frontier.push_back((model.init.clone(), 0usize));

    while let Some((state, depth)) = frontier.pop_front() {
        if depth >= depth_cap {
            continue;
        }
        for action in model.action_ids() {
            if !applicable(model, &state, action) {
                continue;
            }
            let next = apply(model, &state, action).expect("applicable checked");
            if parents.contains_key(&next) {
                continue;
            }
            parents.insert(next.clone(), Some((state.clone(), action)));
            if parents.len() > node_cap {
                return Err(PlannerError::NodeCapExceeded(node_cap));
            }
            if model.goal_satisfied(&next) {
                let mut plan = Vec::new();
                let mut cur = next;
                while let Some(Some((prev, act))) = parents.get(&cur) {
                    plan.push(*act);
                    cur = prev.clone();
                }
                plan.reverse();
                return Ok(BfsOutcome::Plan(plan));
            }
            frontier.push_back((next, depth + 1));
        }
    }
    Ok(BfsOutcome::NoneWithinDepth)
}

/// The oracle behind the [`Solver`] interface; depth is bounded by the
/// expansion budget.
#[derive(Default)]
pub struct BfsSolver {
    pub node_cap: Option<usize>,
}

impl Solver for BfsSolver {
    fn name(&self) -> &'static str {
        "bfs"
    }

    fn solve(
        &self,
        input: &SolveInput<'_>,
        budget: &SearchBudget,
    ) -> Result<SolveOutcome, PlannerError> {
        let cap = self.node_cap.unwrap_or(DEFAULT_NODE_CAP);
        match bfs_oracle(input.model, budget.max_expansions, cap)? {
            BfsOutcome::Plan(plan) => Ok(SolveOutcome::Plan(plan)),
            BfsOutcome::NoneWithinDepth => Ok(SolveOutcome::Unsolvable),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    #[test]
    fn zero_length_plan_when_goal_in_init() {
        let d = parse_domain("(define (domain d) (:predicates (p)))").unwrap();
        let p =
            parse_problem("(define (problem q) (:domain d) (:init (p)) (:goal (p)))").unwrap();
        let m = GroundModel::build(&d, &p).unwrap();
        assert_eq!(bfs_oracle(&m, 10, 100).unwrap(), BfsOutcome::Plan(vec![]));
    }

    #[test]
    fn node_cap_exceeded_is_an_error() {
        let d = parse_domain(
            "(define (domain d) (:predicates (p ?x) (g))
             (:action set :parameters (?x) :precondition (and) :effect (p ?x)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem q) (:domain d) (:objects a b c d e f g2 h) (:init) (:goal (g)))",
        )
        .unwrap();
        let m = GroundModel::build(&d, &p).unwrap();
        assert!(matches!(
            bfs_oracle(&m, 100, 5).unwrap_err(),
            PlannerError::NodeCapExceeded(5)
        ));
    }
}
