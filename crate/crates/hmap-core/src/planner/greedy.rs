//! Greedy best-first search on the additive relaxation heuristic.
//!
//! Node ordering is (h, generating ground-action id, insertion sequence);
//! successors are generated in ground-action id order, so identical inputs
//! always yield identical plans.

use super::heuristic::h_add;
use super::{PlannerError, SearchBudget, SolveInput, SolveOutcome, Solver};
use crate::pddl::{applicable, apply, GroundActionId, State};
use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

pub struct GreedySolver;

impl Solver for GreedySolver {
    fn name(&self) -> &'static str {
        "greedy"
    }

    fn solve(
        &self,
        input: &SolveInput<'_>,
        budget: &SearchBudget,
    ) -> Result<SolveOutcome, PlannerError> {
        let model = input.model;
        let start = Instant::now();

        if model.goal_satisfied(&model.init) {
            return Ok(SolveOutcome::Plan(Vec::new()));
        }

        // parent map doubles as the closed set
        let mut parents: HashMap<State, Option<(State, GroundActionId)>> = HashMap::new();
        parents.insert(model.init.clone(), None);

        let mut open: BinaryHeap<Reverse<(usize, u32, u64, State)>> = BinaryHeap::new();
        let mut seq = 0u64;
        let h0 = h_add(model, &model.init);
        if h0 != usize::MAX {
            open.push(Reverse((h0, 0, seq, model.init.clone())));
        }

        let mut expanded = 0usize;
        while let Some(Reverse((_, _, _, state))) = open.pop() {
            if expanded >= budget.max_expansions || start.elapsed() >= budget.max_time {
                return Ok(SolveOutcome::BudgetExhausted {
                    nodes_expanded: expanded,
                    elapsed_ms: start.elapsed().as_millis(),
                });
            }
            expanded += 1;

            for action in model.action_ids() {
                if !applicable(model, &state, action) {
                    continue;
                }
                let next = apply(model, &state, action).expect("applicable checked");
                if parents.contains_key(&next) {
                    continue;
                }
                parents.insert(next.clone(), Some((state.clone(), action)));
                if model.goal_satisfied(&next) {
                    return Ok(SolveOutcome::Plan(reconstruct(&parents, next)));
                }
                let h = h_add(model, &next);
                if h == usize::MAX {
                    continue; // dead end in the relaxation
                }
                seq += 1;
                open.push(Reverse((h, action.0, seq, next)));
            }
        }
        Ok(SolveOutcome::Unsolvable)
    }
}

fn reconstruct(
    parents: &HashMap<State, Option<(State, GroundActionId)>>,
    goal: State,
) -> Vec<GroundActionId> {
    let mut plan = Vec::new();
    let mut cur = goal;
    while let Some(Some((prev, action))) = parents.get(&cur) {
        plan.push(*action);
        cur = prev.clone();
    }
    plan.reverse();
    plan
}
