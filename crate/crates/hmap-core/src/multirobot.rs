//! Multi-robot problem tuple and partial-order plans.
//!
//! A mission is a team of typed robots over a shared atom space. Per-robot
//! sequential plans are merged into a plan `⟨Δ, ≺⟩`: the union of per-robot
//! chains plus cross-robot edges for every conflicting action pair, oriented
//! by the declared subtask dependency order. Makespan is the longest chain
//! under unit durations.

use crate::pddl::{
    apply, Domain, GroundAtom, GroundModel, Literal, PddlError, Problem, State, StepFailure,
    Term, ValidationReport,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MergeError {
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error("dependency orientation induces a cycle in the merged plan")]
    Cycle,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct RobotInfo {
    pub id: String,
    #[serde(rename = "type")]
    pub robot_type: String,
}

/// Robots, types, and per-type skill sets (the action names of each type's
/// domain). Same-type robots share a domain.
#[derive(Clone, Debug)]
pub struct RobotTeam {
    pub robots: Vec<RobotInfo>,
    pub type_domains: BTreeMap<String, Domain>,
}

impl RobotTeam {
    pub fn robot_type(&self, robot: &str) -> Option<&str> {
        self.robots
            .iter()
            .find(|r| r.id == robot)
            .map(|r| r.robot_type.as_str())
    }

    pub fn domain_for(&self, robot: &str) -> Option<&Domain> {
        self.type_domains.get(self.robot_type(robot)?)
    }

    /// Skills of a type: the action names of its domain.
    pub fn cap(&self, robot_type: &str) -> BTreeSet<String> {
        self.type_domains
            .get(robot_type)
            .map(|d| d.actions.iter().map(|a| a.name.clone()).collect())
            .unwrap_or_default()
    }

    /// The global skill-primitive set Σ.
    pub fn skills(&self) -> BTreeSet<String> {
        self.type_domains
            .values()
            .flat_map(|d| d.actions.iter().map(|a| a.name.clone()))
            .collect()
    }
}

/// The mission tuple: team, shared atoms, initial state, and goal.
#[derive(Clone, Debug)]
pub struct MultiRobotProblem {
    pub team: RobotTeam,
    pub objects: Vec<(String, String)>,
    pub init: Vec<GroundAtom>,
    pub goal: Vec<Literal>,
}

impl MultiRobotProblem {
    /// Union of all type domains; shared declarations must agree.
    pub fn joint_domain(&self) -> Result<Domain, PddlError> {
        let mut iter = self.team.type_domains.values();
        let mut joint = iter
            .next()
            .cloned()
            .unwrap_or_else(|| Domain {
                name: "joint".into(),
                requirements: Default::default(),
                types: Default::default(),
                predicates: Vec::new(),
                actions: Vec::new(),
            });
        joint.name = "joint".into();
        for d in iter {
            joint.merge(d)?;
        }
        Ok(joint)
    }

    pub fn joint_problem(&self, joint_domain: &Domain) -> Problem {
        Problem {
            name: "mission".into(),
            domain_name: joint_domain.name.clone(),
            objects: self.objects.clone(),
            init: self.init.clone(),
            goal: self.goal.clone(),
        }
    }

    pub fn joint_model(&self) -> Result<(Domain, GroundModel), PddlError> {
        let domain = self.joint_domain()?;
        let problem = self.joint_problem(&domain);
        let model = GroundModel::build(&domain, &problem)?;
        Ok((domain, model))
    }

    /// Goal literals rendered as display strings, for reports.
    pub fn goal_atoms(&self) -> Vec<String> {
        self.goal.iter().map(|l| l.to_string()).collect()
    }
}

/// Convenience constructor for ground goal literals.
pub fn ground_literal(positive: bool, pred: &str, args: &[&str]) -> Literal {
    Literal {
        positive,
        atom: crate::pddl::ParamAtom {
            pred: pred.to_string(),
            args: args.iter().map(|a| Term::Const(a.to_string())).collect(),
        },
    }
}

/// A robot-tagged ground action inside a merged plan.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct PlannedAction {
    pub robot: String,
    pub subtask: String,
    pub name: String,
    pub args: Vec<String>,
}

impl PlannedAction {
    pub fn display(&self) -> String {
        if self.args.is_empty() {
            format!("({})", self.name)
        } else {
            format!("({} {})", self.name, self.args.join(" "))
        }
    }
}

/// `⟨Δ, ≺⟩`: robot-tagged actions with a strict partial order, stored as
/// explicit edges between action indices.
#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct PartialOrderPlan {
    pub actions: Vec<PlannedAction>,
    pub edges: Vec<(usize, usize)>,
}

impl PartialOrderPlan {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.actions.len()];
        for &(a, b) in &self.edges {
            out[a].push(b);
        }
        out
    }

    fn indegrees(&self) -> Vec<usize> {
        let mut indeg = vec![0usize; self.actions.len()];
        for &(_, b) in &self.edges {
            indeg[b] += 1;
        }
        indeg
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    fn topological_order(&self) -> Option<Vec<usize>> {
        let succ = self.successors();
        let mut indeg = self.indegrees();
        let mut ready: Vec<usize> = (0..self.actions.len()).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(self.actions.len());
        while let Some(&n) = ready.iter().min() {
            ready.retain(|&x| x != n);
            order.push(n);
            for &m in &succ[n] {
                indeg[m] -= 1;
                if indeg[m] == 0 {
                    ready.push(m);
                }
            }
        }
        (order.len() == self.actions.len()).then_some(order)
    }

    /// Longest chain length under unit durations; the sequential cost is
    /// simply `len()`.
    pub fn makespan(&self) -> Result<usize, MergeError> {
        let order = self.topological_order().ok_or(MergeError::Cycle)?;
        let succ = self.successors();
        let mut depth = vec![1usize; self.actions.len().max(1)];
        if self.actions.is_empty() {
            return Ok(0);
        }
        for &n in order.iter().rev() {
            for &m in &succ[n] {
                depth[n] = depth[n].max(1 + depth[m]);
            }
        }
        Ok(depth.iter().copied().max().unwrap_or(0))
    }

    /// Deterministic linear extension: among ready actions, lowest robot id
    /// first, then intra-robot position.
    pub fn canonical_extension(&self) -> Result<Vec<usize>, MergeError> {
        let succ = self.successors();
        let mut indeg = self.indegrees();
        let key = |i: usize| (self.actions[i].robot.clone(), i);
        let mut ready: BTreeSet<(String, usize)> = (0..self.actions.len())
            .filter(|&i| indeg[i] == 0)
            .map(key)
            .collect();
        let mut order = Vec::with_capacity(self.actions.len());
        while let Some(first) = ready.iter().next().cloned() {
            ready.remove(&first);
            let n = first.1;
            order.push(n);
            for &m in &succ[n] {
                indeg[m] -= 1;
                if indeg[m] == 0 {
                    ready.insert(key(m));
                }
            }
        }
        if order.len() == self.actions.len() {
            Ok(order)
        } else {
            Err(MergeError::Cycle)
        }
    }

    /// Validate one linear extension against a joint model and goal.
    pub fn validate_extension(
        &self,
        model: &GroundModel,
        order: &[usize],
    ) -> ValidationReport {
        let mut state = model.init.clone();
        for (step, &idx) in order.iter().enumerate() {
            let pa = &self.actions[idx];
            let Some(action) = model.find_action(&pa.name, &pa.args) else {
                return ValidationReport {
                    valid: false,
                    steps_checked: step,
                    failure: Some(StepFailure {
                        step,
                        action: pa.display(),
                        violated: format!("unknown action {}", pa.display()),
                        state_digest: state.digest(model),
                        state_atoms: state.render(model),
                    }),
                    unsatisfied_goals: Vec::new(),
                    final_state_digest: state.digest(model),
                };
            };
            match apply(model, &state, action) {
                Ok(next) => state = next,
                Err(PddlError::Inapplicable { literal, .. }) => {
                    return ValidationReport {
                        valid: false,
                        steps_checked: step,
                        failure: Some(StepFailure {
                            step,
                            action: pa.display(),
                            violated: literal,
                            state_digest: state.digest(model),
                            state_atoms: state.render(model),
                        }),
                        unsatisfied_goals: Vec::new(),
                        final_state_digest: state.digest(model),
                    }
                }
                Err(_) => unreachable!("apply only fails with Inapplicable"),
            }
        }
        let unsatisfied = model.unsatisfied_goals(&state);
        ValidationReport {
            valid: unsatisfied.is_empty(),
            steps_checked: order.len(),
            failure: None,
            unsatisfied_goals: unsatisfied,
            final_state_digest: state.digest(model),
        }
    }

    /// Execute one extension and return the final state (ignoring failures
    /// is not possible: stops at the first inapplicable step).
    pub fn final_state(&self, model: &GroundModel, order: &[usize]) -> Result<State, PddlError> {
        let mut state = model.init.clone();
        for &idx in order {
            let pa = &self.actions[idx];
            let action =
                model
                    .find_action(&pa.name, &pa.args)
                    .ok_or_else(|| PddlError::UnknownAction {
                        name: pa.name.clone(),
                        args: pa.args.clone(),
                    })?;
            state = apply(model, &state, action)?;
        }
        Ok(state)
    }
}

/// One validated sequential sub-plan, tagged with its robot and subtask id.
#[derive(Clone, Debug)]
pub struct SubPlan {
    pub subtask: String,
    pub robot: String,
    pub actions: Vec<(String, Vec<String>)>,
}

/// Merge per-robot sequential plans into a partial-order plan.
///
/// `deps` are directed subtask dependency edges `(before, after)` declared
/// during decomposition; they orient cross-robot edges between conflicting
/// action pairs. Conflicting pairs with no declared dependency in either
/// direction are oriented canonically (input order), keeping the result
/// deterministic. Same-robot sub-plans are chained in dependency order, then
/// input order.
pub fn merge_subplans(
    joint: &GroundModel,
    subplans: &[SubPlan],
    deps: &[(String, String)],
) -> Result<PartialOrderPlan, MergeError> {
    // transitive closure of subtask dependencies
    let ids: Vec<&str> = subplans.iter().map(|s| s.subtask.as_str()).collect();
    let mut before: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (a, b) in deps {
        before.entry(b.as_str()).or_default().insert(a.as_str());
    }
    let mut changed = true;
    while changed {
        changed = false;
        for &id in &ids {
            let preds: Vec<&str> = before
                .get(id)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            for p in preds {
                let grand: Vec<&str> = before
                    .get(p)
                    .map(|s| s.iter().copied().collect())
                    .unwrap_or_default();
                for g in grand {
                    if before.entry(id).or_default().insert(g) {
                        changed = true;
                    }
                }
            }
        }
    }
    let depends = |later: &str, earlier: &str| -> bool {
        before.get(later).is_some_and(|s| s.contains(earlier))
    };

    // order same-robot subplans: dependency order first, then input order
    let mut order: Vec<usize> = (0..subplans.len()).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&subplans[a], &subplans[b]);
        if sa.robot == sb.robot {
            if depends(&sb.subtask, &sa.subtask) {
                return std::cmp::Ordering::Less;
            }
            if depends(&sa.subtask, &sb.subtask) {
                return std::cmp::Ordering::Greater;
            }
        }
        a.cmp(&b)
    });

    let mut plan = PartialOrderPlan::default();
    let mut owner: Vec<usize> = Vec::new(); // action index -> subplan index
    let mut last_of_robot: BTreeMap<&str, usize> = BTreeMap::new();
    for &sp_idx in &order {
        let sp = &subplans[sp_idx];
        for (name, args) in &sp.actions {
            let idx = plan.actions.len();
            plan.actions.push(PlannedAction {
                robot: sp.robot.clone(),
                subtask: sp.subtask.clone(),
                name: name.clone(),
                args: args.clone(),
            });
            owner.push(sp_idx);
            if let Some(&prev) = last_of_robot.get(sp.robot.as_str()) {
                plan.edges.push((prev, idx));
            }
            last_of_robot.insert(&sp.robot, idx);
        }
    }

    // footprint of each action in the joint atom space
    let footprint = |idx: usize| -> Option<(Vec<crate::pddl::AtomId>, Vec<crate::pddl::AtomId>)> {
        let pa = &plan.actions[idx];
        let ga = joint.action(joint.find_action(&pa.name, &pa.args)?);
        let mut reads_writes: Vec<_> = ga
            .pre_pos
            .iter()
            .chain(&ga.pre_neg)
            .chain(&ga.add)
            .chain(&ga.del)
            .copied()
            .collect();
        reads_writes.sort_unstable();
        reads_writes.dedup();
        let mut writes: Vec<_> = ga.add.iter().chain(&ga.del).copied().collect();
        writes.sort_unstable();
        writes.dedup();
        Some((reads_writes, writes))
    };
    let touched: Vec<Option<_>> = (0..plan.actions.len()).map(footprint).collect();

    // cross-robot edges for conflicting pairs
    for i in 0..plan.actions.len() {
        for j in (i + 1)..plan.actions.len() {
            if plan.actions[i].robot == plan.actions[j].robot {
                continue;
            }
            let (Some((touch_i, writes_i)), Some((touch_j, writes_j))) =
                (&touched[i], &touched[j])
            else {
                continue; // unknown actions surface later during validation
            };
            let conflicts = writes_i.iter().any(|w| touch_j.binary_search(w).is_ok())
                || writes_j.iter().any(|w| touch_i.binary_search(w).is_ok());
            if !conflicts {
                continue;
            }
            let (si, sj) = (&subplans[owner[i]].subtask, &subplans[owner[j]].subtask);
            let edge = if depends(sj, si) {
                (i, j)
            } else if depends(si, sj) {
                (j, i)
            } else {
                (i.min(j), i.max(j)) // no declared dependency: canonical order
            };
            if !plan.edges.contains(&edge) {
                plan.edges.push(edge);
            }
        }
    }
    plan.edges.sort_unstable();
    plan.edges.dedup();

    if !plan.is_acyclic() {
        return Err(MergeError::Cycle);
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::{parse_domain, parse_problem};

    fn chain_plan(lengths: &[usize]) -> PartialOrderPlan {
        let mut plan = PartialOrderPlan::default();
        for (r, &len) in lengths.iter().enumerate() {
            let mut prev = None;
            for k in 0..len {
                let idx = plan.actions.len();
                plan.actions.push(PlannedAction {
                    robot: format!("r{r}"),
                    subtask: format!("s{r}"),
                    name: format!("a{r}_{k}"),
                    args: vec![],
                });
                if let Some(p) = prev {
                    plan.edges.push((p, idx));
                }
                prev = Some(idx);
            }
        }
        plan
    }

    #[test]
    fn makespan_of_independent_chains() {
        let plan = chain_plan(&[3, 2]);
        assert_eq!(plan.makespan().unwrap(), 3);
    }

    #[test]
    fn makespan_of_total_order() {
        let mut plan = chain_plan(&[5]);
        assert_eq!(plan.makespan().unwrap(), 5);
        // fully ordered: makespan equals |Δ|
        assert_eq!(plan.makespan().unwrap(), plan.len());
        plan.edges.clear();
        assert_eq!(plan.makespan().unwrap(), 1);
    }

    #[test]
    fn cycle_is_an_error() {
        let mut plan = chain_plan(&[2]);
        plan.edges.push((1, 0));
        assert!(matches!(plan.makespan(), Err(MergeError::Cycle)));
    }

    fn fridge_world() -> (Domain, GroundModel) {
        let d = parse_domain(
            "(define (domain joint) (:requirements :strips :typing :negative-preconditions)
             (:types robot object location)
             (:predicates (at ?x ?l) (holding ?r ?o) (open ?l) (in ?o ?l))
             (:action openreceptacle :parameters (?r - robot ?l - location)
              :precondition (and (at ?r ?l) (not (open ?l)))
              :effect (open ?l))
             (:action pickupobject :parameters (?r - robot ?o - object ?l - location)
              :precondition (and (at ?o ?l) (at ?r ?l))
              :effect (and (holding ?r ?o) (not (at ?o ?l))))
             (:action putobject :parameters (?r - robot ?o - object ?l - location)
              :precondition (and (holding ?r ?o) (at ?r ?l) (open ?l))
              :effect (and (in ?o ?l) (not (holding ?r ?o)))))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem mission) (:domain joint)
             (:objects a - robot b - robot tomato - object fridge - location)
             (:init (at tomato fridge) (at a fridge) (at b fridge))
             (:goal (in tomato fridge)))",
        )
        .unwrap();
        let m = GroundModel::build(&d, &p).unwrap();
        (d, m)
    }

    #[test]
    fn merge_disjoint_plans_has_only_chains() {
        let (_, m) = fridge_world();
        let subplans = [
            SubPlan {
                subtask: "s1".into(),
                robot: "a".into(),
                actions: vec![
                    ("pickupobject".into(), vec!["a".into(), "tomato".into(), "fridge".into()]),
                ],
            },
            SubPlan {
                subtask: "s2".into(),
                robot: "b".into(),
                actions: vec![
                    ("openreceptacle".into(), vec!["b".into(), "fridge".into()]),
                ],
            },
        ];
        // pickup and open share no atoms -> no cross edges
        let plan = merge_subplans(&m, &subplans, &[]).unwrap();
        assert_eq!(plan.len(), 2);
        assert!(plan.edges.is_empty());
    }

    #[test]
    fn merge_encodes_open_before_put() {
        let (_, m) = fridge_world();
        let subplans = [
            SubPlan {
                subtask: "put".into(),
                robot: "a".into(),
                actions: vec![
                    ("pickupobject".into(), vec!["a".into(), "tomato".into(), "fridge".into()]),
                    ("putobject".into(), vec!["a".into(), "tomato".into(), "fridge".into()]),
                ],
            },
            SubPlan {
                subtask: "open".into(),
                robot: "b".into(),
                actions: vec![
                    ("openreceptacle".into(), vec!["b".into(), "fridge".into()]),
                ],
            },
        ];
        let plan = merge_subplans(&m, &subplans, &[("open".into(), "put".into())]).unwrap();
        let open_idx = plan
            .actions
            .iter()
            .position(|a| a.name == "openreceptacle")
            .unwrap();
        let put_idx = plan.actions.iter().position(|a| a.name == "putobject").unwrap();
        assert!(plan.has_edge(open_idx, put_idx));
        let order = plan.canonical_extension().unwrap();
        assert!(plan.validate_extension(&m, &order).valid);
    }
}
