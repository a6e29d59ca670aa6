//! Benchmark task cases, symbolic execution, and suite metrics.
//!
//! A task case is a TOML file holding the natural-language instruction, the
//! reference environment (robots, per-type domains, objects, init, goal),
//! and a script: the intended decomposition plus one PDDL spec per subtask.
//! Ground-truth plan length and makespan are computed at load time by
//! running the exhaustive oracle on the scripted specs and merging the
//! resulting sub-plans — they are never hand-typed. The script also
//! materializes into responder rules so suites can be recorded to cassettes
//! and replayed deterministically.

use crate::backend::{LlmBackend, ResponseRule, Role};
use crate::hierarchy::{orchestrate, HierarchyConfig, RunError, RunOutcome};
use crate::multirobot::{
    merge_subplans, MergeError, MultiRobotProblem, PartialOrderPlan, RobotInfo, RobotTeam,
    SubPlan,
};
use crate::pddl::{
    apply, parse_domain, parse_problem, GroundAtom, GroundModel, Literal, ParamAtom, PddlError,
    State, Term,
};
use crate::planner::{bfs_oracle, BfsOutcome, PlannerError, Solver};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("task file {file}: {detail}")]
    TaskFile { file: String, detail: String },
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Run(#[from] RunError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Compound,
    Complex,
    Vague,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Compound => "compound",
            Category::Complex => "complex",
            Category::Vague => "vague",
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct ScriptSubtask {
    pub id: String,
    pub text: String,
    pub robot: String,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct SpecPair {
    pub domain: String,
    pub problem: String,
}

#[derive(Clone, Debug, Deserialize)]
struct ScriptSection {
    subtasks: Vec<ScriptSubtask>,
    specs: BTreeMap<String, SpecPair>,
}

#[derive(Clone, Debug, Deserialize)]
struct EnvSection {
    robots: Vec<RobotInfo>,
    objects: Vec<(String, String)>,
    init: Vec<String>,
    goal: Vec<String>,
    domains: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Deserialize)]
struct TaskFile {
    id: String,
    category: Category,
    instruction: String,
    environment: EnvSection,
    script: ScriptSection,
}

#[derive(Clone, Debug, Deserialize)]
struct EnvFile {
    instruction: String,
    #[serde(flatten)]
    environment: EnvSection,
}

fn env_to_problem(env: EnvSection, file: &str) -> Result<MultiRobotProblem, EvalError> {
    let err = |detail: String| EvalError::TaskFile {
        file: file.to_string(),
        detail,
    };
    let mut type_domains = BTreeMap::new();
    for (ty, src) in &env.domains {
        type_domains.insert(ty.clone(), parse_domain(src)?);
    }
    let mut init = Vec::new();
    for atom in &env.init {
        init.push(parse_ground_atom(atom).map_err(err)?);
    }
    let mut goal = Vec::new();
    for lit in &env.goal {
        goal.push(parse_goal_literal(lit).map_err(err)?);
    }
    Ok(MultiRobotProblem {
        team: RobotTeam {
            robots: env.robots,
            type_domains,
        },
        objects: env.objects,
        init,
        goal,
    })
}

/// Load a standalone environment file: an instruction plus the reference
/// world (no script, no ground truth).
pub fn load_environment(path: &Path) -> Result<(String, MultiRobotProblem), EvalError> {
    let text = std::fs::read_to_string(path)?;
    load_environment_str(&text, &path.display().to_string())
}

pub fn load_environment_str(
    text: &str,
    file: &str,
) -> Result<(String, MultiRobotProblem), EvalError> {
    let parsed: EnvFile = toml::from_str(text).map_err(|e| EvalError::TaskFile {
        file: file.to_string(),
        detail: e.to_string(),
    })?;
    let problem = env_to_problem(parsed.environment, file)?;
    Ok((parsed.instruction, problem))
}

/// Oracle-derived reference numbers for one task.
#[derive(Clone, Debug, Serialize)]
pub struct GroundTruth {
    pub plan_len: usize,
    pub makespan: usize,
}

#[derive(Clone, Debug)]
pub struct TaskCase {
    pub id: String,
    pub category: Category,
    pub instruction: String,
    pub problem: MultiRobotProblem,
    pub subtasks: Vec<ScriptSubtask>,
    pub specs: BTreeMap<String, SpecPair>,
    pub ground_truth: GroundTruth,
}

/// Parse a ground atom rendered as `(pred a b)`.
pub fn parse_ground_atom(text: &str) -> Result<GroundAtom, String> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| format!("`{text}` is not a parenthesized atom"))?;
    let mut parts = inner.split_whitespace().map(|s| s.to_ascii_lowercase());
    let pred = parts.next().ok_or_else(|| format!("`{text}` is empty"))?;
    Ok(GroundAtom {
        pred,
        args: parts.collect(),
    })
}

/// Parse a goal literal: `(pred a)` or `(not (pred a))`.
pub fn parse_goal_literal(text: &str) -> Result<Literal, String> {
    let trimmed = text.trim();
    let lowered = trimmed.to_ascii_lowercase();
    let (positive, atom_text) = if let Some(rest) = lowered.strip_prefix("(not") {
        let inner = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("`{text}` is unterminated"))?;
        (false, inner.trim().to_string())
    } else {
        (true, lowered)
    };
    let atom = parse_ground_atom(&atom_text)?;
    Ok(Literal {
        positive,
        atom: ParamAtom {
            pred: atom.pred,
            args: atom.args.into_iter().map(Term::Const).collect(),
        },
    })
}

const ORACLE_DEPTH_CAP: usize = 32;
const ORACLE_NODE_CAP: usize = 1_000_000;

pub fn load_task(path: &Path) -> Result<TaskCase, EvalError> {
    let text = std::fs::read_to_string(path)?;
    load_task_str(&text, &path.display().to_string())
}

pub fn load_task_str(text: &str, file: &str) -> Result<TaskCase, EvalError> {
    let err = |detail: String| EvalError::TaskFile {
        file: file.to_string(),
        detail,
    };
    let parsed: TaskFile = toml::from_str(text).map_err(|e| err(e.to_string()))?;
    let problem = env_to_problem(parsed.environment, file)?;

    // ground truth: exhaustive oracle on each scripted spec, then merge
    let (_, joint) = problem.joint_model()?;
    let mut subplans = Vec::new();
    for st in &parsed.script.subtasks {
        if problem.team.robot_type(&st.robot).is_none() {
            return Err(err(format!("subtask {} names unknown robot {}", st.id, st.robot)));
        }
        let spec = parsed
            .script
            .specs
            .get(&st.id)
            .ok_or_else(|| err(format!("subtask {} has no spec", st.id)))?;
        let domain = parse_domain(&spec.domain)?;
        let spec_problem = parse_problem(&spec.problem)?;
        let model = GroundModel::build(&domain, &spec_problem)?;
        let plan = match bfs_oracle(&model, ORACLE_DEPTH_CAP, ORACLE_NODE_CAP)? {
            BfsOutcome::Plan(ids) => ids,
            BfsOutcome::NoneWithinDepth => {
                return Err(err(format!("spec for subtask {} is unsolvable", st.id)))
            }
        };
        subplans.push(SubPlan {
            subtask: st.id.clone(),
            robot: st.robot.clone(),
            actions: plan
                .iter()
                .map(|&id| {
                    let a = model.action(id);
                    (a.name.clone(), a.args.clone())
                })
                .collect(),
        });
    }
    let deps: Vec<(String, String)> = parsed
        .script
        .subtasks
        .iter()
        .flat_map(|st| {
            st.depends_on
                .iter()
                .map(move |d| (d.clone(), st.id.clone()))
        })
        .collect();
    let merged = merge_subplans(&joint, &subplans, &deps)?;
    let order = merged.canonical_extension()?;
    let report = merged.validate_extension(&joint, &order);
    if !report.valid {
        return Err(err(format!(
            "scripted reference plan is invalid: {}",
            report
                .failure
                .map(|f| f.violated)
                .unwrap_or_else(|| report.unsatisfied_goals.join(", "))
        )));
    }
    let ground_truth = GroundTruth {
        plan_len: merged.len(),
        makespan: merged.makespan()?,
    };

    Ok(TaskCase {
        id: parsed.id,
        category: parsed.category,
        instruction: parsed.instruction,
        problem,
        subtasks: parsed.script.subtasks,
        specs: parsed.script.specs,
        ground_truth,
    })
}

/// Materialize a task's script into responder rules matching the prompts the
/// hierarchy will actually send (3-layer routing: mission -> per-type batch
/// -> per-robot spec).
pub fn scripted_rules_for(task: &TaskCase) -> Vec<ResponseRule> {
    let mut rules = Vec::new();
    let mission_key = format!("Mission: {}", task.instruction);

    // robot -> type, preserving team order of types
    let mut types: Vec<String> = Vec::new();
    for st in &task.subtasks {
        let ty = task
            .problem
            .team
            .robot_type(&st.robot)
            .expect("validated at load")
            .to_string();
        if !types.contains(&ty) {
            types.push(ty);
        }
    }

    let coarse_id = |ty: &str| format!("{}:{ty}", task.id);
    let coarse_text = |ty: &str| format!("{} ({ty} portion of {})", task.instruction, task.id);

    let global = serde_json::json!({
        "subtasks": types
            .iter()
            .map(|ty| {
                serde_json::json!({
                    "id": coarse_id(ty),
                    "text": coarse_text(ty),
                    "target_type": ty,
                })
            })
            .collect::<Vec<_>>()
    });
    rules.push(
        ResponseRule::new(Role::Decompose, &global.to_string()).task_contains(&mission_key),
    );

    for ty in &types {
        let leaves: Vec<_> = task
            .subtasks
            .iter()
            .filter(|st| task.problem.team.robot_type(&st.robot) == Some(ty.as_str()))
            .map(|st| {
                serde_json::json!({
                    "id": st.id,
                    "text": st.text,
                    "target_robot": st.robot,
                    "depends_on": st.depends_on,
                    "parent": coarse_id(ty),
                })
            })
            .collect();
        let msg = serde_json::json!({ "subtasks": leaves });
        rules.push(
            ResponseRule::new(Role::Decompose, &msg.to_string())
                .task_contains(&format!("Robot type: {ty}"))
                .task_contains(&coarse_text(ty)),
        );
    }

    for st in &task.subtasks {
        let spec = &task.specs[&st.id];
        let msg = serde_json::json!({
            "robot": st.robot,
            "domain": spec.domain,
            "problem": spec.problem,
        });
        rules.push(
            ResponseRule::new(Role::GeneratePddl, &msg.to_string())
                .task_contains(&format!("Subtask {}:", st.id)),
        );
    }
    rules
}

// ---- symbolic execution --------------------------------------------------

/// Inject a fault during execution: delete `atom` from the state right
/// before the first action whose display form contains `before_action`.
#[derive(Clone, Debug)]
pub struct FaultSpec {
    pub before_action: String,
    pub atom: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExecutionResult {
    pub success: bool,
    pub steps_completed: usize,
    pub failed_at: Option<String>,
    pub goals_total: usize,
    pub goals_achieved: usize,
}

/// Step a linear extension through the reference model, optionally injecting
/// one fault, and report goal achievement of the final state.
pub fn execute_symbolic(
    model: &GroundModel,
    plan: &PartialOrderPlan,
    order: &[usize],
    fault: Option<&FaultSpec>,
) -> ExecutionResult {
    let mut state = model.init.clone();
    let mut fault_pending = fault;
    let mut steps_completed = 0;
    let mut failed_at = None;

    for &idx in order {
        let pa = &plan.actions[idx];
        let display = pa.display();
        if let Some(f) = fault_pending {
            if display.contains(&f.before_action) {
                if let Ok(atom) = parse_ground_atom(&f.atom) {
                    if let Some(id) = model.atom_id(&atom) {
                        let ids: Vec<_> =
                            state.ids().iter().copied().filter(|&a| a != id).collect();
                        state = State::from_ids(ids);
                    }
                }
                fault_pending = None;
            }
        }
        let Some(action) = model.find_action(&pa.name, &pa.args) else {
            failed_at = Some(format!("{display}: unknown action"));
            break;
        };
        match apply(model, &state, action) {
            Ok(next) => {
                state = next;
                steps_completed += 1;
            }
            Err(e) => {
                failed_at = Some(format!("{display}: {e}"));
                break;
            }
        }
    }

    let goals_total = model.goal_pos.len() + model.goal_neg.len();
    let goals_achieved = goals_total - model.unsatisfied_goals(&state).len();
    ExecutionResult {
        success: failed_at.is_none() && goals_achieved == goals_total,
        steps_completed,
        failed_at,
        goals_total,
        goals_achieved,
    }
}

// ---- metrics and suite runs -----------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct EpisodeRecord {
    pub task: String,
    pub category: Category,
    pub seed: u64,
    pub success: bool,
    pub iterations_used: u32,
    pub plan_len: usize,
    pub makespan: usize,
    pub gt_plan_len: usize,
    pub gt_makespan: usize,
    pub gcr: f64,
    pub eff: f64,
    pub ru: f64,
    /// Wall-clock time; informational only, excluded from determinism
    /// comparisons of the metric reports.
    pub wall_ms: u128,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Metrics {
    pub episodes: usize,
    pub sr: f64,
    pub gcr: f64,
    pub eff: f64,
    pub ru: f64,
}

/// Fold episode records into metrics: SR and GCR average over all episodes;
/// Eff and RU average over successful episodes only.
pub fn compute_metrics<'a>(episodes: impl IntoIterator<Item = &'a EpisodeRecord>) -> Metrics {
    let mut n = 0usize;
    let mut successes = 0usize;
    let mut gcr_sum = 0.0;
    let mut eff_sum = 0.0;
    let mut ru_sum = 0.0;
    for e in episodes {
        n += 1;
        gcr_sum += e.gcr;
        if e.success {
            successes += 1;
            eff_sum += e.eff;
            ru_sum += e.ru;
        }
    }
    if n == 0 {
        return Metrics::default();
    }
    Metrics {
        episodes: n,
        sr: successes as f64 / n as f64,
        gcr: gcr_sum / n as f64,
        eff: if successes > 0 { eff_sum / successes as f64 } else { 0.0 },
        ru: if successes > 0 { ru_sum / successes as f64 } else { 0.0 },
    }
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub overall: Metrics,
    pub by_category: BTreeMap<String, Metrics>,
    #[serde(skip)]
    pub episodes: Vec<EpisodeRecord>,
}

/// Run one episode of one task and score it against the oracle numbers.
pub fn run_episode(
    task: &TaskCase,
    backend: &dyn LlmBackend,
    solver: &dyn Solver,
    cfg: &HierarchyConfig,
    seed: u64,
) -> Result<EpisodeRecord, EvalError> {
    let started = std::time::Instant::now();
    let (_, joint) = task.problem.joint_model()?;
    let result = orchestrate(&task.problem, &task.instruction, backend, solver, cfg)?;
    let goals_total = joint.goal_pos.len() + joint.goal_neg.len();
    let record = match result.outcome {
        RunOutcome::Success {
            plan,
            order,
            makespan,
            iterations_used,
        } => {
            let exec = execute_symbolic(&joint, &plan, &order, None);
            let gt = &task.ground_truth;
            EpisodeRecord {
                task: task.id.clone(),
                category: task.category,
                seed,
                success: exec.success,
                iterations_used,
                plan_len: plan.len(),
                makespan,
                gt_plan_len: gt.plan_len,
                gt_makespan: gt.makespan,
                gcr: if exec.goals_total == 0 {
                    1.0
                } else {
                    exec.goals_achieved as f64 / exec.goals_total as f64
                },
                eff: ratio_capped(gt.plan_len, plan.len()),
                ru: ratio_capped(gt.makespan, makespan),
                wall_ms: started.elapsed().as_millis(),
            }
        }
        RunOutcome::Failure {
            iterations_used, ..
        } => {
            // nothing executed: score goal coverage of the initial state
            let achieved = goals_total - joint.unsatisfied_goals(&joint.init).len();
            EpisodeRecord {
                task: task.id.clone(),
                category: task.category,
                seed,
                success: false,
                iterations_used,
                plan_len: 0,
                makespan: 0,
                gt_plan_len: task.ground_truth.plan_len,
                gt_makespan: task.ground_truth.makespan,
                gcr: if goals_total == 0 {
                    1.0
                } else {
                    achieved as f64 / goals_total as f64
                },
                eff: 0.0,
                ru: 0.0,
                wall_ms: started.elapsed().as_millis(),
            }
        }
    };
    Ok(record)
}

fn ratio_capped(reference: usize, achieved: usize) -> f64 {
    if achieved == 0 {
        0.0
    } else {
        (reference as f64 / achieved as f64).min(1.0)
    }
}

/// Run every task for every seed and aggregate. Episodes run in task order,
/// seeds innermost, so the report is deterministic for deterministic
/// backends.
pub fn run_suite(
    tasks: &[TaskCase],
    backend: &dyn LlmBackend,
    solver: &dyn Solver,
    cfg: &HierarchyConfig,
    seeds: u64,
) -> Result<SuiteReport, EvalError> {
    let mut episodes = Vec::new();
    for task in tasks {
        for seed in 0..seeds.max(1) {
            episodes.push(run_episode(task, backend, solver, cfg, seed)?);
        }
    }
    let overall = compute_metrics(&episodes);
    let mut by_category = BTreeMap::new();
    for cat in [Category::Compound, Category::Complex, Category::Vague] {
        let subset: Vec<&EpisodeRecord> =
            episodes.iter().filter(|e| e.category == cat).collect();
        if !subset.is_empty() {
            by_category.insert(
                cat.as_str().to_string(),
                compute_metrics(subset.into_iter()),
            );
        }
    }
    Ok(SuiteReport {
        overall,
        by_category,
        episodes,
    })
}

impl SuiteReport {
    /// Machine-readable report; byte-deterministic for deterministic runs.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width text table, one row per category plus the overall row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>5} {:>7} {:>7} {:>7} {:>7}\n",
            "category", "n", "SR", "GCR", "Eff", "RU"
        ));
        let row = |name: &str, m: &Metrics| {
            format!(
                "{:<10} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>7.3}\n",
                name, m.episodes, m.sr, m.gcr, m.eff, m.ru
            )
        };
        for (name, m) in &self.by_category {
            out.push_str(&row(name, m));
        }
        out.push_str(&row("overall", &self.overall));
        out
    }

    pub fn episodes_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.episodes {
            out.push_str(&serde_json::to_string(e).expect("episode serializes"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::planner::GreedySolver;

    const TASK_TOML: &str = r#"
id = "t-demo"
category = "compound"
instruction = "store the tomato in the fridge"

[environment]
robots = [{ id = "a", type = "arm" }]
objects = [["a", "robot"], ["tomato", "object"], ["fridge", "location"]]
init = ["(at a fridge)", "(at tomato fridge)"]
goal = ["(in tomato fridge)"]

[environment.domains.arm]
text = ""
"#;

    const ARM: &str = "(define (domain arm)
        (:requirements :strips :typing :negative-preconditions)
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
         :effect (and (in ?o ?l) (not (holding ?r ?o)))))";

    fn demo_task_toml() -> String {
        let spec_problem = "(define (problem store) (:domain arm)
            (:objects a - robot tomato - object fridge - location)
            (:init (at a fridge) (at tomato fridge))
            (:goal (in tomato fridge)))";
        let mut doc = toml::map::Map::new();
        doc.insert("id".into(), "t-demo".into());
        doc.insert("category".into(), "compound".into());
        doc.insert("instruction".into(), "store the tomato in the fridge".into());
        let env = toml::toml! {
            robots = [{ id = "a", type = "arm" }]
            objects = [["a", "robot"], ["tomato", "object"], ["fridge", "location"]]
            init = ["(at a fridge)", "(at tomato fridge)"]
            goal = ["(in tomato fridge)"]
        };
        let mut env = env.clone();
        let mut domains = toml::map::Map::new();
        domains.insert("arm".into(), ARM.into());
        env.insert("domains".into(), toml::Value::Table(domains));
        doc.insert("environment".into(), toml::Value::Table(env));
        let script = toml::toml! {
            [[subtasks]]
            id = "t-demo-s1"
            text = "store the tomato"
            robot = "a"
        };
        let mut script = script.clone();
        let mut specs = toml::map::Map::new();
        let mut pair = toml::map::Map::new();
        pair.insert("domain".into(), ARM.into());
        pair.insert("problem".into(), spec_problem.into());
        specs.insert("t-demo-s1".into(), toml::Value::Table(pair));
        script.insert("specs".into(), toml::Value::Table(specs));
        doc.insert("script".into(), toml::Value::Table(script));
        toml::to_string(&toml::Value::Table(doc)).unwrap()
    }

    #[test]
    fn loads_task_and_computes_oracle_ground_truth() {
        let task = load_task_str(&demo_task_toml(), "demo").unwrap();
        // shortest plan: open, pickup, put (order may interleave) = 3 steps
        assert_eq!(task.ground_truth.plan_len, 3);
        assert_eq!(task.ground_truth.makespan, 3);
        assert_eq!(task.category, Category::Compound);
    }

    #[test]
    fn malformed_task_file_is_reported() {
        assert!(matches!(
            load_task_str(TASK_TOML, "demo"),
            Err(EvalError::TaskFile { .. })
        ));
    }

    #[test]
    fn scripted_rules_drive_a_full_episode() {
        let task = load_task_str(&demo_task_toml(), "demo").unwrap();
        let backend = ScriptedBackend::new(scripted_rules_for(&task));
        let cfg = HierarchyConfig::default();
        let record = run_episode(&task, &backend, &GreedySolver, &cfg, 0).unwrap();
        assert!(record.success);
        assert_eq!(record.iterations_used, 1);
        assert_eq!(record.plan_len, 3);
        assert!((record.gcr - 1.0).abs() < 1e-12);
        assert!((record.eff - 1.0).abs() < 1e-12);
        assert!((record.ru - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fault_injection_breaks_execution() {
        let task = load_task_str(&demo_task_toml(), "demo").unwrap();
        let backend = ScriptedBackend::new(scripted_rules_for(&task));
        let cfg = HierarchyConfig::default();
        let result = orchestrate(&task.problem, &task.instruction, &backend, &GreedySolver, &cfg)
            .unwrap();
        let RunOutcome::Success { plan, order, .. } = result.outcome else {
            panic!("expected success");
        };
        let (_, joint) = task.problem.joint_model().unwrap();
        let fault = FaultSpec {
            before_action: "putobject".into(),
            atom: "(open fridge)".into(),
        };
        let exec = execute_symbolic(&joint, &plan, &order, Some(&fault));
        assert!(!exec.success);
        assert!(exec.failed_at.unwrap().contains("putobject"));
        assert_eq!(exec.goals_achieved, 0);
    }

    #[test]
    fn suite_report_is_deterministic() {
        let task = load_task_str(&demo_task_toml(), "demo").unwrap();
        let backend = ScriptedBackend::new(scripted_rules_for(&task));
        let cfg = HierarchyConfig::default();
        let tasks = [task];
        let a = run_suite(&tasks, &backend, &GreedySolver, &cfg, 2).unwrap();
        let b = run_suite(&tasks, &backend, &GreedySolver, &cfg, 2).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_table(), b.to_table());
        assert_eq!(a.overall.episodes, 2);
        assert!((a.overall.sr - 1.0).abs() < 1e-12);
        assert!(a.to_table().contains("compound"));
    }

    #[test]
    fn metrics_fold_matches_hand_numbers() {
        let mk = |success: bool, gcr: f64, eff: f64, ru: f64| EpisodeRecord {
            task: "t".into(),
            category: Category::Vague,
            seed: 0,
            success,
            iterations_used: 1,
            plan_len: 1,
            makespan: 1,
            gt_plan_len: 1,
            gt_makespan: 1,
            gcr,
            eff,
            ru,
            wall_ms: 0,
        };
        let eps = [mk(true, 1.0, 0.8, 0.9), mk(false, 0.5, 0.0, 0.0)];
        let m = compute_metrics(eps.iter());
        assert!((m.sr - 0.5).abs() < 1e-12);
        assert!((m.gcr - 0.75).abs() < 1e-12);
        // Eff/RU average over the single success only
        assert!((m.eff - 0.8).abs() < 1e-12);
        assert!((m.ru - 0.9).abs() < 1e-12);
    }

    #[test]
    fn goal_literal_parsing_handles_negation() {
        let lit = parse_goal_literal("(not (on light))").unwrap();
        assert!(!lit.positive);
        assert_eq!(lit.atom.pred, "on");
        let lit = parse_goal_literal("(in tomato fridge)").unwrap();
        assert!(lit.positive);
    }
}
