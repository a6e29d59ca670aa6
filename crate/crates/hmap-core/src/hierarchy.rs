//! Hierarchical agent tree and the iterative replanning loop.
//!
//! Agents form an `L`-layer tree (default 3): a global planner at the root,
//! intermediate decomposition agents in the middle (one per robot type), and
//! one spec-generation agent per robot at the leaves. Each iteration runs
//! top-down: decompose, generate and solve one PDDL spec per assigned
//! subtask, merge the sub-plans, and validate a canonical linear extension
//! against the reference joint model. On failure the evidence is rendered as
//! a textual loss, an escalation walk picks the agent that replans, the
//! chosen agent's stale descendants are pruned, and the prompts of every
//! agent on the walk receive a textual-gradient update (plus per-layer meta
//! prompt updates when sharing is enabled). The loop gives up after `K_max`
//! iterations.

use crate::backend::{BackendError, BackendRequest, LlmBackend, Role};
use crate::multirobot::{
    merge_subplans, MergeError, MultiRobotProblem, PartialOrderPlan, SubPlan,
};
use crate::pddl::{parse_domain, parse_problem, GroundModel, PddlError, ValidationReport};
use crate::planner::{PlannerError, SearchBudget, SolveInput, SolveOutcome, Solver};
use crate::promptopt::{
    parse_gradient, parse_json_payload, parse_layer_loss, FailureClass, PromptError, PromptState,
    TextualLoss,
};
use crate::trace::{Trace, TraceEvent};
use serde::Deserialize;
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_KMAX: u32 = 5;
pub const ROOT_AGENT: &str = "global";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Pddl(#[from] PddlError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Debug)]
pub struct HierarchyConfig {
    /// Number of layers `L >= 2`; layer 0 is the root, layer `L-1` the
    /// per-robot leaves.
    pub layers: usize,
    /// Iteration cap `K_max`.
    pub kmax: u32,
    /// When false, per-layer meta prompts are never updated (ablation).
    pub meta_sharing: bool,
    pub budget: SearchBudget,
    pub root_base_prompt: String,
    pub middle_base_prompt: String,
    pub leaf_base_prompt: String,
    pub meta_base_prompt: String,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            layers: DEFAULT_LAYERS,
            kmax: DEFAULT_KMAX,
            meta_sharing: true,
            budget: SearchBudget::default(),
            root_base_prompt: "You are the global planner for a multi-robot mission. \
                Decompose the mission into subtasks and assign each subtask to a robot \
                type or a robot."
                .into(),
            middle_base_prompt: "Decompose into subtasks as needed and assign them to robots."
                .into(),
            leaf_base_prompt: "Write a PDDL domain and problem for the assigned subtask \
                using only your robot's skills."
                .into(),
            meta_base_prompt: "Shared guidance for agents at this layer.".into(),
        }
    }
}

/// One agent: its position in the tree and its evolving prompt.
#[derive(Clone, Debug)]
pub struct AgentNode {
    pub id: String,
    pub layer: usize,
    pub parent: Option<String>,
    pub prompt: PromptState,
}

/// A subtask as declared in a decompose response.
#[derive(Clone, Debug, Deserialize)]
pub struct SubtaskSpec {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub target_type: Option<String>,
    #[serde(default)]
    pub target_robot: Option<String>,
    #[serde(default)]
    pub depends_on: Vec<String>,
    /// Id of the coarser subtask this one refines, if any; used to inherit
    /// that subtask's dependency edges.
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Deserialize)]
struct DecomposeMsg {
    subtasks: Vec<SubtaskSpec>,
}

#[derive(Deserialize)]
struct PddlMsg {
    #[allow(dead_code)]
    robot: String,
    domain: String,
    problem: String,
}

#[derive(Deserialize)]
struct DecideMsg {
    decision: String,
}

/// Fully refined subtask assigned to one robot.
#[derive(Clone, Debug)]
pub struct LeafTask {
    pub id: String,
    pub text: String,
    pub robot: String,
    /// Agent that issued the assignment (the leaf agent's parent).
    pub assigner: String,
}

#[derive(Clone, Debug)]
pub enum RunOutcome {
    Success {
        plan: PartialOrderPlan,
        order: Vec<usize>,
        makespan: usize,
        iterations_used: u32,
    },
    Failure {
        iterations_used: u32,
        last_loss: Option<TextualLoss>,
    },
}

#[derive(Debug)]
pub struct RunResult {
    pub outcome: RunOutcome,
    pub trace: Trace,
    pub agents: BTreeMap<String, AgentNode>,
    pub meta: Vec<PromptState>,
}

enum DecomposeOutcome {
    Leaves(Vec<LeafTask>, Vec<(String, String)>),
    Fault { agent: String, loss: TextualLoss },
}

enum SpecOutcome {
    Plan(SubPlan),
    Fault(TextualLoss),
}

struct Run<'a> {
    problem: &'a MultiRobotProblem,
    instruction: &'a str,
    backend: &'a dyn LlmBackend,
    solver: &'a dyn Solver,
    cfg: &'a HierarchyConfig,
    ref_model: GroundModel,
    agents: BTreeMap<String, AgentNode>,
    meta: Vec<PromptState>,
    trace: Trace,
}

/// Run the full iterative loop for one mission.
pub fn orchestrate(
    problem: &MultiRobotProblem,
    instruction: &str,
    backend: &dyn LlmBackend,
    solver: &dyn Solver,
    cfg: &HierarchyConfig,
) -> Result<RunResult, RunError> {
    if cfg.layers < 2 {
        return Err(RunError::Config("at least 2 layers are required".into()));
    }
    let (_, ref_model) = problem.joint_model()?;
    let mut run = Run {
        problem,
        instruction,
        backend,
        solver,
        cfg,
        ref_model,
        agents: BTreeMap::new(),
        meta: (0..cfg.layers)
            .map(|_| PromptState::new(&cfg.meta_base_prompt))
            .collect(),
        trace: Trace::new(),
    };
    let outcome = run.drive()?;
    Ok(RunResult {
        outcome,
        trace: run.trace,
        agents: run.agents,
        meta: run.meta,
    })
}

impl<'a> Run<'a> {
    fn drive(&mut self) -> Result<RunOutcome, RunError> {
        let mut last_loss = None;
        for k in 0..self.cfg.kmax {
            match self.iteration(k)? {
                Ok(success) => {
                    self.trace.push(TraceEvent::Iteration {
                        iteration: k,
                        outcome: "success".into(),
                    });
                    return Ok(success);
                }
                Err(loss) => {
                    self.trace.push(TraceEvent::Iteration {
                        iteration: k,
                        outcome: format!("failure: {}", loss.class.as_str()),
                    });
                    last_loss = Some(loss);
                }
            }
        }
        Ok(RunOutcome::Failure {
            iterations_used: self.cfg.kmax,
            last_loss,
        })
    }

    /// One top-down pass; `Err(loss)` is a handled iteration failure whose
    /// prompt updates have already been committed.
    fn iteration(&mut self, _k: u32) -> Result<Result<RunOutcome, TextualLoss>, RunError> {
        let (leaves, deps) = match self.decompose_all()? {
            DecomposeOutcome::Leaves(l, d) => (l, d),
            DecomposeOutcome::Fault { agent, loss } => {
                // the agent's own output is at fault: no escalation walk
                self.apply_failure(vec![agent], &loss)?;
                return Ok(Err(loss));
            }
        };

        let mut subplans = Vec::new();
        for leaf in &leaves {
            match self.generate_spec(leaf)? {
                SpecOutcome::Plan(sp) => subplans.push(sp),
                SpecOutcome::Fault(loss) => {
                    // short-circuit: the first failing spec drives this round
                    let leaf_agent = format!("robot:{}", leaf.robot);
                    let phi = self.escalate(&leaf_agent, &loss)?;
                    self.apply_failure(phi, &loss)?;
                    return Ok(Err(loss));
                }
            }
        }

        let plan = match merge_subplans(&self.ref_model, &subplans, &deps) {
            Ok(plan) => plan,
            Err(MergeError::Cycle) => {
                let loss = TextualLoss::new(
                    FailureClass::Validation,
                    ROOT_AGENT,
                    "the declared subtask dependencies are contradictory: \
                     merging the sub-plans produced a cyclic order.",
                );
                self.apply_failure(vec![ROOT_AGENT.to_string()], &loss)?;
                return Ok(Err(loss));
            }
            Err(e @ MergeError::Pddl(_)) => return Err(e.into()),
        };
        let order = plan
            .canonical_extension()
            .expect("merged plan is acyclic by construction");
        let report = plan.validate_extension(&self.ref_model, &order);
        self.trace.push(TraceEvent::Validation {
            subject: "joint-plan".into(),
            valid: report.valid,
            detail: report
                .failure
                .as_ref()
                .map(|f| f.violated.clone())
                .unwrap_or_else(|| report.unsatisfied_goals.join(", ")),
        });
        if report.valid {
            let makespan = plan.makespan().expect("validated plan is acyclic");
            return Ok(Ok(RunOutcome::Success {
                plan,
                order,
                makespan,
                iterations_used: _k + 1,
            }));
        }

        let (owner, loss) = self.attribute(&report, &plan, &order);
        let phi = self.escalate(&owner, &loss)?;
        self.apply_failure(phi, &loss)?;
        Ok(Err(loss))
    }

    /// Map a reference-validation failure to the responsible leaf agent and
    /// a rendered loss.
    fn attribute(
        &self,
        report: &ValidationReport,
        plan: &PartialOrderPlan,
        order: &[usize],
    ) -> (String, TextualLoss) {
        if let Some(f) = &report.failure {
            let pa = &plan.actions[order[f.step]];
            let source = format!("subtask {} (robot {})", pa.subtask, pa.robot);
            let loss = TextualLoss::precondition(&source, f.step, &f.action, &f.violated);
            (format!("robot:{}", pa.robot), loss)
        } else {
            let loss = TextualLoss::unsatisfied_goal(ROOT_AGENT, &report.unsatisfied_goals);
            (ROOT_AGENT.to_string(), loss)
        }
    }

    // ---- decomposition -------------------------------------------------

    fn decompose_all(&mut self) -> Result<DecomposeOutcome, RunError> {
        self.ensure_agent(ROOT_AGENT, 0, None);
        let task = self.render_mission();
        let response = self.call(Role::Decompose, ROOT_AGENT, &task)?;
        let msg: DecomposeMsg = match parse_msg(Role::Decompose, &response) {
            Ok(m) => m,
            Err(loss_detail) => {
                return Ok(DecomposeOutcome::Fault {
                    agent: ROOT_AGENT.to_string(),
                    loss: TextualLoss::malformed_response(ROOT_AGENT, "decompose", &loss_detail),
                })
            }
        };

        let mut leaves: Vec<LeafTask> = Vec::new();
        let mut deps: Vec<(String, String)> = Vec::new();
        // coarse subtask id -> refining subtask ids
        let mut expands: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut current: Vec<(String, SubtaskSpec)> = msg
            .subtasks
            .into_iter()
            .map(|st| (ROOT_AGENT.to_string(), st))
            .collect();
        let mut level = 1usize;

        loop {
            let mut groups: BTreeMap<String, (String, Vec<SubtaskSpec>)> = BTreeMap::new();
            for (assigner, st) in current {
                for before in &st.depends_on {
                    deps.push((before.clone(), st.id.clone()));
                }
                if let Some(parent) = &st.parent {
                    expands.entry(parent.clone()).or_default().push(st.id.clone());
                }
                if let Some(robot) = &st.target_robot {
                    if self.problem.team.robot_type(robot).is_none() {
                        return Ok(DecomposeOutcome::Fault {
                            agent: assigner.clone(),
                            loss: TextualLoss::malformed_response(
                                &assigner,
                                "decompose",
                                &format!("subtask {} names unknown robot {robot}", st.id),
                            ),
                        });
                    }
                    leaves.push(LeafTask {
                        id: st.id.clone(),
                        text: st.text.clone(),
                        robot: robot.clone(),
                        assigner: assigner.clone(),
                    });
                } else if let Some(ty) = st.target_type.clone() {
                    if level > self.cfg.layers - 2 {
                        return Ok(DecomposeOutcome::Fault {
                            agent: assigner.clone(),
                            loss: TextualLoss::malformed_response(
                                &assigner,
                                "decompose",
                                &format!(
                                    "subtask {} targets type {ty} below the last \
                                     decomposition layer",
                                    st.id
                                ),
                            ),
                        });
                    }
                    groups
                        .entry(ty)
                        .or_insert_with(|| (assigner.clone(), Vec::new()))
                        .1
                        .push(st);
                } else {
                    return Ok(DecomposeOutcome::Fault {
                        agent: assigner.clone(),
                        loss: TextualLoss::malformed_response(
                            &assigner,
                            "decompose",
                            &format!("subtask {} has neither a target type nor a robot", st.id),
                        ),
                    });
                }
            }
            if groups.is_empty() {
                break;
            }
            let mut next = Vec::new();
            for (ty, (assigner, items)) in groups {
                let agent_id = format!("type:{ty}");
                self.ensure_agent(&agent_id, level, Some(&assigner));
                let task = self.render_batch(&ty, &items);
                let response = self.call(Role::Decompose, &agent_id, &task)?;
                let msg: DecomposeMsg = match parse_msg(Role::Decompose, &response) {
                    Ok(m) => m,
                    Err(detail) => {
                        return Ok(DecomposeOutcome::Fault {
                            loss: TextualLoss::malformed_response(
                                &agent_id,
                                "decompose",
                                &detail,
                            ),
                            agent: agent_id,
                        })
                    }
                };
                next.extend(msg.subtasks.into_iter().map(|st| (agent_id.clone(), st)));
            }
            current = next;
            level += 1;
        }

        // expand dependency edges declared on coarse ids onto the leaves
        let leaf_ids: BTreeSet<&str> = leaves.iter().map(|l| l.id.as_str()).collect();
        let mut final_deps = Vec::new();
        for (a, b) in &deps {
            for x in resolve(a, &expands, &leaf_ids) {
                for y in resolve(b, &expands, &leaf_ids) {
                    if x != y && !final_deps.contains(&(x.clone(), y.clone())) {
                        final_deps.push((x.clone(), y.clone()));
                    }
                }
            }
        }
        Ok(DecomposeOutcome::Leaves(leaves, final_deps))
    }

    // ---- spec generation -----------------------------------------------

    fn generate_spec(&mut self, leaf: &LeafTask) -> Result<SpecOutcome, RunError> {
        let agent_id = format!("robot:{}", leaf.robot);
        let layer = self.cfg.layers - 1;
        self.ensure_agent(&agent_id, layer, Some(&leaf.assigner));
        let source = format!("subtask {} (robot {})", leaf.id, leaf.robot);
        let task = self.render_leaf(leaf);
        let response = self.call(Role::GeneratePddl, &agent_id, &task)?;
        let msg: PddlMsg = match parse_msg(Role::GeneratePddl, &response) {
            Ok(m) => m,
            Err(detail) => {
                return Ok(SpecOutcome::Fault(TextualLoss::malformed_response(
                    &source,
                    "generate-pddl",
                    &detail,
                )))
            }
        };

        let spec = (|| -> Result<(crate::pddl::Domain, crate::pddl::Problem), PddlError> {
            let domain = parse_domain(&msg.domain)?;
            let problem = parse_problem(&msg.problem)?;
            problem.validate(&domain)?;
            Ok((domain, problem))
        })();
        let (domain, problem) = match spec {
            Ok(pair) => pair,
            Err(e) => {
                self.trace.push(TraceEvent::Validation {
                    subject: source.clone(),
                    valid: false,
                    detail: e.to_string(),
                });
                return Ok(SpecOutcome::Fault(TextualLoss::parse(
                    &source,
                    &e.to_string(),
                )));
            }
        };
        let model = match GroundModel::build(&domain, &problem) {
            Ok(m) => m,
            Err(e) => {
                return Ok(SpecOutcome::Fault(TextualLoss::parse(
                    &source,
                    &e.to_string(),
                )))
            }
        };
        let input = SolveInput {
            domain: &domain,
            problem: &problem,
            model: &model,
        };
        match self.solver.solve(&input, &self.cfg.budget) {
            Ok(SolveOutcome::Plan(ids)) => {
                self.trace.push(TraceEvent::Validation {
                    subject: source,
                    valid: true,
                    detail: format!("{} steps", ids.len()),
                });
                let actions = ids
                    .iter()
                    .map(|&id| {
                        let a = model.action(id);
                        (a.name.clone(), a.args.clone())
                    })
                    .collect();
                Ok(SpecOutcome::Plan(SubPlan {
                    subtask: leaf.id.clone(),
                    robot: leaf.robot.clone(),
                    actions,
                }))
            }
            Ok(SolveOutcome::Unsolvable) => {
                Ok(SpecOutcome::Fault(TextualLoss::unsolvable(&source)))
            }
            Ok(SolveOutcome::BudgetExhausted {
                nodes_expanded,
                elapsed_ms,
            }) => Ok(SpecOutcome::Fault(TextualLoss::budget(
                &source,
                nodes_expanded as u64,
                elapsed_ms as u64,
            ))),
            Err(e) => Ok(SpecOutcome::Fault(TextualLoss::new(
                FailureClass::Validation,
                &source,
                &format!("planner error: {e}."),
            ))),
        }
    }

    // ---- escalation and updates ----------------------------------------

    /// Walk from the failing leaf upward; each agent decides `self` (replan
    /// here) or `parent`. The root always decides `self`; an unrecognized
    /// decision is treated as `parent`. Returns the walk path Φ, deciding
    /// agent last.
    fn escalate(&mut self, start: &str, loss: &TextualLoss) -> Result<Vec<String>, RunError> {
        let mut phi = Vec::new();
        let mut cur = start.to_string();
        loop {
            phi.push(cur.clone());
            let Some(parent) = self.agents[&cur].parent.clone() else {
                self.trace.push(TraceEvent::Escalation {
                    from: cur.clone(),
                    to: cur.clone(),
                    decision: "self (root)".into(),
                });
                break;
            };
            let response = self.call(Role::Decide, &cur, &loss.render())?;
            let raw = match parse_msg::<DecideMsg>(Role::Decide, &response) {
                Ok(m) => m.decision.to_ascii_lowercase(),
                Err(_) => "parent (malformed response)".to_string(),
            };
            let stays = raw == "self";
            if !stays && raw != "parent" && !raw.starts_with("parent ") {
                // unrecognized token: escalate, but keep the raw text in the
                // trace for diagnosis
                self.trace.push(TraceEvent::Escalation {
                    from: cur.clone(),
                    to: parent.clone(),
                    decision: format!("parent (unrecognized `{raw}`)"),
                });
                cur = parent;
                continue;
            }
            self.trace.push(TraceEvent::Escalation {
                from: cur.clone(),
                to: if stays { cur.clone() } else { parent.clone() },
                decision: raw,
            });
            if stays {
                break;
            }
            cur = parent;
        }
        Ok(phi)
    }

    /// Prune the deciding agent's stale descendants, then atomically apply
    /// textual-gradient updates to every agent on the walk and to the meta
    /// prompts of their layers.
    fn apply_failure(&mut self, phi: Vec<String>, loss: &TextualLoss) -> Result<(), RunError> {
        let deciding = phi.last().expect("walk is non-empty").clone();
        let keep: BTreeSet<&String> = phi.iter().collect();
        let stale: Vec<String> = self
            .agents
            .keys()
            .filter(|id| !keep.contains(id) && self.is_descendant(id, &deciding))
            .cloned()
            .collect();
        for id in stale {
            self.agents.remove(&id);
        }

        // work on clones; commit only if every call and parse succeeds
        let mut agents = self.agents.clone();
        let mut meta = self.meta.clone();
        let mut events = Vec::new();

        for agent_id in &phi {
            let meta_text = meta_text_for(&meta, agents[agent_id].layer, self.cfg);
            let node = agents.get_mut(agent_id).expect("walk agents exist");
            let req = BackendRequest::new(Role::Grad, &node.prompt.text(), &meta_text, &loss.render());
            let digest = req.digest();
            let response = self.backend.invoke(&req)?;
            events.push(TraceEvent::BackendCall {
                role: Role::Grad.as_str().into(),
                agent: agent_id.clone(),
                digest,
                response_bytes: response.len(),
            });
            let grad = parse_gradient(&response)?;
            node.prompt.tgd_step(&grad, loss.class.as_str());
            events.push(TraceEvent::PromptVersion {
                agent: agent_id.clone(),
                version: node.prompt.version,
                note: loss.class.as_str().into(),
            });
        }

        if self.cfg.meta_sharing {
            let layers: BTreeSet<usize> = phi
                .iter()
                .map(|id| agents[id].layer)
                .filter(|&l| l >= 1)
                .collect();
            for l in layers {
                let agg_req = BackendRequest::new(
                    Role::Aggregate,
                    &meta[l].text(),
                    "",
                    &crate::promptopt::aggregate_losses(std::slice::from_ref(loss)),
                );
                let digest = agg_req.digest();
                let response = self.backend.invoke(&agg_req)?;
                events.push(TraceEvent::BackendCall {
                    role: Role::Aggregate.as_str().into(),
                    agent: format!("meta:{l}"),
                    digest,
                    response_bytes: response.len(),
                });
                let layer_loss = parse_layer_loss(&response)?;
                let meta_loss =
                    TextualLoss::new(loss.class, &format!("layer-{l}"), &layer_loss.objective);
                let grad_req =
                    BackendRequest::new(Role::Grad, &meta[l].text(), "", &meta_loss.render());
                let digest = grad_req.digest();
                let response = self.backend.invoke(&grad_req)?;
                events.push(TraceEvent::BackendCall {
                    role: Role::Grad.as_str().into(),
                    agent: format!("meta:{l}"),
                    digest,
                    response_bytes: response.len(),
                });
                let grad = parse_gradient(&response)?;
                meta[l].tgd_step(&grad, "meta");
                events.push(TraceEvent::PromptVersion {
                    agent: format!("meta:{l}"),
                    version: meta[l].version,
                    note: "meta".into(),
                });
            }
        }

        self.agents = agents;
        self.meta = meta;
        for e in events {
            self.trace.push(e);
        }
        Ok(())
    }

    fn is_descendant(&self, id: &str, ancestor: &str) -> bool {
        let mut cur = id;
        while let Some(node) = self.agents.get(cur) {
            match &node.parent {
                Some(p) if p == ancestor => return true,
                Some(p) => cur = p,
                None => return false,
            }
        }
        false
    }

    // ---- plumbing -------------------------------------------------------

    fn ensure_agent(&mut self, id: &str, layer: usize, parent: Option<&str>) {
        if self.agents.contains_key(id) {
            return;
        }
        let base = if layer == 0 {
            &self.cfg.root_base_prompt
        } else if layer == self.cfg.layers - 1 {
            &self.cfg.leaf_base_prompt
        } else {
            &self.cfg.middle_base_prompt
        };
        self.agents.insert(
            id.to_string(),
            AgentNode {
                id: id.to_string(),
                layer,
                parent: parent.map(str::to_string),
                prompt: PromptState::new(base),
            },
        );
    }

    fn call(&mut self, role: Role, agent_id: &str, task: &str) -> Result<String, RunError> {
        let node = &self.agents[agent_id];
        let meta = meta_text_for(&self.meta, node.layer, self.cfg);
        let req = BackendRequest::new(role, &node.prompt.text(), &meta, task);
        let digest = req.digest();
        let response = self.backend.invoke(&req)?;
        self.trace.push(TraceEvent::BackendCall {
            role: role.as_str().into(),
            agent: agent_id.to_string(),
            digest,
            response_bytes: response.len(),
        });
        Ok(response)
    }

    fn render_mission(&self) -> String {
        let mut s = format!("Mission: {}\nRobots:\n", self.instruction);
        for r in &self.problem.team.robots {
            let skills: Vec<String> = self.problem.team.cap(&r.robot_type).into_iter().collect();
            s.push_str(&format!("- {} ({}): {}\n", r.id, r.robot_type, skills.join(", ")));
        }
        s.push_str("Goal: ");
        s.push_str(&self.problem.goal_atoms().join(", "));
        s
    }

    fn render_batch(&self, ty: &str, items: &[SubtaskSpec]) -> String {
        let robots: Vec<&str> = self
            .problem
            .team
            .robots
            .iter()
            .filter(|r| r.robot_type == ty)
            .map(|r| r.id.as_str())
            .collect();
        let mut s = format!("Robot type: {ty}\nRobots: {}\nAssigned subtasks:\n", robots.join(", "));
        for st in items {
            s.push_str(&format!("- {}: {}", st.id, st.text));
            if !st.depends_on.is_empty() {
                s.push_str(&format!(" [after: {}]", st.depends_on.join(", ")));
            }
            s.push('\n');
        }
        s
    }

    fn render_leaf(&self, leaf: &LeafTask) -> String {
        let ty = self.problem.team.robot_type(&leaf.robot).unwrap_or("unknown");
        let mut s = format!(
            "Subtask {}: {}\nRobot: {} ({})\nObjects:\n",
            leaf.id, leaf.text, leaf.robot, ty
        );
        for (name, obj_ty) in &self.problem.objects {
            s.push_str(&format!("- {name} - {obj_ty}\n"));
        }
        s.push_str("Init: ");
        let init: Vec<String> = self.problem.init.iter().map(|a| a.to_string()).collect();
        s.push_str(&init.join(", "));
        s
    }
}

/// Meta prompt text visible to an agent at `layer` (root has none).
fn meta_text_for(meta: &[PromptState], layer: usize, cfg: &HierarchyConfig) -> String {
    let _ = cfg;
    if layer == 0 {
        String::new()
    } else {
        meta[layer].text()
    }
}

fn parse_msg<T: serde::de::DeserializeOwned>(role: Role, response: &str) -> Result<T, String> {
    let value = parse_json_payload(role, response).map_err(|e| e.to_string())?;
    serde_json::from_value(value).map_err(|e| e.to_string())
}

/// Resolve a subtask id to the leaf ids that refine it.
fn resolve(id: &str, expands: &BTreeMap<String, Vec<String>>, leaves: &BTreeSet<&str>) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![id.to_string()];
    let mut guard = 0usize;
    while let Some(cur) = stack.pop() {
        guard += 1;
        if guard > 10_000 {
            break; // defensive: malformed parent chains
        }
        if let Some(children) = expands.get(&cur) {
            stack.extend(children.iter().cloned());
        } else if leaves.contains(cur.as_str()) {
            out.push(cur);
        }
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ResponseRule, ScriptedBackend};
    use crate::multirobot::{ground_literal, RobotInfo, RobotTeam};
    use crate::planner::GreedySolver;

    const ARM_DOMAIN: &str = "(define (domain arm)
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

    /// Same actions but `putobject` omits the `open` precondition: a spec
    /// that plans fine internally and fails under the reference semantics.
    const ARM_DOMAIN_NO_OPEN_PRE: &str = "(define (domain arm)
        (:requirements :strips :typing :negative-preconditions)
        (:types robot object location)
        (:predicates (at ?x ?l) (holding ?r ?o) (open ?l) (in ?o ?l))
        (:action pickupobject :parameters (?r - robot ?o - object ?l - location)
         :precondition (and (at ?o ?l) (at ?r ?l))
         :effect (and (holding ?r ?o) (not (at ?o ?l))))
        (:action putobject :parameters (?r - robot ?o - object ?l - location)
         :precondition (and (holding ?r ?o) (at ?r ?l))
         :effect (and (in ?o ?l) (not (holding ?r ?o)))))";

    const AGENT_PROBLEM: &str = "(define (problem store) (:domain arm)
        (:objects a - robot tomato - object fridge - location)
        (:init (at a fridge) (at tomato fridge))
        (:goal (in tomato fridge)))";

    fn mission() -> MultiRobotProblem {
        let mut type_domains = BTreeMap::new();
        type_domains.insert("arm".to_string(), parse_domain(ARM_DOMAIN).unwrap());
        MultiRobotProblem {
            team: RobotTeam {
                robots: vec![RobotInfo {
                    id: "a".into(),
                    robot_type: "arm".into(),
                }],
                type_domains,
            },
            objects: vec![
                ("a".into(), "robot".into()),
                ("tomato".into(), "object".into()),
                ("fridge".into(), "location".into()),
            ],
            init: vec![
                crate::pddl::GroundAtom {
                    pred: "at".into(),
                    args: vec!["a".into(), "fridge".into()],
                },
                crate::pddl::GroundAtom {
                    pred: "at".into(),
                    args: vec!["tomato".into(), "fridge".into()],
                },
            ],
            goal: vec![ground_literal(true, "in", &["tomato", "fridge"])],
        }
    }

    fn decompose_direct() -> String {
        serde_json::json!({
            "subtasks": [
                {"id": "s1", "text": "store the tomato in the fridge", "target_robot": "a"}
            ]
        })
        .to_string()
    }

    fn pddl_response(domain: &str) -> String {
        serde_json::json!({"robot": "a", "domain": domain, "problem": AGENT_PROBLEM}).to_string()
    }

    fn two_layer_cfg(kmax: u32) -> HierarchyConfig {
        HierarchyConfig {
            layers: 2,
            kmax,
            ..HierarchyConfig::default()
        }
    }

    #[test]
    fn success_at_first_iteration() {
        let backend = ScriptedBackend::new(vec![
            ResponseRule::new(Role::Decompose, &decompose_direct()),
            ResponseRule::new(Role::GeneratePddl, &pddl_response(ARM_DOMAIN)),
        ]);
        let result = orchestrate(
            &mission(),
            "store the tomato",
            &backend,
            &GreedySolver,
            &two_layer_cfg(5),
        )
        .unwrap();
        match result.outcome {
            RunOutcome::Success {
                iterations_used,
                makespan,
                ref plan,
                ..
            } => {
                assert_eq!(iterations_used, 1);
                assert_eq!(plan.len(), 3);
                assert_eq!(makespan, 3); // single robot: fully sequential
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    const HINT: &str = "open the receptacle before putting anything inside";

    fn escalation_rules() -> Vec<ResponseRule> {
        vec![
            ResponseRule::new(Role::Decompose, &decompose_direct()),
            // after the hint lands, the agent emits the faithful domain
            ResponseRule::new(Role::GeneratePddl, &pddl_response(ARM_DOMAIN))
                .prompt_contains(HINT),
            ResponseRule::new(Role::GeneratePddl, &pddl_response(ARM_DOMAIN_NO_OPEN_PRE)),
            ResponseRule::new(Role::Decide, r#"{"decision":"self"}"#),
            // meta-layer gradient (task names the layer) before the agent one
            ResponseRule::new(Role::Grad, r#"{"edits":[]}"#).task_contains("layer-"),
            ResponseRule::new(
                Role::Grad,
                &serde_json::json!({
                    "edits": [{"kind": "append-hint", "payload": HINT, "rank": 0}]
                })
                .to_string(),
            ),
            ResponseRule::new(
                Role::Aggregate,
                r#"{"objective":"ensure receptacles are opened before use","edits":[]}"#,
            ),
        ]
    }

    #[test]
    fn reference_failure_drives_hint_and_recovery() {
        let backend = ScriptedBackend::new(escalation_rules());
        let result = orchestrate(
            &mission(),
            "store the tomato",
            &backend,
            &GreedySolver,
            &two_layer_cfg(5),
        )
        .unwrap();
        match result.outcome {
            RunOutcome::Success {
                iterations_used, ..
            } => assert_eq!(iterations_used, 2),
            other => panic!("expected success, got {other:?}"),
        }
        let agent = &result.agents["robot:a"];
        assert!(agent.prompt.text().contains(HINT));
        assert!(agent.prompt.version >= 1);
        // the reference-validation failure named the violated literal
        let jsonl = result.trace.to_jsonl();
        assert!(jsonl.contains("(open fridge)"));
        // meta prompt for the leaf layer was updated
        assert!(result.meta[1].version >= 1);
    }

    #[test]
    fn meta_sharing_off_skips_meta_updates() {
        let backend = ScriptedBackend::new(escalation_rules());
        let cfg = HierarchyConfig {
            meta_sharing: false,
            ..two_layer_cfg(5)
        };
        let result = orchestrate(&mission(), "store the tomato", &backend, &GreedySolver, &cfg)
            .unwrap();
        assert!(matches!(result.outcome, RunOutcome::Success { .. }));
        assert_eq!(result.meta[1].version, 0);
    }

    #[test]
    fn kmax_exhaustion_is_failure() {
        // the gradient never fixes anything: empty edit lists forever
        let backend = ScriptedBackend::new(vec![
            ResponseRule::new(Role::Decompose, &decompose_direct()),
            ResponseRule::new(Role::GeneratePddl, &pddl_response(ARM_DOMAIN_NO_OPEN_PRE)),
            ResponseRule::new(Role::Decide, r#"{"decision":"self"}"#),
            ResponseRule::new(Role::Grad, r#"{"edits":[]}"#),
            ResponseRule::new(Role::Aggregate, r#"{"objective":"none","edits":[]}"#),
        ]);
        let result = orchestrate(
            &mission(),
            "store the tomato",
            &backend,
            &GreedySolver,
            &two_layer_cfg(2),
        )
        .unwrap();
        match result.outcome {
            RunOutcome::Failure {
                iterations_used,
                last_loss,
            } => {
                assert_eq!(iterations_used, 2);
                assert_eq!(last_loss.unwrap().class, FailureClass::Precondition);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn unrecognized_decision_escalates_to_root() {
        let mut rules = escalation_rules();
        rules.retain(|r| r.role != Some(Role::Decide));
        rules.insert(3, ResponseRule::new(Role::Decide, r#"{"decision":"maybe"}"#));
        let backend = ScriptedBackend::new(rules);
        let result = orchestrate(
            &mission(),
            "store the tomato",
            &backend,
            &GreedySolver,
            &two_layer_cfg(5),
        )
        .unwrap();
        assert!(matches!(result.outcome, RunOutcome::Success { .. }));
        let jsonl = result.trace.to_jsonl();
        assert!(jsonl.contains("unrecognized"));
        assert!(jsonl.contains("self (root)"));
        // both the leaf and the root received gradient updates
        assert!(result.agents["robot:a"].prompt.version >= 1);
        assert!(result.agents[ROOT_AGENT].prompt.version >= 1);
    }

    #[test]
    fn three_layers_route_through_type_agent() {
        let global = serde_json::json!({
            "subtasks": [
                {"id": "g1", "text": "store the tomato", "target_type": "arm"}
            ]
        })
        .to_string();
        let typed = serde_json::json!({
            "subtasks": [
                {"id": "s1", "text": "store the tomato in the fridge",
                 "target_robot": "a", "parent": "g1"}
            ]
        })
        .to_string();
        let backend = ScriptedBackend::new(vec![
            ResponseRule::new(Role::Decompose, &typed).prompt_contains("Decompose into subtasks"),
            ResponseRule::new(Role::Decompose, &global),
            ResponseRule::new(Role::GeneratePddl, &pddl_response(ARM_DOMAIN)),
        ]);
        let cfg = HierarchyConfig {
            layers: 3,
            ..HierarchyConfig::default()
        };
        let result = orchestrate(&mission(), "store the tomato", &backend, &GreedySolver, &cfg)
            .unwrap();
        assert!(matches!(
            result.outcome,
            RunOutcome::Success {
                iterations_used: 1,
                ..
            }
        ));
        assert!(result.agents.contains_key("type:arm"));
        assert_eq!(result.agents["robot:a"].parent.as_deref(), Some("type:arm"));
    }
}
