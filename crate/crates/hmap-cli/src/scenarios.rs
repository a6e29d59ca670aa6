//! Bundled deterministic scenarios.
//!
//! Each scenario is a scripted-responder rule set plus a hierarchy
//! configuration that reproduces one documented replanning trajectory.
//! The rule sets are used twice: `gen-cassettes` records them into the
//! shipped cassettes, and the replay paths (CLI and tests) verify the
//! trajectories byte-for-byte against those cassettes.

use hmap_core::backend::{ResponseRule, Role};
use hmap_core::hierarchy::{HierarchyConfig, RunOutcome, RunResult};
use serde_json::json;

// Hints and meta-prompt rules accumulated during the fridge case study.
pub const HINT_OPEN: &str =
    "before putting the tomato into the fridge, it is necessary to open the fridge.";
pub const META_OPEN: &str =
    "for any subtask that places into a receptacle with open/close affordance, \
     insert Open before any Put.";
pub const HINT_EGRESS: &str =
    "after opening the fridge, move to a non-blocking waypoint to clear the doorway.";
pub const META_EGRESS: &str =
    "append an egress action to a non-blocking waypoint to clear the doorway.";

/// Base prompt of the middle (robot-type) agents in the case study.
pub const CASE_STUDY_MIDDLE_BASE: &str =
    "Decompose into subtasks as needed and assign them to robots. Hint: \"\"";

// Hints the per-robot agents learn in the sharing comparison.
pub const HINT_FRIDGE: &str = "open the fridge before putting items inside.";
pub const HINT_CABINET: &str = "open the cabinet before putting items inside.";

// Layer-level objectives emitted by the aggregate calls.
const OBJ_OPEN: &str = "a receptacle must be opened before anything is placed inside";
const OBJ_EGRESS: &str = "the robot that opens a receptacle blocks the doorway and must move away";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    CaseStudy,
    KmaxFail,
    SharingOn,
    SharingOff,
}

impl Scenario {
    pub fn all() -> [Scenario; 4] {
        [
            Scenario::CaseStudy,
            Scenario::KmaxFail,
            Scenario::SharingOn,
            Scenario::SharingOff,
        ]
    }

    pub fn from_name(name: &str) -> Option<Scenario> {
        match name {
            "case-study" => Some(Scenario::CaseStudy),
            "kmax-fail" => Some(Scenario::KmaxFail),
            "sharing-on" => Some(Scenario::SharingOn),
            "sharing-off" => Some(Scenario::SharingOff),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CaseStudy => "case-study",
            Scenario::KmaxFail => "kmax-fail",
            Scenario::SharingOn => "sharing-on",
            Scenario::SharingOff => "sharing-off",
        }
    }

    /// Environment file under `assets/envs/`.
    pub fn env_file(&self) -> &'static str {
        match self {
            Scenario::CaseStudy | Scenario::KmaxFail => "case_study.toml",
            Scenario::SharingOn | Scenario::SharingOff => "sharing.toml",
        }
    }

    /// Cassette file under `assets/cassettes/`.
    pub fn cassette_file(&self) -> &'static str {
        match self {
            Scenario::CaseStudy => "case_study.jsonl",
            Scenario::KmaxFail => "kmax_fail.jsonl",
            Scenario::SharingOn => "sharing_on.jsonl",
            Scenario::SharingOff => "sharing_off.jsonl",
        }
    }

    pub fn config(&self) -> HierarchyConfig {
        match self {
            Scenario::CaseStudy | Scenario::KmaxFail => HierarchyConfig {
                middle_base_prompt: CASE_STUDY_MIDDLE_BASE.to_string(),
                ..HierarchyConfig::default()
            },
            Scenario::SharingOn => HierarchyConfig::default(),
            Scenario::SharingOff => HierarchyConfig {
                meta_sharing: false,
                ..HierarchyConfig::default()
            },
        }
    }

    pub fn rules(&self) -> Vec<ResponseRule> {
        match self {
            Scenario::CaseStudy => case_study_rules(),
            Scenario::KmaxFail => kmax_fail_rules(),
            Scenario::SharingOn | Scenario::SharingOff => sharing_rules(),
        }
    }

    /// `(success, iterations_used)` the scenario must reproduce.
    pub fn expected(&self) -> (bool, u32) {
        match self {
            Scenario::CaseStudy => (true, 3),
            Scenario::KmaxFail => (false, 5),
            Scenario::SharingOn => (true, 2),
            Scenario::SharingOff => (true, 3),
        }
    }

    pub fn verify(&self, result: &RunResult) -> Result<(), String> {
        let (want_success, want_iters) = self.expected();
        let (got_success, got_iters) = match &result.outcome {
            RunOutcome::Success {
                iterations_used, ..
            } => (true, *iterations_used),
            RunOutcome::Failure {
                iterations_used, ..
            } => (false, *iterations_used),
        };
        if (got_success, got_iters) != (want_success, want_iters) {
            return Err(format!(
                "scenario {}: expected success={want_success} after {want_iters} iterations, \
                 got success={got_success} after {got_iters}",
                self.name()
            ));
        }
        Ok(())
    }
}

fn subtasks(v: serde_json::Value) -> String {
    json!({ "subtasks": v }).to_string()
}

fn pddl(robot: &str, domain: &str, problem: &str) -> String {
    json!({ "robot": robot, "domain": domain, "problem": problem }).to_string()
}

fn decision(d: &str) -> String {
    json!({ "decision": d }).to_string()
}

fn grad_append(payload: &str) -> String {
    json!({ "edits": [{ "kind": "append-hint", "payload": payload, "rank": 0 }] }).to_string()
}

fn grad_empty() -> String {
    json!({ "edits": [] }).to_string()
}

fn objective(text: &str) -> String {
    json!({ "objective": text, "edits": [] }).to_string()
}

// ---- case-study world ------------------------------------------------------

/// Faithful manipulator domain: opening a receptacle blocks its doorway
/// until the opener moves away.
const MANIP_BLOCKING: &str = "(define (domain manipulator)
  (:requirements :strips :typing :negative-preconditions)
  (:types robot object location)
  (:predicates (at ?x ?l) (holding ?r ?o) (open ?l) (blocked ?l) (in ?o ?l))
  (:action pickupobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (at ?o ?l) (at ?r ?l))
   :effect (and (holding ?r ?o) (not (at ?o ?l))))
  (:action moveto
   :parameters (?r - robot ?from - location ?to - location)
   :precondition (at ?r ?from)
   :effect (and (at ?r ?to) (not (at ?r ?from)) (not (blocked ?from))))
  (:action openreceptacle
   :parameters (?r - robot ?l - location)
   :precondition (and (at ?r ?l) (not (open ?l)))
   :effect (and (open ?l) (blocked ?l)))
  (:action putobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (holding ?r ?o) (at ?r ?l) (open ?l) (not (blocked ?l)))
   :effect (and (in ?o ?l) (not (holding ?r ?o)))))";

/// What the put agent actually writes: `putobject` omits the open/blocked
/// preconditions, so its plan solves internally but fails under the
/// reference semantics.
const MANIP_NAIVE: &str = "(define (domain manipulator)
  (:requirements :strips :typing :negative-preconditions)
  (:types robot object location)
  (:predicates (at ?x ?l) (holding ?r ?o) (in ?o ?l))
  (:action pickupobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (at ?o ?l) (at ?r ?l))
   :effect (and (holding ?r ?o) (not (at ?o ?l))))
  (:action moveto
   :parameters (?r - robot ?from - location ?to - location)
   :precondition (at ?r ?from)
   :effect (and (at ?r ?to) (not (at ?r ?from))))
  (:action putobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (holding ?r ?o) (at ?r ?l))
   :effect (and (in ?o ?l) (not (holding ?r ?o)))))";

const SWITCHBOT_BLOCKING: &str = "(define (domain switchbot)
  (:requirements :strips :typing :negative-preconditions)
  (:types robot object location)
  (:predicates (at ?x ?l) (blocked ?l) (on ?o))
  (:action moveto
   :parameters (?r - robot ?from - location ?to - location)
   :precondition (at ?r ?from)
   :effect (and (at ?r ?to) (not (at ?r ?from)) (not (blocked ?from))))
  (:action turnoff
   :parameters (?r - robot ?s - location ?o - object)
   :precondition (and (at ?r ?s) (at ?o ?s) (on ?o))
   :effect (not (on ?o))))";

const OPEN_FRIDGE_PROBLEM: &str = "(define (problem open-fridge) (:domain manipulator)
  (:objects r1 - robot counter fridge - location)
  (:init (at r1 counter))
  (:goal (open fridge)))";

const EGRESS_PROBLEM: &str = "(define (problem clear-doorway) (:domain manipulator)
  (:objects r1 - robot fridge waypoint - location)
  (:init (at r1 fridge))
  (:goal (at r1 waypoint)))";

const PUT_TOMATO_PROBLEM: &str = "(define (problem store-tomato) (:domain manipulator)
  (:objects r0 - robot tomato - object counter fridge - location)
  (:init (at r0 counter) (at tomato counter))
  (:goal (in tomato fridge)))";

const LIGHT_OFF_PROBLEM: &str = "(define (problem light-off) (:domain switchbot)
  (:objects r2 - robot light - object counter lightswitch - location)
  (:init (at r2 counter) (at light lightswitch) (on light))
  (:goal (not (on light))))";

fn case_study_decompose_rules() -> Vec<ResponseRule> {
    let manip_final = subtasks(json!([
        { "id": "s-open", "text": "open the fridge",
          "target_robot": "r1", "parent": "manip-portion" },
        { "id": "s-egress", "text": "move to a non-blocking waypoint to clear the doorway",
          "target_robot": "r1", "depends_on": ["s-open"], "parent": "manip-portion" },
        { "id": "s-put", "text": "put the tomato into the fridge",
          "target_robot": "r0", "depends_on": ["s-open", "s-egress"],
          "parent": "manip-portion" },
    ]));
    let manip_with_open = subtasks(json!([
        { "id": "s-open", "text": "open the fridge",
          "target_robot": "r1", "parent": "manip-portion" },
        { "id": "s-put", "text": "put the tomato into the fridge",
          "target_robot": "r0", "depends_on": ["s-open"], "parent": "manip-portion" },
    ]));
    let manip_naive = subtasks(json!([
        { "id": "s-put", "text": "put the tomato into the fridge",
          "target_robot": "r0", "parent": "manip-portion" },
    ]));
    let switch = subtasks(json!([
        { "id": "s-light", "text": "turn off the room light",
          "target_robot": "r2", "parent": "switch-portion" },
    ]));
    let global = subtasks(json!([
        { "id": "manip-portion", "text": "put the tomato in the fridge",
          "target_type": "manipulator" },
        { "id": "switch-portion", "text": "turn off the room light",
          "target_type": "switchbot" },
    ]));
    vec![
        // most-refined prompt first: hint accumulation stages the responses
        ResponseRule::new(Role::Decompose, &manip_final)
            .task_contains("Robot type: manipulator")
            .prompt_contains(HINT_EGRESS),
        ResponseRule::new(Role::Decompose, &manip_with_open)
            .task_contains("Robot type: manipulator")
            .prompt_contains(HINT_OPEN),
        ResponseRule::new(Role::Decompose, &manip_naive)
            .task_contains("Robot type: manipulator"),
        ResponseRule::new(Role::Decompose, &switch).task_contains("Robot type: switchbot"),
        ResponseRule::new(Role::Decompose, &global).task_contains("Mission: "),
    ]
}

fn case_study_pddl_rules() -> Vec<ResponseRule> {
    vec![
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r1", MANIP_BLOCKING, OPEN_FRIDGE_PROBLEM),
        )
        .task_contains("Subtask s-open:"),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r1", MANIP_BLOCKING, EGRESS_PROBLEM),
        )
        .task_contains("Subtask s-egress:"),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r0", MANIP_NAIVE, PUT_TOMATO_PROBLEM),
        )
        .task_contains("Subtask s-put:"),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r2", SWITCHBOT_BLOCKING, LIGHT_OFF_PROBLEM),
        )
        .task_contains("Subtask s-light:"),
    ]
}

fn case_study_rules() -> Vec<ResponseRule> {
    let mut rules = case_study_decompose_rules();
    rules.extend(case_study_pddl_rules());
    rules.extend([
        // escalation: leaves defer to their type agent, which replans itself
        ResponseRule::new(Role::Decide, &decision("parent"))
            .prompt_contains("Write a PDDL domain"),
        ResponseRule::new(Role::Decide, &decision("self"))
            .prompt_contains("Decompose into subtasks"),
        // layer-level consolidation of the two observed failure modes
        ResponseRule::new(Role::Aggregate, &objective(OBJ_OPEN))
            .task_contains("(open fridge)"),
        ResponseRule::new(Role::Aggregate, &objective(OBJ_EGRESS))
            .task_contains("(not (blocked fridge))"),
        // meta gradients, keyed on the consolidated objective
        ResponseRule::new(Role::Grad, &grad_empty()).task_contains("layer-2"),
        ResponseRule::new(Role::Grad, &grad_append(META_EGRESS))
            .task_contains("layer-1")
            .task_contains(OBJ_EGRESS),
        ResponseRule::new(Role::Grad, &grad_append(META_OPEN))
            .task_contains("layer-1")
            .task_contains(OBJ_OPEN),
        // agent gradients: the leaf learns nothing, the type agent gets hints
        ResponseRule::new(Role::Grad, &grad_empty()).prompt_contains("Write a PDDL domain"),
        ResponseRule::new(Role::Grad, &grad_append(HINT_EGRESS))
            .prompt_contains("Decompose into subtasks")
            .task_contains("(not (blocked fridge))"),
        ResponseRule::new(Role::Grad, &grad_append(HINT_OPEN))
            .prompt_contains("Decompose into subtasks")
            .task_contains("(open fridge)"),
    ]);
    rules
}

/// Same world as the case study, but every gradient is empty: each iteration
/// reproduces the identical failure until `K_max` is exhausted.
fn kmax_fail_rules() -> Vec<ResponseRule> {
    let manip_naive = subtasks(json!([
        { "id": "s-put", "text": "put the tomato into the fridge",
          "target_robot": "r0", "parent": "manip-portion" },
    ]));
    let switch = subtasks(json!([
        { "id": "s-light", "text": "turn off the room light",
          "target_robot": "r2", "parent": "switch-portion" },
    ]));
    let global = subtasks(json!([
        { "id": "manip-portion", "text": "put the tomato in the fridge",
          "target_type": "manipulator" },
        { "id": "switch-portion", "text": "turn off the room light",
          "target_type": "switchbot" },
    ]));
    vec![
        ResponseRule::new(Role::Decompose, &manip_naive)
            .task_contains("Robot type: manipulator"),
        ResponseRule::new(Role::Decompose, &switch).task_contains("Robot type: switchbot"),
        ResponseRule::new(Role::Decompose, &global).task_contains("Mission: "),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r0", MANIP_NAIVE, PUT_TOMATO_PROBLEM),
        )
        .task_contains("Subtask s-put:"),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r2", SWITCHBOT_BLOCKING, LIGHT_OFF_PROBLEM),
        )
        .task_contains("Subtask s-light:"),
        ResponseRule::new(Role::Decide, &decision("parent"))
            .prompt_contains("Write a PDDL domain"),
        ResponseRule::new(Role::Decide, &decision("self"))
            .prompt_contains("Decompose into subtasks"),
        ResponseRule::new(Role::Grad, &grad_empty()),
        ResponseRule::new(Role::Aggregate, &objective(OBJ_OPEN)),
    ]
}

// ---- sharing comparison ----------------------------------------------------

/// Kitchen without the doorway-blocking complication; used by two robot
/// types so the sharing effect is isolated.
const MANIP_PLAIN: &str = "(define (domain manipulator)
  (:requirements :strips :typing :negative-preconditions)
  (:types robot object location)
  (:predicates (at ?x ?l) (holding ?r ?o) (open ?l) (in ?o ?l))
  (:action pickupobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (at ?o ?l) (at ?r ?l))
   :effect (and (holding ?r ?o) (not (at ?o ?l))))
  (:action moveto
   :parameters (?r - robot ?from - location ?to - location)
   :precondition (at ?r ?from)
   :effect (and (at ?r ?to) (not (at ?r ?from))))
  (:action openreceptacle
   :parameters (?r - robot ?l - location)
   :precondition (and (at ?r ?l) (not (open ?l)))
   :effect (open ?l))
  (:action putobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (holding ?r ?o) (at ?r ?l) (open ?l))
   :effect (and (in ?o ?l) (not (holding ?r ?o)))))";

const MANIP_PLAIN_NAIVE: &str = "(define (domain manipulator)
  (:requirements :strips :typing :negative-preconditions)
  (:types robot object location)
  (:predicates (at ?x ?l) (holding ?r ?o) (in ?o ?l))
  (:action pickupobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (at ?o ?l) (at ?r ?l))
   :effect (and (holding ?r ?o) (not (at ?o ?l))))
  (:action moveto
   :parameters (?r - robot ?from - location ?to - location)
   :precondition (at ?r ?from)
   :effect (and (at ?r ?to) (not (at ?r ?from))))
  (:action putobject
   :parameters (?r - robot ?o - object ?l - location)
   :precondition (and (holding ?r ?o) (at ?r ?l))
   :effect (and (in ?o ?l) (not (holding ?r ?o)))))";

const STORE_TOMATO_PROBLEM: &str = "(define (problem store-tomato) (:domain manipulator)
  (:objects r0 - robot tomato - object counter fridge - location)
  (:init (at r0 counter) (at tomato counter))
  (:goal (in tomato fridge)))";

const STORE_MUG_PROBLEM: &str = "(define (problem store-mug) (:domain cabinetarm)
  (:objects r1 - robot mug - object counter cabinet - location)
  (:init (at r1 counter) (at mug counter))
  (:goal (in mug cabinet)))";

fn cabinetarm(domain: &str) -> String {
    domain.replace("(define (domain manipulator)", "(define (domain cabinetarm)")
}

fn sharing_rules() -> Vec<ResponseRule> {
    let global = subtasks(json!([
        { "id": "manip-portion", "text": "store the tomato in the fridge",
          "target_type": "manipulator" },
        { "id": "cab-portion", "text": "store the mug in the cabinet",
          "target_type": "cabinetarm" },
    ]));
    let manip = subtasks(json!([
        { "id": "s-fridge", "text": "store the tomato in the fridge",
          "target_robot": "r0", "parent": "manip-portion" },
    ]));
    let cab = subtasks(json!([
        { "id": "s-cabinet", "text": "store the mug in the cabinet",
          "target_robot": "r1", "parent": "cab-portion" },
    ]));
    vec![
        ResponseRule::new(Role::Decompose, &manip).task_contains("Robot type: manipulator"),
        ResponseRule::new(Role::Decompose, &cab).task_contains("Robot type: cabinetarm"),
        ResponseRule::new(Role::Decompose, &global).task_contains("Mission: "),
        // each spec agent writes the faithful domain only once the guidance
        // reaches it: through its own hint, or through the shared meta prompt
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r0", MANIP_PLAIN, STORE_TOMATO_PROBLEM),
        )
        .task_contains("Subtask s-fridge:")
        .prompt_contains(HINT_FRIDGE),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r1", &cabinetarm(MANIP_PLAIN), STORE_MUG_PROBLEM),
        )
        .task_contains("Subtask s-cabinet:")
        .prompt_contains(HINT_CABINET),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r1", &cabinetarm(MANIP_PLAIN), STORE_MUG_PROBLEM),
        )
        .task_contains("Subtask s-cabinet:")
        .meta_contains(META_OPEN),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r0", MANIP_PLAIN_NAIVE, STORE_TOMATO_PROBLEM),
        )
        .task_contains("Subtask s-fridge:"),
        ResponseRule::new(
            Role::GeneratePddl,
            &pddl("r1", &cabinetarm(MANIP_PLAIN_NAIVE), STORE_MUG_PROBLEM),
        )
        .task_contains("Subtask s-cabinet:"),
        // the failing spec agent replans itself
        ResponseRule::new(Role::Decide, &decision("self"))
            .prompt_contains("Write a PDDL domain"),
        ResponseRule::new(Role::Aggregate, &objective(OBJ_OPEN)),
        ResponseRule::new(Role::Grad, &grad_append(META_OPEN)).task_contains("layer-2"),
        ResponseRule::new(Role::Grad, &grad_append(HINT_FRIDGE))
            .task_contains("(open fridge)"),
        ResponseRule::new(Role::Grad, &grad_append(HINT_CABINET))
            .task_contains("(open cabinet)"),
        ResponseRule::new(Role::Grad, &grad_empty()),
    ]
}
