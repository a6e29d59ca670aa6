//! Hierarchical multi-robot mission planning.
//!
//! A natural-language mission is decomposed by layered LLM agents into
//! per-robot PDDL problems, solved and validated by an internal STRIPS
//! planner, merged into a partial-order multi-robot plan, and repaired on
//! failure through textual-gradient prompt updates with layer-shared
//! meta-prompts.

pub mod backend;
pub mod eval;
pub mod hierarchy;
pub mod multirobot;
pub mod pddl;
pub mod planner;
pub mod promptopt;
pub mod trace;
