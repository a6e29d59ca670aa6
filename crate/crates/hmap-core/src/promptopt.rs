//! Textual-gradient prompt optimization.
//!
//! A failed planning round is rendered as a [`TextualLoss`] (deterministic
//! prose naming the failure class and, where known, the violated literal).
//! A gradient call turns a loss into a bounded list of prompt [`EditOp`]s;
//! `tgd_step` applies them to a [`PromptState`], producing a new version.
//! Layer-level losses are consolidated with [`aggregate_losses`] before the
//! meta gradient call.

use crate::backend::{BackendError, BackendRequest, LlmBackend, Role};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hard cap on edits accepted from a single gradient response.
pub const MAX_EDITS: usize = 5;
/// Prompt size cap in bytes; exceeding it evicts the oldest hints.
pub const PROMPT_BYTE_CAP: usize = 8 * 1024;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("malformed {role} response: {detail}")]
    MalformedResponse { role: String, detail: String },
    #[error("gradient carries {count} edits (cap {MAX_EDITS})")]
    TooManyEdits { count: usize },
    #[error("gradient edit ranks are not distinct")]
    DuplicateRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureClass {
    Parse,
    Precondition,
    Unsolvable,
    Budget,
    Validation,
    MalformedResponse,
}

impl FailureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureClass::Parse => "parse",
            FailureClass::Precondition => "precondition",
            FailureClass::Unsolvable => "unsolvable",
            FailureClass::Budget => "budget",
            FailureClass::Validation => "validation",
            FailureClass::MalformedResponse => "malformed-response",
        }
    }
}

/// Natural-language loss: evidence from one failed round, rendered
/// deterministically so identical evidence yields byte-identical prose.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextualLoss {
    pub class: FailureClass,
    /// Agent or subtask the evidence is attributed to.
    pub source: String,
    pub text: String,
}

impl TextualLoss {
    pub fn new(class: FailureClass, source: &str, text: &str) -> Self {
        TextualLoss {
            class,
            source: source.to_string(),
            text: text.to_string(),
        }
    }

    /// Loss for a plan step rejected by the reference model: names the
    /// failing action and the violated literal, e.g. `(open fridge)`.
    pub fn precondition(source: &str, step: usize, action: &str, violated: &str) -> Self {
        TextualLoss::new(
            FailureClass::Precondition,
            source,
            &format!(
                "plan failed at step {step}: action {action} requires {violated}, \
                 which did not hold in the state reached by the preceding steps."
            ),
        )
    }

    pub fn unsatisfied_goal(source: &str, goals: &[String]) -> Self {
        TextualLoss::new(
            FailureClass::Validation,
            source,
            &format!(
                "plan executed to completion but left goal literals unsatisfied: {}.",
                goals.join(", ")
            ),
        )
    }

    pub fn parse(source: &str, detail: &str) -> Self {
        TextualLoss::new(
            FailureClass::Parse,
            source,
            &format!("generated PDDL failed to parse: {detail}."),
        )
    }

    pub fn unsolvable(source: &str) -> Self {
        TextualLoss::new(
            FailureClass::Unsolvable,
            source,
            "the generated planning problem admits no plan; \
             the goal is unreachable from the declared initial state.",
        )
    }

    pub fn budget(source: &str, nodes: u64, elapsed_ms: u64) -> Self {
        TextualLoss::new(
            FailureClass::Budget,
            source,
            &format!(
                "the planner exhausted its search budget \
                 ({nodes} expansions, {elapsed_ms} ms) without reaching the goal."
            ),
        )
    }

    pub fn malformed_response(source: &str, role: &str, detail: &str) -> Self {
        TextualLoss::new(
            FailureClass::MalformedResponse,
            source,
            &format!("the {role} response did not conform to its schema: {detail}."),
        )
    }

    /// Full rendering sent to the gradient call.
    pub fn render(&self) -> String {
        format!("[{}] {}: {}", self.class.as_str(), self.source, self.text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EditKind {
    AppendHint,
    InsertConstraint,
    ReorderChecks,
    RemoveClause,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub payload: String,
    pub rank: u32,
}

/// Validated gradient: at most [`MAX_EDITS`] edits with distinct ranks,
/// stored in rank order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TextualGradient {
    edits: Vec<EditOp>,
}

impl TextualGradient {
    pub fn new(mut edits: Vec<EditOp>) -> Result<Self, PromptError> {
        if edits.len() > MAX_EDITS {
            return Err(PromptError::TooManyEdits { count: edits.len() });
        }
        let mut ranks: Vec<u32> = edits.iter().map(|e| e.rank).collect();
        ranks.sort_unstable();
        ranks.dedup();
        if ranks.len() != edits.len() {
            return Err(PromptError::DuplicateRank);
        }
        edits.sort_by_key(|e| e.rank);
        Ok(TextualGradient { edits })
    }

    pub fn empty() -> Self {
        TextualGradient::default()
    }

    pub fn edits(&self) -> &[EditOp] {
        &self.edits
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

#[derive(Deserialize)]
struct GradMsg {
    edits: Vec<EditOp>,
}

#[derive(Deserialize)]
struct AggregateMsg {
    objective: String,
    #[serde(default)]
    edits: Vec<EditOp>,
}

/// Consolidated layer-level loss produced by an aggregate call.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerLoss {
    pub objective: String,
    pub edits: Vec<EditOp>,
}

/// Snapshot of one committed prompt version.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVersion {
    pub version: u32,
    pub text: String,
    pub note: String,
}

/// A prompt as base text plus an ordered list of accumulated hints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptState {
    pub base: String,
    pub hints: Vec<String>,
    pub version: u32,
    pub history: Vec<PromptVersion>,
}

impl PromptState {
    pub fn new(base: &str) -> Self {
        let mut state = PromptState {
            base: base.to_string(),
            hints: Vec::new(),
            version: 0,
            history: Vec::new(),
        };
        state.history.push(PromptVersion {
            version: 0,
            text: state.text(),
            note: "initial".to_string(),
        });
        state
    }

    /// Rendered prompt: base followed by one line per hint.
    pub fn text(&self) -> String {
        let mut out = self.base.clone();
        for hint in &self.hints {
            out.push('\n');
            out.push_str(hint);
        }
        out
    }

    /// Append a hint unless the current text already contains it.
    fn append_hint(&mut self, hint: &str) {
        let hint = hint.trim();
        if hint.is_empty() || self.text().contains(hint) {
            return;
        }
        self.hints.push(hint.to_string());
    }

    /// Drop hints containing the payload.
    fn remove_clause(&mut self, payload: &str) {
        self.hints.retain(|h| !h.contains(payload));
    }

    /// Move hints containing the payload to the front so they are read
    /// before later, more specific guidance.
    fn reorder_checks(&mut self, payload: &str) {
        let (mut front, back): (Vec<String>, Vec<String>) = self
            .hints
            .drain(..)
            .partition(|h| h.contains(payload));
        front.extend(back);
        self.hints = front;
    }

    fn enforce_cap(&mut self) {
        while self.text().len() > PROMPT_BYTE_CAP && !self.hints.is_empty() {
            self.hints.remove(0);
        }
    }

    /// Apply a gradient and commit a new version. An empty gradient still
    /// bumps the version so the update is visible in the history.
    pub fn tgd_step(&mut self, grad: &TextualGradient, note: &str) {
        for edit in grad.edits() {
            match edit.kind {
                EditKind::AppendHint | EditKind::InsertConstraint => {
                    self.append_hint(&edit.payload)
                }
                EditKind::RemoveClause => self.remove_clause(&edit.payload),
                EditKind::ReorderChecks => self.reorder_checks(&edit.payload),
            }
        }
        self.enforce_cap();
        self.version += 1;
        self.history.push(PromptVersion {
            version: self.version,
            text: self.text(),
            note: note.to_string(),
        });
    }
}

/// Deduplicate byte-identical loss prose (order-preserving) and join into
/// one evidence block for the aggregate call.
pub fn aggregate_losses(losses: &[TextualLoss]) -> String {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for loss in losses {
        let rendered = loss.render();
        if seen.insert(rendered.clone()) {
            out.push(rendered);
        }
    }
    out.join("\n")
}

pub fn parse_json_payload(role: Role, response: &str) -> Result<serde_json::Value, PromptError> {
    // Tolerate a fenced code block around the JSON body.
    let trimmed = response.trim();
    let body = trimmed
        .strip_prefix("```json")
        .or_else(|| trimmed.strip_prefix("```"))
        .and_then(|s| s.strip_suffix("```"))
        .unwrap_or(trimmed);
    serde_json::from_str(body.trim()).map_err(|e| PromptError::MalformedResponse {
        role: role.as_str().to_string(),
        detail: e.to_string(),
    })
}

/// Parse and validate a gradient response body.
pub fn parse_gradient(response: &str) -> Result<TextualGradient, PromptError> {
    let value = parse_json_payload(Role::Grad, response)?;
    let msg: GradMsg =
        serde_json::from_value(value).map_err(|e| PromptError::MalformedResponse {
            role: Role::Grad.as_str().to_string(),
            detail: e.to_string(),
        })?;
    TextualGradient::new(msg.edits)
}

/// Parse and validate an aggregate response body.
pub fn parse_layer_loss(response: &str) -> Result<LayerLoss, PromptError> {
    let value = parse_json_payload(Role::Aggregate, response)?;
    let msg: AggregateMsg =
        serde_json::from_value(value).map_err(|e| PromptError::MalformedResponse {
            role: Role::Aggregate.as_str().to_string(),
            detail: e.to_string(),
        })?;
    let grad = TextualGradient::new(msg.edits)?;
    Ok(LayerLoss {
        objective: msg.objective,
        edits: grad.edits().to_vec(),
    })
}

/// Gradient call: render the loss against the current prompt text and parse
/// the edit list from the structured response.
pub fn request_gradient(
    backend: &dyn LlmBackend,
    prompt_text: &str,
    meta_text: &str,
    loss: &TextualLoss,
) -> Result<TextualGradient, PromptError> {
    let req = BackendRequest::new(Role::Grad, prompt_text, meta_text, &loss.render());
    let response = backend.invoke(&req)?;
    parse_gradient(&response)
}

/// Aggregate call: consolidate child losses into a layer-level objective
/// plus optional edits for the layer's meta prompt.
pub fn request_aggregate(
    backend: &dyn LlmBackend,
    meta_text: &str,
    losses: &[TextualLoss],
) -> Result<LayerLoss, PromptError> {
    let evidence = aggregate_losses(losses);
    let req = BackendRequest::new(Role::Aggregate, meta_text, "", &evidence);
    let response = backend.invoke(&req)?;
    parse_layer_loss(&response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ResponseRule, ScriptedBackend};

    fn append(payload: &str, rank: u32) -> EditOp {
        EditOp {
            kind: EditKind::AppendHint,
            payload: payload.to_string(),
            rank,
        }
    }

    #[test]
    fn hint_append_is_idempotent() {
        let mut p = PromptState::new("base");
        let g = TextualGradient::new(vec![append("open the fridge first", 0)]).unwrap();
        p.tgd_step(&g, "n1");
        p.tgd_step(&g, "n2");
        assert_eq!(p.hints.len(), 1);
        assert_eq!(p.text(), "base\nopen the fridge first");
        // version advances even when the text is unchanged
        assert_eq!(p.version, 2);
        assert_eq!(p.history.len(), 3);
    }

    #[test]
    fn empty_gradient_bumps_version_only() {
        let mut p = PromptState::new("base");
        p.tgd_step(&TextualGradient::empty(), "noop");
        assert_eq!(p.version, 1);
        assert_eq!(p.text(), "base");
    }

    #[test]
    fn byte_cap_evicts_oldest_hint() {
        let mut p = PromptState::new("base");
        let big = "x".repeat(5000);
        let g1 = TextualGradient::new(vec![append(&format!("first {big}"), 0)]).unwrap();
        let g2 = TextualGradient::new(vec![append(&format!("second {big}"), 0)]).unwrap();
        p.tgd_step(&g1, "n");
        p.tgd_step(&g2, "n");
        assert!(p.text().len() <= PROMPT_BYTE_CAP);
        assert_eq!(p.hints.len(), 1);
        assert!(p.hints[0].starts_with("second"));
    }

    #[test]
    fn gradient_rejects_excess_and_duplicate_ranks() {
        let six: Vec<EditOp> = (0..6).map(|i| append("h", i)).collect();
        assert!(matches!(
            TextualGradient::new(six),
            Err(PromptError::TooManyEdits { count: 6 })
        ));
        assert!(matches!(
            TextualGradient::new(vec![append("a", 1), append("b", 1)]),
            Err(PromptError::DuplicateRank)
        ));
    }

    #[test]
    fn gradient_orders_edits_by_rank() {
        let g = TextualGradient::new(vec![append("b", 2), append("a", 1)]).unwrap();
        assert_eq!(g.edits()[0].payload, "a");
    }

    #[test]
    fn remove_and_reorder_edits() {
        let mut p = PromptState::new("base");
        let g = TextualGradient::new(vec![
            append("check doors", 0),
            append("check lights", 1),
        ])
        .unwrap();
        p.tgd_step(&g, "n");
        let reorder = TextualGradient::new(vec![EditOp {
            kind: EditKind::ReorderChecks,
            payload: "lights".into(),
            rank: 0,
        }])
        .unwrap();
        p.tgd_step(&reorder, "n");
        assert_eq!(p.hints, vec!["check lights", "check doors"]);
        let remove = TextualGradient::new(vec![EditOp {
            kind: EditKind::RemoveClause,
            payload: "doors".into(),
            rank: 0,
        }])
        .unwrap();
        p.tgd_step(&remove, "n");
        assert_eq!(p.hints, vec!["check lights"]);
    }

    #[test]
    fn loss_rendering_is_deterministic_and_names_literal() {
        let a = TextualLoss::precondition("robot r1", 3, "(putobject r1 tomato fridge)", "(open fridge)");
        let b = TextualLoss::precondition("robot r1", 3, "(putobject r1 tomato fridge)", "(open fridge)");
        assert_eq!(a.render(), b.render());
        assert!(a.render().contains("(open fridge)"));
        assert!(a.render().starts_with("[precondition]"));
    }

    #[test]
    fn aggregate_dedups_identical_prose() {
        let l1 = TextualLoss::unsolvable("a");
        let l2 = TextualLoss::unsolvable("a");
        let l3 = TextualLoss::unsolvable("b");
        let text = aggregate_losses(&[l1, l2, l3]);
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn gradient_round_trip_through_backend() {
        let backend = ScriptedBackend::new(vec![ResponseRule::new(
            Role::Grad,
            r#"{"edits":[{"kind":"append-hint","payload":"open before put","rank":0}]}"#,
        )]);
        let loss = TextualLoss::precondition("r1", 1, "(put)", "(open fridge)");
        let grad = request_gradient(&backend, "prompt", "", &loss).unwrap();
        assert_eq!(grad.edits().len(), 1);
        assert_eq!(grad.edits()[0].payload, "open before put");
    }

    #[test]
    fn malformed_gradient_response_is_an_error() {
        let backend =
            ScriptedBackend::new(vec![ResponseRule::new(Role::Grad, "not json at all")]);
        let loss = TextualLoss::unsolvable("r1");
        assert!(matches!(
            request_gradient(&backend, "p", "", &loss),
            Err(PromptError::MalformedResponse { .. })
        ));
    }

    #[test]
    fn aggregate_round_trip_through_backend() {
        let backend = ScriptedBackend::new(vec![ResponseRule::new(
            Role::Aggregate,
            r#"{"objective":"insert open before put for receptacles","edits":[{"kind":"append-hint","payload":"meta rule","rank":0}]}"#,
        )]);
        let losses = [TextualLoss::unsolvable("a")];
        let layer = request_aggregate(&backend, "meta prompt", &losses).unwrap();
        assert!(layer.objective.contains("insert open"));
        assert_eq!(layer.edits.len(), 1);
    }
}
