//! Rule-based responder used to author cassettes offline.
//!
//! Rules are evaluated in declaration order; the first match wins. A request
//! that matches no rule is a hard [`BackendError::ScriptGap`] so scenario
//! scripts fail loudly instead of drifting.

use super::{BackendError, BackendRequest, LlmBackend, Role};
use serde::{Deserialize, Serialize};

/// One response rule. `role` must match; every populated `*_contains` pattern
/// must occur in the corresponding request field and every `*_lacks` pattern
/// must not.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ResponseRule {
    pub role: Option<Role>,
    #[serde(default)]
    pub task_contains: Vec<String>,
    #[serde(default)]
    pub prompt_contains: Vec<String>,
    #[serde(default)]
    pub prompt_lacks: Vec<String>,
    #[serde(default)]
    pub meta_contains: Vec<String>,
    #[serde(default)]
    pub meta_lacks: Vec<String>,
    pub response: String,
}

impl ResponseRule {
    pub fn new(role: Role, response: &str) -> Self {
        ResponseRule {
            role: Some(role),
            response: response.to_string(),
            ..ResponseRule::default()
        }
    }

    pub fn task_contains(mut self, pattern: &str) -> Self {
        self.task_contains.push(pattern.to_string());
        self
    }

    pub fn prompt_contains(mut self, pattern: &str) -> Self {
        self.prompt_contains.push(pattern.to_string());
        self
    }

    pub fn prompt_lacks(mut self, pattern: &str) -> Self {
        self.prompt_lacks.push(pattern.to_string());
        self
    }

    pub fn meta_contains(mut self, pattern: &str) -> Self {
        self.meta_contains.push(pattern.to_string());
        self
    }

    pub fn meta_lacks(mut self, pattern: &str) -> Self {
        self.meta_lacks.push(pattern.to_string());
        self
    }

    fn matches(&self, req: &BackendRequest) -> bool {
        if let Some(role) = self.role {
            if role != req.role {
                return false;
            }
        }
        self.task_contains.iter().all(|p| req.task.contains(p.as_str()))
            && self.prompt_contains.iter().all(|p| req.prompt.contains(p.as_str()))
            && self.prompt_lacks.iter().all(|p| !req.prompt.contains(p.as_str()))
            && self.meta_contains.iter().all(|p| req.meta.contains(p.as_str()))
            && self.meta_lacks.iter().all(|p| !req.meta.contains(p.as_str()))
    }
}

pub struct ScriptedBackend {
    rules: Vec<ResponseRule>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ResponseRule>) -> Self {
        ScriptedBackend { rules }
    }
}

impl LlmBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn invoke(&self, req: &BackendRequest) -> Result<String, BackendError> {
        self.rules
            .iter()
            .find(|rule| rule.matches(req))
            .map(|rule| rule.response.clone())
            .ok_or_else(|| BackendError::ScriptGap {
                role: req.role.as_str().to_string(),
                task: req.task.clone(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_match_wins() {
        let backend = ScriptedBackend::new(vec![
            ResponseRule::new(Role::Decide, "specific").task_contains("fridge"),
            ResponseRule::new(Role::Decide, "generic"),
        ]);
        let hit = backend
            .invoke(&BackendRequest::new(Role::Decide, "p", "m", "open fridge"))
            .unwrap();
        assert_eq!(hit, "specific");
        let fallthrough = backend
            .invoke(&BackendRequest::new(Role::Decide, "p", "m", "other"))
            .unwrap();
        assert_eq!(fallthrough, "generic");
    }

    #[test]
    fn lacks_patterns_gate_matches() {
        let backend = ScriptedBackend::new(vec![
            ResponseRule::new(Role::Grad, "before-hint").prompt_lacks("open the fridge"),
            ResponseRule::new(Role::Grad, "after-hint").prompt_contains("open the fridge"),
        ]);
        let before = backend
            .invoke(&BackendRequest::new(Role::Grad, "base prompt", "", "t"))
            .unwrap();
        assert_eq!(before, "before-hint");
        let after = backend
            .invoke(&BackendRequest::new(
                Role::Grad,
                "base prompt\nopen the fridge first",
                "",
                "t",
            ))
            .unwrap();
        assert_eq!(after, "after-hint");
    }

    #[test]
    fn no_match_is_script_gap() {
        let backend = ScriptedBackend::new(vec![ResponseRule::new(Role::Decide, "r")]);
        let err = backend
            .invoke(&BackendRequest::new(Role::Grad, "p", "m", "task text"))
            .unwrap_err();
        assert!(matches!(err, BackendError::ScriptGap { .. }));
        assert!(err.to_string().contains("task text"));
    }
}
