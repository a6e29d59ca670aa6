//! Adapter around an external PDDL solver executable.
//!
//! Contract: the solver is invoked as `<executable> [args...] DOMAIN PROBLEM
//! PLAN_OUT` with the domain and problem written as temporary PDDL files. It
//! must exit 0 and write one parenthesized ground action per line to
//! PLAN_OUT. The returned plan is re-validated internally; a plan that fails
//! validation is a [`SolverFailure`], never a success.

use super::{PlannerError, SearchBudget, SolveInput, SolveOutcome, Solver};
use crate::pddl::{serialize_domain, serialize_problem, validate_plan, GroundActionId,
    ValidationReport};
use std::path::PathBuf;
use std::process::Command;
use thiserror::Error;

#[derive(Clone, Debug)]
pub struct ExternalSolverConfig {
    pub executable: PathBuf,
    pub args: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SolverFailure {
    #[error("failed to launch {executable}: {source}")]
    Launch {
        executable: String,
        source: std::io::Error,
    },
    #[error("solver exited with status {status}: {stderr}")]
    NonzeroExit { status: i32, stderr: String },
    #[error("unparseable plan line {line_no}: {line}")]
    UnparseablePlan { line_no: usize, line: String },
    #[error("plan action ({name} {args}) is not a ground action of the problem",
        args = .args.join(" "))]
    UnknownAction { name: String, args: Vec<String> },
    #[error("solver plan failed internal validation")]
    ValidationFailed { report: Box<ValidationReport> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parse the standard one-action-per-line plan format. Blank lines and `;`
/// comment lines are skipped.
pub fn parse_plan_lines(text: &str) -> Result<Vec<(String, Vec<String>)>, SolverFailure> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        let inner = line
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| SolverFailure::UnparseablePlan {
                line_no: idx + 1,
                line: raw.to_string(),
            })?;
        let mut parts = inner.split_whitespace().map(|s| s.to_ascii_lowercase());
        let name = parts.next().ok_or_else(|| SolverFailure::UnparseablePlan {
            line_no: idx + 1,
            line: raw.to_string(),
        })?;
        out.push((name, parts.collect()));
    }
    Ok(out)
}

pub fn external_solve(
    input: &SolveInput<'_>,
    cfg: &ExternalSolverConfig,
) -> Result<Vec<GroundActionId>, SolverFailure> {
    let dir = tempdir()?;
    let domain_path = dir.join("domain.pddl");
    let problem_path = dir.join("problem.pddl");
    let plan_path = dir.join("plan.txt");
    std::fs::write(&domain_path, serialize_domain(input.domain))?;
    std::fs::write(&problem_path, serialize_problem(input.problem))?;

    let output = Command::new(&cfg.executable)
        .args(&cfg.args)
        .arg(&domain_path)
        .arg(&problem_path)
        .arg(&plan_path)
        .output()
        .map_err(|source| SolverFailure::Launch {
            executable: cfg.executable.display().to_string(),
            source,
        })?;
    if !output.status.success() {
        return Err(SolverFailure::NonzeroExit {
            status: output.status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        });
    }

    let text = std::fs::read_to_string(&plan_path)?;
    let mut plan = Vec::new();
    for (name, args) in parse_plan_lines(&text)? {
        let id = input
            .model
            .find_action(&name, &args)
            .ok_or(SolverFailure::UnknownAction { name, args })?;
        plan.push(id);
    }

    let report = validate_plan(input.model, &plan);
    if !report.valid {
        return Err(SolverFailure::ValidationFailed {
            report: Box::new(report),
        });
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(plan)
}

fn tempdir() -> std::io::Result<PathBuf> {
    use std::time::{SystemTime, UNIX_EPOCH};
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default()
        .as_nanos();
    let dir = std::env::temp_dir().join(format!("hmap-ext-{}-{nanos}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub struct ExternalSolver {
    pub cfg: ExternalSolverConfig,
}

impl Solver for ExternalSolver {
    fn name(&self) -> &'static str {
        "external"
    }

    fn solve(
        &self,
        input: &SolveInput<'_>,
        _budget: &SearchBudget,
    ) -> Result<SolveOutcome, PlannerError> {
        Ok(SolveOutcome::Plan(external_solve(input, &self.cfg)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_standard_plan_lines() {
        let plan = parse_plan_lines("(PickupObject r1 tomato counter)\n; cost 1\n").unwrap();
        assert_eq!(
            plan,
            vec![(
                "pickupobject".to_string(),
                vec!["r1".to_string(), "tomato".to_string(), "counter".to_string()]
            )]
        );
    }

    #[test]
    fn garbage_is_unparseable() {
        assert!(matches!(
            parse_plan_lines("pickup tomato").unwrap_err(),
            SolverFailure::UnparseablePlan { line_no: 1, .. }
        ));
    }
}
