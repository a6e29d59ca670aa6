//! Implementations behind the `hmap` subcommands.

use crate::scenarios::Scenario;
use anyhow::{anyhow, bail, Context, Result};
use hmap_core::backend::{
    BackendConfig, BackendRegistry, LlmBackend, RecordingBackend, ResponseRule, ScriptedBackend,
};
use hmap_core::eval::{
    compute_metrics, load_environment, load_task, run_suite, scripted_rules_for, Category,
    EpisodeRecord, EvalError, SuiteReport, TaskCase,
};
use hmap_core::hierarchy::{orchestrate, HierarchyConfig, RunOutcome, RunResult};
use hmap_core::planner::{Solver, SolverRegistry};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Timestamp stamped into regenerated cassettes; fixed so regeneration is
/// reproducible byte-for-byte.
pub const RECORDED_AT: &str = "2026-08-23T00:00:00Z";

pub struct PlanOptions {
    pub scenario: Option<Scenario>,
    pub env: Option<PathBuf>,
    pub backend: String,
    pub cassette: Option<PathBuf>,
    pub assets: PathBuf,
    pub kmax: Option<u32>,
    pub layers: Option<usize>,
    pub no_meta_share: bool,
    pub solver: String,
    pub out: Option<PathBuf>,
}

pub struct EvalOptions {
    pub tasks: PathBuf,
    pub backend: String,
    pub cassette: Option<PathBuf>,
    pub seeds: u64,
    pub out: Option<PathBuf>,
    pub parallel: usize,
    pub solver: String,
}

fn solver_by_name(name: &str) -> Result<Arc<dyn Solver>> {
    SolverRegistry::with_builtins()
        .get(name)
        .ok_or_else(|| anyhow!("unknown solver `{name}`"))
}

fn build_backend(
    name: &str,
    cassette: Option<PathBuf>,
    rules: Vec<ResponseRule>,
) -> Result<Box<dyn LlmBackend>> {
    let cfg = BackendConfig {
        cassette_path: cassette,
        strict_replay: true,
        fallback_response: None,
        scripted_rules: rules,
        ..BackendConfig::default()
    };
    BackendRegistry::with_builtins()
        .build(name, &cfg)
        .with_context(|| format!("building `{name}` backend"))
}

fn write_run_artifacts(out: &Path, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("trace.jsonl"), result.trace.to_jsonl())?;
    let mut prompts = String::new();
    for agent in result.agents.values() {
        prompts.push_str(&format!("=== {} (layer {})\n", agent.id, agent.layer));
        for v in &agent.prompt.history {
            prompts.push_str(&format!("--- v{} [{}]\n{}\n", v.version, v.note, v.text));
        }
    }
    for (layer, meta) in result.meta.iter().enumerate() {
        prompts.push_str(&format!("=== meta layer {layer}\n"));
        for v in &meta.history {
            prompts.push_str(&format!("--- v{} [{}]\n{}\n", v.version, v.note, v.text));
        }
    }
    std::fs::write(out.join("prompts.txt"), prompts)?;
    if let RunOutcome::Success { plan, order, .. } = &result.outcome {
        let mut text = String::new();
        for &i in order {
            let pa = &plan.actions[i];
            text.push_str(&format!("{}\t{}\t{}\n", pa.robot, pa.subtask, pa.display()));
        }
        std::fs::write(out.join("plan.txt"), text)?;
    }
    Ok(())
}

/// `hmap plan`: exit 0 on a validated plan, 2 when `K_max` is exhausted;
/// configuration and load errors surface as `Err` (exit 1).
pub fn cmd_plan(opts: &PlanOptions) -> Result<i32> {
    let (env_path, mut cfg, rules, default_cassette) = match &opts.scenario {
        Some(s) => (
            opts.assets.join("envs").join(s.env_file()),
            s.config(),
            s.rules(),
            Some(opts.assets.join("cassettes").join(s.cassette_file())),
        ),
        None => {
            let env = opts
                .env
                .clone()
                .ok_or_else(|| anyhow!("either --scenario or --env is required"))?;
            (env, HierarchyConfig::default(), Vec::new(), None)
        }
    };
    if let Some(k) = opts.kmax {
        cfg.kmax = k;
    }
    if let Some(l) = opts.layers {
        cfg.layers = l;
    }
    if opts.no_meta_share {
        cfg.meta_sharing = false;
    }

    let (instruction, problem) =
        load_environment(&env_path).with_context(|| format!("loading {}", env_path.display()))?;
    let solver = solver_by_name(&opts.solver)?;
    let cassette = opts.cassette.clone().or(default_cassette);
    let backend = build_backend(&opts.backend, cassette, rules)?;

    let result = orchestrate(&problem, &instruction, backend.as_ref(), solver.as_ref(), &cfg)?;
    if let Some(out) = &opts.out {
        write_run_artifacts(out, &result)?;
    }
    match &result.outcome {
        RunOutcome::Success {
            plan,
            order,
            makespan,
            iterations_used,
        } => {
            println!(
                "plan found after {iterations_used} iteration(s): {} actions, makespan {makespan}",
                plan.len()
            );
            for &i in order {
                let pa = &plan.actions[i];
                println!("  [{}] {}", pa.robot, pa.display());
            }
            Ok(0)
        }
        RunOutcome::Failure {
            iterations_used,
            last_loss,
        } => {
            eprintln!("no valid plan after {iterations_used} iteration(s)");
            if let Some(loss) = last_loss {
                eprintln!("last failure: {}", loss.render());
            }
            Ok(2)
        }
    }
}

pub fn load_tasks_dir(dir: &Path) -> Result<Vec<TaskCase>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading task directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no task files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| load_task(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn report_from_episodes(episodes: Vec<EpisodeRecord>) -> SuiteReport {
    let overall = compute_metrics(&episodes);
    let mut by_category = BTreeMap::new();
    for cat in [Category::Compound, Category::Complex, Category::Vague] {
        let subset: Vec<&EpisodeRecord> =
            episodes.iter().filter(|e| e.category == cat).collect();
        if !subset.is_empty() {
            by_category.insert(cat.as_str().to_string(), compute_metrics(subset));
        }
    }
    SuiteReport {
        overall,
        by_category,
        episodes,
    }
}

/// Split tasks into contiguous chunks, run each chunk on its own thread, and
/// reassemble episodes in task order so the report is unaffected.
fn run_suite_parallel(
    tasks: &[TaskCase],
    backend: &dyn LlmBackend,
    solver: &dyn Solver,
    cfg: &HierarchyConfig,
    seeds: u64,
    workers: usize,
) -> Result<SuiteReport, EvalError> {
    let chunk_size = tasks.len().div_ceil(workers.max(1));
    let results: Vec<Result<SuiteReport, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .chunks(chunk_size.max(1))
            .map(|chunk| scope.spawn(move || run_suite(chunk, backend, solver, cfg, seeds)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("suite worker panicked"))
            .collect()
    });
    let mut episodes = Vec::new();
    for r in results {
        episodes.extend(r?.episodes);
    }
    Ok(report_from_episodes(episodes))
}

/// `hmap eval`: exit 0 once the suite ran, even when episodes failed;
/// loading or backend construction problems surface as `Err` (exit 1).
pub fn cmd_eval(opts: &EvalOptions) -> Result<i32> {
    let tasks = load_tasks_dir(&opts.tasks)?;
    let rules: Vec<ResponseRule> = tasks.iter().flat_map(|t| scripted_rules_for(t)).collect();
    let backend = build_backend(&opts.backend, opts.cassette.clone(), rules)?;
    let solver = solver_by_name(&opts.solver)?;
    let cfg = HierarchyConfig::default();

    let report = if opts.parallel > 1 {
        run_suite_parallel(
            &tasks,
            backend.as_ref(),
            solver.as_ref(),
            &cfg,
            opts.seeds,
            opts.parallel,
        )?
    } else {
        run_suite(&tasks, backend.as_ref(), solver.as_ref(), &cfg, opts.seeds)?
    };

    print!("{}", report.to_table());
    if let Some(out) = &opts.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("metrics.json"), report.to_json())?;
        std::fs::write(out.join("metrics.txt"), report.to_table())?;
        std::fs::write(out.join("episodes.jsonl"), report.episodes_jsonl())?;
    }
    Ok(0)
}

/// `hmap prompts`: replay a scenario and print every prompt version.
pub fn cmd_prompts(scenario: Scenario, assets: &Path, cassette: Option<PathBuf>) -> Result<i32> {
    let env_path = assets.join("envs").join(scenario.env_file());
    let (instruction, problem) = load_environment(&env_path)?;
    let cassette =
        cassette.unwrap_or_else(|| assets.join("cassettes").join(scenario.cassette_file()));
    let backend = build_backend("cassette", Some(cassette), Vec::new())?;
    let solver = solver_by_name("greedy")?;
    let result = orchestrate(
        &problem,
        &instruction,
        backend.as_ref(),
        solver.as_ref(),
        &scenario.config(),
    )?;
    for agent in result.agents.values() {
        println!("=== {} (layer {})", agent.id, agent.layer);
        for v in &agent.prompt.history {
            println!("--- v{} [{}]\n{}", v.version, v.note, v.text);
        }
    }
    for (layer, meta) in result.meta.iter().enumerate() {
        println!("=== meta layer {layer}");
        for v in &meta.history {
            println!("--- v{} [{}]\n{}", v.version, v.note, v.text);
        }
    }
    Ok(0)
}

/// `hmap gen-cassettes`: re-record every bundled cassette from the scripted
/// scenarios, verifying each trajectory before writing.
pub fn cmd_gen_cassettes(assets: &Path) -> Result<i32> {
    let solver = solver_by_name("greedy")?;
    for scenario in Scenario::all() {
        let env_path = assets.join("envs").join(scenario.env_file());
        let (instruction, problem) = load_environment(&env_path)
            .with_context(|| format!("loading {}", env_path.display()))?;
        let recorder = RecordingBackend::new(ScriptedBackend::new(scenario.rules()));
        let result = orchestrate(
            &problem,
            &instruction,
            &recorder,
            solver.as_ref(),
            &scenario.config(),
        )
        .with_context(|| format!("running scenario {}", scenario.name()))?;
        scenario.verify(&result).map_err(|e| anyhow!(e))?;
        let cassette = recorder.into_cassette(scenario.name(), RECORDED_AT)?;
        let path = assets.join("cassettes").join(scenario.cassette_file());
        cassette.save(&path)?;
        println!("wrote {} ({} entries)", path.display(), cassette.len());
    }

    let tasks = load_tasks_dir(&assets.join("tasks"))?;
    let rules: Vec<ResponseRule> = tasks.iter().flat_map(|t| scripted_rules_for(t)).collect();
    let recorder = RecordingBackend::new(ScriptedBackend::new(rules));
    let cfg = HierarchyConfig::default();
    let report = run_suite(&tasks, &recorder, solver.as_ref(), &cfg, 5)?;
    if report.overall.sr < 1.0 {
        bail!(
            "suite recording expected full success, got SR {:.3}",
            report.overall.sr
        );
    }
    let cassette = recorder.into_cassette("suite", RECORDED_AT)?;
    let path = assets.join("cassettes").join("suite.jsonl");
    cassette.save(&path)?;
    println!("wrote {} ({} entries)", path.display(), cassette.len());
    Ok(0)
}
