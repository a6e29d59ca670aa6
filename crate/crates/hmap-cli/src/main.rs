use clap::{Parser, Subcommand};
use hmap_cli::commands::{self, EvalOptions, PlanOptions};
use hmap_cli::scenarios::Scenario;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "hmap",
    about = "Hierarchical multi-agent PDDL planning with textual-gradient prompt optimization"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan one mission and print the validated joint plan.
    Plan {
        /// Bundled scenario: case-study, kmax-fail, sharing-on, sharing-off.
        #[arg(long, conflicts_with = "env")]
        scenario: Option<String>,
        /// Environment TOML describing the mission and reference domains.
        #[arg(long)]
        env: Option<PathBuf>,
        /// Backend strategy: live, cassette, or scripted.
        #[arg(long, default_value = "cassette")]
        backend: String,
        /// Cassette to replay (defaults to the scenario's bundled cassette).
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Asset directory holding envs/ and cassettes/.
        #[arg(long, default_value = "assets")]
        assets: PathBuf,
        /// Iteration cap K_max.
        #[arg(long)]
        kmax: Option<u32>,
        /// Hierarchy depth L (>= 2).
        #[arg(long)]
        layers: Option<usize>,
        /// Disable per-layer meta prompt sharing.
        #[arg(long)]
        no_meta_share: bool,
        /// Solver strategy: greedy, bfs, or external.
        #[arg(long, default_value = "greedy")]
        solver: String,
        /// Directory for trace.jsonl, prompts.txt, and plan.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the evaluation suite and report SR/GCR/Eff/RU.
    Eval {
        /// Directory of task TOML files.
        #[arg(long)]
        tasks: PathBuf,
        /// Backend strategy: live, cassette, or scripted.
        #[arg(long, default_value = "cassette")]
        backend: String,
        #[arg(long)]
        cassette: Option<PathBuf>,
        /// Episodes per task.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Directory for metrics.json, metrics.txt, and episodes.jsonl.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for running tasks concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long, default_value = "greedy")]
        solver: String,
    },
    /// Replay a scenario cassette and print every prompt version.
    Prompts {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "assets")]
        assets: PathBuf,
        #[arg(long)]
        cassette: Option<PathBuf>,
    },
    /// Re-record the bundled cassettes from the scripted scenarios.
    GenCassettes {
        #[arg(long, default_value = "assets")]
        assets: PathBuf,
    },
}

fn scenario_by_name(name: &str) -> anyhow::Result<Scenario> {
    Scenario::from_name(name)
        .ok_or_else(|| anyhow::anyhow!("unknown scenario `{name}` (see `hmap plan --help`)"))
}

fn run() -> anyhow::Result<i32> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Plan {
            scenario,
            env,
            backend,
            cassette,
            assets,
            kmax,
            layers,
            no_meta_share,
            solver,
            out,
        } => {
            let scenario = scenario.as_deref().map(scenario_by_name).transpose()?;
            commands::cmd_plan(&PlanOptions {
                scenario,
                env,
                backend,
                cassette,
                assets,
                kmax,
                layers,
                no_meta_share,
                solver,
                out,
            })
        }
        Cmd::Eval {
            tasks,
            backend,
            cassette,
            seeds,
            out,
            parallel,
            solver,
        } => commands::cmd_eval(&EvalOptions {
            tasks,
            backend,
            cassette,
            seeds,
            out,
            parallel,
            solver,
        }),
        Cmd::Prompts {
            scenario,
            assets,
            cassette,
        } => commands::cmd_prompts(scenario_by_name(&scenario)?, &assets, cassette),
        Cmd::GenCassettes { assets } => commands::cmd_gen_cassettes(&assets),
    }
}

fn main() {
    match run() {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
