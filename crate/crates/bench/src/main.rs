use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sar_bench::{
    compare_traces, execute, parse_list, parse_modes, parse_scenes, read_plan, render_report, write_report,
    BenchmarkPlan, RunSummary, STORE_FILE,
};
use sar_core::backend::{
    LanguageModel, RecordingBackend, RemoteChat, RemoteConfig, ReplayBackend, ReplayStore, ScriptedBackend,
    API_KEY_ENV,
};
use sar_core::world::SceneConfig;

/// Environment variable for the chat-completion endpoint URL.
const ENDPOINT_ENV: &str = "SAR_LLM_ENDPOINT";

#[derive(Parser)]
#[command(name = "sar-bench", version, about = "Run, replay and report search & rescue planning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write traces plus a report.
    Run(RunArgs),
    /// Re-run a recorded directory from its replay store and check the traces are identical.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        /// Where the replayed run goes (default: <in>/replayed).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Recompute the report from trace files.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Where report files go (default: <in>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scene config file.
    ValidateScene {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Scripted,
    Remote,
    Replay,
}

#[derive(Args)]
struct RunArgs {
    /// Scene ids, ranges (1-5) or config paths, comma separated.
    #[arg(long, default_value = "1-5")]
    scenes: String,
    #[arg(long, default_value = "0-4")]
    seeds: String,
    #[arg(long, default_value = "2")]
    agents: String,
    /// Controller modes (llamar, act, cot, react) or `all`.
    #[arg(long, default_value = "llamar")]
    mode: String,
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: number of scenes).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value_t = 30)]
    horizon: u32,
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    /// Chat-completion URL for the remote backend (or set SAR_LLM_ENDPOINT).
    #[arg(long)]
    endpoint: Option<String>,
    /// Base retry delay for the remote backend.
    #[arg(long, default_value_t = 500)]
    retry_delay_ms: u64,
    /// Replay store to read (replay backend) or to record into
    /// (default: <out>/replay.jsonl).
    #[arg(long)]
    store: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) => run_sweep(args),
        Command::Replay { input, out, jobs } => replay(&input, out, jobs),
        Command::Report { input, out } => {
            let rendered = render_report(&input)?;
            write_report(out.as_deref().unwrap_or(&input), &rendered)?;
            print!("{}", rendered.report.to_text());
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateScene { config } => {
            let scene = SceneConfig::load(&config).with_context(|| format!("{}", config.display()))?;
            println!(
                "ok: scene {} ({}x{}), {} agent(s), {} fire(s), {} person(s), {} reservoir(s), {} deposit(s)",
                scene.scene_id,
                scene.grid.rows,
                scene.grid.cols,
                scene.n_agents,
                scene.fires.len(),
                scene.persons.len(),
                scene.reservoirs.len(),
                scene.deposits.len()
            );
            for w in &scene.warnings {
                println!("warning: {w}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn run_sweep(args: RunArgs) -> Result<ExitCode> {
    let plan = BenchmarkPlan {
        scenes: parse_scenes(&args.scenes)?,
        seeds: parse_list(&args.seeds).context("--seeds")?,
        agents: parse_list(&args.agents).context("--agents")?,
        modes: parse_modes(&args.mode)?,
        horizon: args.horizon,
        model: args.model.clone(),
    };
    let jobs = args.jobs.unwrap_or(plan.scenes.len());
    let store_path = args.store.clone().unwrap_or_else(|| args.out.join(STORE_FILE));
    std::fs::create_dir_all(&args.out)?;
    let backend: Box<dyn LanguageModel> = match args.backend {
        BackendKind::Replay => {
            if !store_path.exists() {
                bail!("replay store {} does not exist", store_path.display());
            }
            Box::new(ReplayBackend::new(Arc::new(ReplayStore::open(&store_path)?)))
        }
        kind => {
            let store = Arc::new(ReplayStore::open(&store_path)?);
            if kind == BackendKind::Scripted {
                Box::new(RecordingBackend::new(ScriptedBackend::new(), store))
            } else {
                let endpoint = args
                    .endpoint
                    .clone()
                    .or_else(|| std::env::var(ENDPOINT_ENV).ok())
                    .unwrap_or_else(|| RemoteConfig::default().endpoint);
                let config = RemoteConfig { endpoint, base_delay_ms: args.retry_delay_ms, ..RemoteConfig::default() };
                if std::env::var(API_KEY_ENV).is_err() {
                    log::warn!("{API_KEY_ENV} is not set; sending requests without a key");
                }
                Box::new(RecordingBackend::new(RemoteChat::from_env(config)?, store))
            }
        }
    };
    let summary = execute(&plan, backend.as_ref(), &args.out, jobs)?;
    Ok(finish(&summary, &args.out))
}

fn finish(summary: &RunSummary, out: &Path) -> ExitCode {
    if let Some(report) = &summary.report {
        print!("{}", report.to_text());
    }
    println!("{} trace(s) written to {}", summary.written.len(), out.display());
    if summary.complete() {
        ExitCode::SUCCESS
    } else {
        for (spec, why) in &summary.aborted {
            eprintln!("aborted: {spec}: {why}");
        }
        ExitCode::FAILURE
    }
}

fn replay(input: &Path, out: Option<PathBuf>, jobs: Option<usize>) -> Result<ExitCode> {
    let plan = read_plan(input)?;
    let out = out.unwrap_or_else(|| input.join("replayed"));
    let store = ReplayStore::open(input.join(STORE_FILE))?;
    if store.is_empty() {
        bail!("{} has no recorded exchanges", input.join(STORE_FILE).display());
    }
    let backend = ReplayBackend::new(Arc::new(store));
    let summary = execute(&plan, &backend, &out, jobs.unwrap_or(plan.scenes.len()))?;
    let code = finish(&summary, &out);
    let (mismatched, missing) = compare_traces(input, &out)?;
    for name in &mismatched {
        eprintln!("differs: {name}");
    }
    for name in &missing {
        eprintln!("not replayed: {name}");
    }
    if code != ExitCode::SUCCESS || !mismatched.is_empty() || !missing.is_empty() {
        return Ok(ExitCode::FAILURE);
    }
    println!("replay identical");
    Ok(code)
}
