use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use steerkit::bench::{
    fit_task_policy, run_suite, summary_table, write_outputs, BackendConfig, BenchError, PolicyConfig, RunConfig,
};
use steerkit::checks::run_checks;
use steerkit::policy::{Backend, PolicyDocument};
use steerkit::rng::{SeedStreams, STREAM_DEMOS};
use steerkit::world::{catalog, generate_demos};

/// Exit status for unreadable or invalid configuration.
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(name = "steerkit", version, about = "Reward-steered sampling of frozen action policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a benchmark suite and write results.csv, summary.csv and plots.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Worker threads; results do not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Also write one SVG trajectory plot per cell.
        #[arg(long)]
        plot: bool,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Generate scripted demonstrations for a catalog task as JSON.
    DemoGen {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 32)]
        demos: usize,
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit per-chunk-index base policies for a catalog task; writes a JSON
    /// array of policy documents.
    FitPolicy {
        #[arg(long)]
        task: String,
        /// Run config whose `policy` and diffusion `backend` sections are used.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the quick oracle and invariant checks.
    Check,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = io::stdout().lock();
            match writeln!(stdout, "{text}") {
                Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                r => r.context("writing stdout"),
            }
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, BenchError> {
    let text = fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}

fn run(config: &Path, jobs: usize, plot: bool, output_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let result = run_suite(&cfg, jobs)?;
    let written = write_outputs(&result, &cfg.output_dir, plot)?;
    print!("{}", summary_table(&result.summary));
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn demo_gen(task_id: &str, demos: usize, horizon: usize, noise: f64, seed: u64, out: Option<&Path>) -> Result<()> {
    let task = catalog::task_by_id(task_id).ok_or_else(|| BenchError::Config(format!("unknown task {task_id:?}")))?;
    let scene = catalog::scene_for(&task);
    let mut rng = SeedStreams::new(seed).stream(STREAM_DEMOS);
    let demos = generate_demos(&scene, &task, demos, horizon, noise, &mut rng)?;
    let doc = json!({
        "task": task_id,
        "horizon": horizon,
        "dim": scene.action_dim(),
        "seed": seed,
        "demos": demos
            .iter()
            .map(|d| d.iter().map(|c| c.as_slice().to_vec()).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    });
    emit(&serde_json::to_string_pretty(&doc)?, out)
}

fn fit_policy(task_id: &str, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let (policy_cfg, backend) = match config {
        Some(p) => {
            let c = load_config(p)?;
            (c.policy, c.backend)
        }
        None => (PolicyConfig::default(), BackendConfig::default()),
    };
    let Backend::Diffusion(sched) = backend.build()? else {
        return Err(BenchError::Config("policy documents carry a diffusion schedule; use a diffusion backend".into()).into());
    };
    let policies = fit_task_policy(task_id, &policy_cfg)?;
    let docs: Vec<PolicyDocument> = policies.iter().map(|p| PolicyDocument::from_parts(p, &sched)).collect();
    emit(&serde_json::to_string_pretty(&docs)?, out)
}

fn check() -> Result<bool> {
    let results = run_checks();
    for r in &results {
        println!("{:<20} {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            config,
            jobs,
            plot,
            output_dir,
        } => run(&config, jobs, plot, output_dir).map(|_| true),
        Command::DemoGen {
            task,
            demos,
            horizon,
            noise,
            seed,
            out,
        } => demo_gen(&task, demos, horizon, noise, seed, out.as_deref()).map(|_| true),
        Command::FitPolicy { task, config, out } => fit_policy(&task, config.as_deref(), out.as_deref()).map(|_| true),
        Command::Check => check(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<BenchError>() {
                Some(BenchError::Config(_)) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
