use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{plot_trajectories, run_episode, BenchError, EpisodeContext, EpisodeResult, PolicyLibrary, RunConfig, Variant};
use crate::world::{catalog, PerturbationSpec};

/// Versioned episode table schema.
pub const CSV_HEADER: &str = "episode_id,task,perturbation,variant,seed,success,chunks,final_stage,mean_lambda,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRow {
    pub episode_id: usize,
    pub task: String,
    pub perturbation: String,
    pub variant: Variant,
    pub seed: u64,
    pub success: bool,
    pub chunks: usize,
    pub final_stage: usize,
    pub mean_lambda: f64,
    pub wall_ms: u64,
}

impl EpisodeRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.6},{}",
            self.episode_id,
            self.task,
            self.perturbation,
            self.variant.as_str(),
            self.seed,
            u8::from(self.success),
            self.chunks,
            self.final_stage,
            self.mean_lambda,
            self.wall_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub task: String,
    pub perturbation: String,
    pub variant: Variant,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Binomial standard error `sqrt(p(1-p)/n)`; 0 for empty cells.
    pub std_error: f64,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub rows: Vec<EpisodeRow>,
    /// Parallel to `rows`.
    pub episodes: Vec<EpisodeResult>,
    pub summary: Vec<CellSummary>,
}

impl SuiteResult {
    pub fn csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn cell(&self, task: &str, perturbation: &str, variant: Variant) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|c| c.task == task && c.perturbation == perturbation && c.variant == variant)
    }
}

struct Job<'a> {
    id: usize,
    task: &'a str,
    perturbation: &'a PerturbationSpec,
    variant: Variant,
    seed: u64,
}

/// Fits base policies for the configured tasks, then runs the suite.
pub fn run_suite(config: &RunConfig, jobs: usize) -> Result<SuiteResult, BenchError> {
    config.validate()?;
    let library = PolicyLibrary::fit(&config.tasks, &config.policy)?;
    run_suite_with(config, &library, jobs)
}

/// Runs task x perturbation x variant x episode on `jobs` worker threads.
/// Rows come back in episode-id order whatever the thread count.
pub fn run_suite_with(config: &RunConfig, library: &PolicyLibrary, jobs: usize) -> Result<SuiteResult, BenchError> {
    config.validate()?;
    let ctx = EpisodeContext {
        config,
        library,
        backend: config.backend.build()?,
    };
    let mut work = Vec::new();
    for task in &config.tasks {
        for p in &config.perturbations {
            for &variant in &config.variants {
                for i in 0..config.episodes {
                    work.push(Job {
                        id: work.len(),
                        task,
                        perturbation: p,
                        variant,
                        seed: config.root_seed.wrapping_add(i as u64),
                    });
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let episodes: Vec<EpisodeResult> = pool.install(|| {
        work.par_iter()
            .map(|j| match config.planner() {
                Ok(mut planner) => run_episode(&ctx, j.task, j.perturbation, j.variant, planner.as_mut(), j.seed),
                Err(_) => EpisodeResult::failed("planner"),
            })
            .collect()
    });
    let rows: Vec<EpisodeRow> = work
        .iter()
        .zip(&episodes)
        .map(|(j, e)| EpisodeRow {
            episode_id: j.id,
            task: j.task.to_string(),
            perturbation: j.perturbation.name(),
            variant: j.variant,
            seed: j.seed,
            success: e.success,
            chunks: e.chunks,
            final_stage: e.final_stage,
            mean_lambda: e.mean_lambda(),
            wall_ms: e.wall_ms,
        })
        .collect();
    let summary = summarize(&rows);
    Ok(SuiteResult { rows, episodes, summary })
}

/// Per-cell success rate and standard error, cells in first-seen order.
pub fn summarize(rows: &[EpisodeRow]) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    for r in rows {
        let idx = match cells
            .iter()
            .position(|c| c.task == r.task && c.perturbation == r.perturbation && c.variant == r.variant)
        {
            Some(i) => i,
            None => {
                cells.push(CellSummary {
                    task: r.task.clone(),
                    perturbation: r.perturbation.clone(),
                    variant: r.variant,
                    episodes: 0,
                    successes: 0,
                    success_rate: 0.0,
                    std_error: 0.0,
                });
                cells.len() - 1
            }
        };
        cells[idx].episodes += 1;
        cells[idx].successes += usize::from(r.success);
    }
    for c in &mut cells {
        let n = c.episodes as f64;
        c.success_rate = c.successes as f64 / n;
        c.std_error = (c.success_rate * (1.0 - c.success_rate) / n).sqrt();
    }
    cells
}

pub fn summary_table(summary: &[CellSummary]) -> String {
    let mut out = String::from("task,perturbation,variant,episodes,success_rate,std_error\n");
    for c in summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4}",
            c.task,
            c.perturbation,
            c.variant.as_str(),
            c.episodes,
            c.success_rate,
            c.std_error
        );
    }
    out
}

/// Writes `results.csv`, `summary.csv` and, with `plot`, one SVG per
/// task x perturbation x variant cell. Returns the written paths.
pub fn write_outputs(result: &SuiteResult, dir: &Path, plot: bool) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv = dir.join("results.csv");
    fs::write(&csv, result.csv())?;
    written.push(csv);
    let summary = dir.join("summary.csv");
    fs::write(&summary, summary_table(&result.summary))?;
    written.push(summary);
    if plot {
        for cell in &result.summary {
            let eps: Vec<&EpisodeResult> = result
                .rows
                .iter()
                .zip(&result.episodes)
                .filter(|(r, _)| r.task == cell.task && r.perturbation == cell.perturbation && r.variant == cell.variant)
                .map(|(_, e)| e)
                .collect();
            let Some(task) = catalog::task_by_id(&cell.task) else {
                continue;
            };
            let scene = eps
                .iter()
                .find_map(|e| e.start.clone())
                .unwrap_or_else(|| catalog::scene_for(&task));
            let svg = plot_trajectories(&eps, &scene);
            let name = format!("{}__{}__{}.svg", cell.task, cell.perturbation, cell.variant.as_str())
                .replace([':', '/', ' '], "_");
            let path = dir.join(name);
            fs::write(&path, svg)?;
            written.push(path);
        }
    }
    Ok(written)
}
