//! Desk-scale benchmark harness: per-task base policies fit on scripted
//! demonstrations, closed-loop episodes under perturbations and steering
//! variants, suites over the cross product with ordered CSV output, and SVG
//! trajectory plots.
//!
//! Episode `i` of every cell uses seed `root_seed + i`, so variants of one
//! cell see the same perturbed scenes.

mod config;
mod episode;
mod library;
mod plot;
mod suite;

pub use config::{bench_guidance, BackendConfig, PolicyConfig, RunConfig, Variant};
pub use episode::{run_episode, ChunkRecord, EpisodeContext, EpisodeResult};
pub use library::{demo_chunks, fit_task_policy, PolicyLibrary};
pub use plot::plot_trajectories;
pub use suite::{
    run_suite, run_suite_with, summarize, summary_table, write_outputs, CellSummary, EpisodeRow, SuiteResult,
    CSV_HEADER,
};

use crate::policy::PolicyError;
use crate::steering::SteerError;
use crate::world::WorldError;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid run config: {0}")]
    Config(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Steer(#[from] SteerError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}
