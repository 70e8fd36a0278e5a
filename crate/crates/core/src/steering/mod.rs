//! Reward-steered sampling over a base policy.
//!
//! Four mechanisms compose: reward-gradient guidance on the predicted noise or
//! velocity, kernel repulsion between particles, Feynman-Kac reweighting with
//! multinomial resampling, and Metropolis-adjusted Langevin refinement after
//! each transition. With all of them off the output equals
//! [`crate::policy::sample_unguided`] bit for bit.
//!
//! Rewards are evaluated on workspace-unit chunks; the sampler state lives in
//! normalized policy units.

mod batch;
mod config;
mod engine;
mod fk;
mod guidance;
mod mcmc;
mod repulsion;

pub use batch::ParticleBatch;
pub use config::{FkMode, GuidanceConfig};
pub use engine::{guided_denoise, GuidedOutput, StepDiagnostics};
pub use fk::{effective_sample_size, fk_resample, fk_weights, multinomial_indices, normalize_log_weights};
pub use guidance::{apply_diffusion_guidance, apply_flow_guidance};
pub use mcmc::{mcmc_refine, StageReward};
pub use repulsion::{rbf_potential, rbf_repulsion_grad};

use crate::policy::PolicyError;
use crate::reward::RewardError;

#[derive(Debug, thiserror::Error)]
pub enum SteerError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid guidance config: {0}")]
    Config(String),
}
