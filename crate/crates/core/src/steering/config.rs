use serde::{Deserialize, Serialize};

use super::SteerError;
use crate::policy::BackendKind;
use crate::rng::SeedStreams;

/// How Feynman-Kac weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FkMode {
    /// Fresh weights `softmax(beta * R)` of the current particles at each check.
    #[default]
    Literal,
    /// Accumulated importance weights: proposal correction plus annealed
    /// potential differences. Targets `p(a) exp(beta R(a))` at the clean end.
    Corrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceConfig {
    pub batch_size: usize,
    pub lambda_max: f64,
    pub use_gradient: bool,
    pub use_rbf: bool,
    pub use_fk: bool,
    /// `None` picks 4 for diffusion and 1 for flow.
    pub mcmc_steps: Option<usize>,
    /// MALA step as a fraction of the transition variance.
    pub mcmc_step_scale: f64,
    pub rbf_epsilon: f64,
    pub rbf_strength: f64,
    /// Fraction of steps, from the noisy end, with repulsion active.
    pub rbf_window: f64,
    pub fk_period: usize,
    pub ess_threshold: f64,
    pub fk_beta: f64,
    pub fk_mode: FkMode,
    /// Corrected mode only: scale potentials by the signal fraction of each level.
    pub fk_anneal: bool,
    pub reward_on_clean_estimate: bool,
    /// Root of [`GuidanceConfig::streams`]; callers passing their own streams ignore it.
    pub seed: u64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            lambda_max: 1.0,
            use_gradient: true,
            use_rbf: true,
            use_fk: true,
            mcmc_steps: None,
            mcmc_step_scale: 0.5,
            rbf_epsilon: 0.1,
            rbf_strength: 0.05,
            rbf_window: 0.3,
            fk_period: 4,
            ess_threshold: 0.5,
            fk_beta: 1.0,
            fk_mode: FkMode::Literal,
            fk_anneal: true,
            reward_on_clean_estimate: false,
            seed: 0,
        }
    }
}

impl GuidanceConfig {
    /// Everything off: reduces to unguided sampling.
    pub fn all_off() -> Self {
        Self {
            use_gradient: false,
            use_rbf: false,
            use_fk: false,
            mcmc_steps: Some(0),
            ..Self::default()
        }
    }

    pub fn streams(&self) -> SeedStreams {
        SeedStreams::new(self.seed)
    }

    pub fn mcmc_steps_for(&self, kind: BackendKind) -> usize {
        self.mcmc_steps.unwrap_or(match kind {
            BackendKind::Diffusion => 4,
            BackendKind::Flow => 1,
        })
    }

    pub fn validate(&self) -> Result<(), SteerError> {
        let bad = |m: &str| Err(SteerError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let reals = [
            self.lambda_max,
            self.mcmc_step_scale,
            self.rbf_epsilon,
            self.rbf_strength,
            self.rbf_window,
            self.ess_threshold,
            self.fk_beta,
        ];
        if reals.iter().any(|v| !v.is_finite()) {
            return bad("guidance parameters must be finite");
        }
        if self.lambda_max < 0.0 {
            return bad("lambda_max must be nonnegative");
        }
        if self.mcmc_step_scale <= 0.0 {
            return bad("mcmc_step_scale must be positive");
        }
        if self.rbf_epsilon <= 0.0 {
            return bad("rbf_epsilon must be positive");
        }
        if self.rbf_strength < 0.0 {
            return bad("rbf_strength must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.rbf_window) {
            return bad("rbf_window must lie in [0, 1]");
        }
        if self.fk_period == 0 {
            return bad("fk_period must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.ess_threshold) {
            return bad("ess_threshold must lie in [0, 1]");
        }
        if self.fk_beta < 0.0 {
            return bad("fk_beta must be nonnegative");
        }
        Ok(())
    }
}
