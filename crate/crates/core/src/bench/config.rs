use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::control::{ControllerConfig, ExternalPlanner, PlanError, StagePlanner};
use crate::policy::{Backend, FlowSchedule, NoiseSchedule, ReverseVariance};
use crate::steering::GuidanceConfig;
use crate::world::{catalog, catalog::task_by_id, PerturbationSpec};

/// Steering ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One base-policy sample per chunk; no selection.
    Unguided,
    Full,
    /// No reward gradients anywhere (guidance and MCMC off).
    NoGrad,
    NoFk,
    NoRbf,
    /// Gradient guidance and MCMC only.
    GradOnly,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Unguided,
        Variant::Full,
        Variant::NoGrad,
        Variant::NoFk,
        Variant::NoRbf,
        Variant::GradOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Unguided => "unguided",
            Variant::Full => "full",
            Variant::NoGrad => "no_grad",
            Variant::NoFk => "no_fk",
            Variant::NoRbf => "no_rbf",
            Variant::GradOnly => "grad_only",
        }
    }

    /// `None` for the unguided variant.
    pub fn guidance(self, base: &GuidanceConfig) -> Option<GuidanceConfig> {
        let mut g = base.clone();
        match self {
            Variant::Unguided => return None,
            Variant::Full => {}
            Variant::NoGrad => {
                g.use_gradient = false;
                g.mcmc_steps = Some(0);
            }
            Variant::NoFk => g.use_fk = false,
            Variant::NoRbf => g.use_rbf = false,
            Variant::GradOnly => {
                g.use_fk = false;
                g.use_rbf = false;
            }
        }
        Some(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    Diffusion {
        steps: usize,
        beta_min: f64,
        beta_max: f64,
        #[serde(default)]
        variance: ReverseVariance,
    },
    Flow {
        steps: usize,
        k_min: f64,
        #[serde(default)]
        churn: f64,
    },
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Diffusion {
            steps: 16,
            beta_min: 1e-4,
            beta_max: 0.3,
            variance: ReverseVariance::default(),
        }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Backend, BenchError> {
        Ok(match self {
            BackendConfig::Diffusion {
                steps,
                beta_min,
                beta_max,
                variance,
            } => Backend::Diffusion(NoiseSchedule::build_with(*steps, *beta_min, *beta_max, *variance)?),
            BackendConfig::Flow { steps, k_min, churn } => {
                Backend::Flow(FlowSchedule::new(*steps, *k_min)?.with_churn(*churn)?)
            }
        })
    }
}

/// How base policies are produced from scripted demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub horizon: usize,
    pub demos: usize,
    pub noise_scale: f64,
    pub components: usize,
    pub em_iters: usize,
    /// Variance floor in normalized units.
    pub cov_floor: f64,
    /// Per-column workspace units of one normalized unit.
    pub action_scale: Vec<f64>,
    pub seed: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            horizon: 8,
            demos: 32,
            noise_scale: 0.01,
            components: 4,
            em_iters: 50,
            cov_floor: 0.02,
            action_scale: vec![0.1, 0.1, 1.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Catalog task ids; the base policy is fit on each task's nominal scene.
    pub tasks: Vec<String>,
    pub perturbations: Vec<PerturbationSpec>,
    pub variants: Vec<Variant>,
    pub guidance: GuidanceConfig,
    /// Its `lambda_max` is replaced by the guidance one.
    pub controller: ControllerConfig,
    pub backend: BackendConfig,
    pub policy: PolicyConfig,
    pub episodes: usize,
    pub max_chunks: usize,
    pub root_seed: u64,
    pub output_dir: PathBuf,
    /// Record wall-clock milliseconds in the CSV (breaks byte-determinism).
    pub timing: bool,
    /// External planner command line; empty selects the scripted planner.
    pub planner_command: Vec<String>,
    pub planner_timeout_secs: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tasks: vec!["move_cube:red:green".into()],
            perturbations: vec![PerturbationSpec::None],
            variants: vec![Variant::Unguided, Variant::Full],
            guidance: bench_guidance(),
            controller: ControllerConfig::default(),
            backend: BackendConfig::default(),
            policy: PolicyConfig::default(),
            episodes: 10,
            max_chunks: 8,
            root_seed: 0,
            output_dir: PathBuf::from("results"),
            timing: false,
            planner_command: Vec::new(),
            planner_timeout_secs: ExternalPlanner::DEFAULT_TIMEOUT.as_secs_f64(),
        }
    }
}

/// Guidance defaults calibrated for the tabletop tasks.
pub fn bench_guidance() -> GuidanceConfig {
    GuidanceConfig {
        lambda_max: 200.0,
        fk_beta: 50.0,
        ..GuidanceConfig::default()
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let c: RunConfig = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            lambda_max: self.guidance.lambda_max,
            ..self.controller.clone()
        }
    }

    /// A fresh planner for one episode; external planners spawn their process here.
    pub fn planner(&self) -> Result<Box<dyn StagePlanner>, PlanError> {
        if self.planner_command.is_empty() {
            Ok(Box::new(catalog::scripted_planner()))
        } else {
            Ok(Box::new(ExternalPlanner::new(
                self.planner_command.clone(),
                Duration::from_secs_f64(self.planner_timeout_secs),
            )?))
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        for t in &self.tasks {
            if task_by_id(t).is_none() {
                return bad(format!("unknown task {t:?}"));
            }
        }
        for p in &self.perturbations {
            p.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        }
        self.guidance.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        self.backend.build()?;
        let pc = &self.policy;
        if pc.horizon == 0 || pc.demos == 0 || pc.components == 0 {
            return bad("policy horizon, demos and components must be positive".into());
        }
        if !(pc.cov_floor > 0.0) || pc.action_scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("policy cov_floor and action_scale must be positive".into());
        }
        if !(pc.noise_scale >= 0.0 && pc.noise_scale.is_finite()) {
            return bad("policy noise_scale must be finite and nonnegative".into());
        }
        if !(self.planner_timeout_secs > 0.0 && self.planner_timeout_secs.is_finite()) {
            return bad("planner_timeout_secs must be positive".into());
        }
        if !(self.controller.reinforce_factor >= 1.0 && self.controller.reinforce_factor.is_finite()) {
            return bad("reinforce_factor must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_validation() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        let bad = r#"{"tasks": ["fly_to_moon"]}"#;
        assert!(matches!(RunConfig::from_json(bad), Err(BenchError::Config(_))));
        let bad = r#"{"variants": ["turbo"]}"#;
        assert!(RunConfig::from_json(bad).is_err());
    }

    #[test]
    fn variants_toggle_mechanisms() {
        let base = bench_guidance();
        assert!(Variant::Unguided.guidance(&base).is_none());
        let g = Variant::NoGrad.guidance(&base).unwrap();
        assert!(!g.use_gradient && g.mcmc_steps == Some(0) && g.use_fk && g.use_rbf);
        let g = Variant::GradOnly.guidance(&base).unwrap();
        assert!(g.use_gradient && !g.use_fk && !g.use_rbf);
    }
}
