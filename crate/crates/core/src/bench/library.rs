use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{BenchError, PolicyConfig};
use crate::policy::{fit_gmm_em, ActionChunk, EmOptions, GaussianMixturePolicy};
use crate::rng::{SeedStreams, STREAM_DEMOS, STREAM_EM_INIT};
use crate::world::{catalog, generate_demos};

/// Normalized demonstration chunks for one catalog task on its nominal
/// scene, grouped by chunk index within the demonstration.
pub fn demo_chunks(task_id: &str, cfg: &PolicyConfig) -> Result<Vec<Vec<ActionChunk>>, BenchError> {
    let task = catalog::task_by_id(task_id).ok_or_else(|| BenchError::Config(format!("unknown task {task_id:?}")))?;
    let scene = catalog::scene_for(&task);
    if cfg.action_scale.len() != scene.action_dim() {
        return Err(BenchError::Config(format!(
            "action_scale has {} entries, actions have {}",
            cfg.action_scale.len(),
            scene.action_dim()
        )));
    }
    let mut rng = SeedStreams::new(cfg.seed).stream(STREAM_DEMOS);
    let demos = generate_demos(&scene, &task, cfg.demos, cfg.horizon, cfg.noise_scale, &mut rng)?;
    let inv: Vec<f64> = cfg.action_scale.iter().map(|s| 1.0 / s).collect();
    let mut by_index: Vec<Vec<ActionChunk>> = Vec::new();
    for demo in demos {
        for (i, c) in demo.into_iter().enumerate() {
            if by_index.len() <= i {
                by_index.push(Vec::new());
            }
            by_index[i].push(c.scale_columns(&inv));
        }
    }
    Ok(by_index)
}

/// Frozen base policy for one task: one EM fit per chunk index, so the
/// policy is conditioned on elapsed chunks. Indices seen in fewer
/// demonstrations than `cfg.components` use that many components instead.
pub fn fit_task_policy(task_id: &str, cfg: &PolicyConfig) -> Result<Vec<GaussianMixturePolicy>, BenchError> {
    let groups = demo_chunks(task_id, cfg)?;
    let mut rng = SeedStreams::new(cfg.seed).stream(STREAM_EM_INIT);
    groups
        .iter()
        .enumerate()
        .map(|(i, chunks)| {
            let opts = EmOptions {
                components: cfg.components.min(chunks.len()),
                iters: cfg.em_iters,
                cov_floor: cfg.cov_floor,
            };
            let fit = fit_gmm_em(chunks, &opts, &format!("{task_id}#{i}"), &mut rng)?;
            Ok(fit.policy.with_action_scale(cfg.action_scale.clone())?)
        })
        .collect()
}

/// Base policies keyed by nominal task id, one per chunk index.
#[derive(Debug, Clone, Default)]
pub struct PolicyLibrary {
    policies: BTreeMap<String, Vec<GaussianMixturePolicy>>,
}

impl PolicyLibrary {
    /// Fits every distinct task id; fits are independent of evaluation order.
    pub fn fit(task_ids: &[String], cfg: &PolicyConfig) -> Result<Self, BenchError> {
        let mut ids = task_ids.to_vec();
        ids.sort();
        ids.dedup();
        let fitted = ids
            .par_iter()
            .map(|id| fit_task_policy(id, cfg).map(|p| (id.clone(), p)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            policies: fitted.into_iter().collect(),
        })
    }

    /// `policies` must be nonempty and share one shape.
    pub fn insert(&mut self, task_id: impl Into<String>, policies: Vec<GaussianMixturePolicy>) {
        assert!(!policies.is_empty(), "a task needs at least one policy");
        self.policies.insert(task_id.into(), policies);
    }

    /// Policy for chunk `index`; past the last fitted index the last one
    /// repeats.
    pub fn get(&self, task_id: &str, index: usize) -> Option<&GaussianMixturePolicy> {
        let ps = self.policies.get(task_id)?;
        ps.get(index.min(ps.len() - 1))
    }

    pub fn phases(&self, task_id: &str) -> usize {
        self.policies.get(task_id).map_or(0, Vec::len)
    }
}
