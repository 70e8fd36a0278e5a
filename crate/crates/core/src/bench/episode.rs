use std::time::Instant;

use serde::Serialize;

use super::{PolicyLibrary, RunConfig, Variant};
use crate::control::{step_controller, ControlError, PlanContext, StagePlanner, StageState, SwitchDecision};
use crate::policy::{sample_unguided, Backend};
use crate::reward::{Dims, RewardProgram};
use crate::rng::{SeedStreams, STREAM_PERTURB};
use crate::steering::{guided_denoise, StageReward};
use crate::world::{
    apply_perturbation, catalog, check_success, execute_chunk_traced, ground_keypoints,
    PerturbationSpec, Scene, TaskSpec,
};

/// One executed chunk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkRecord {
    pub stage: usize,
    pub lambda: f64,
    pub reward: f64,
    pub decision: Option<SwitchDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub success: bool,
    pub chunks: usize,
    pub trace: Vec<ChunkRecord>,
    /// `None` on success.
    pub reason: Option<String>,
    pub final_stage: usize,
    /// Times the plan was restarted after finishing without success.
    pub replans: usize,
    /// Scene after perturbation.
    pub start: Option<Scene>,
    /// Gripper position after every executed step.
    pub path: Vec<Vec<f64>>,
    pub wall_ms: u64,
}

impl EpisodeResult {
    pub(crate) fn failed(reason: impl Into<String>) -> Self {
        Self {
            success: false,
            chunks: 0,
            trace: Vec::new(),
            reason: Some(reason.into()),
            final_stage: 0,
            replans: 0,
            start: None,
            path: Vec::new(),
            wall_ms: 0,
        }
    }

    pub fn mean_lambda(&self) -> f64 {
        if self.trace.is_empty() {
            0.0
        } else {
            self.trace.iter().map(|r| r.lambda).sum::<f64>() / self.trace.len() as f64
        }
    }
}

/// Everything fixed across the episodes of a suite.
pub struct EpisodeContext<'a> {
    pub config: &'a RunConfig,
    pub library: &'a PolicyLibrary,
    pub backend: Backend,
}

fn plan_context(task: &TaskSpec, scene: &Scene, horizon: usize) -> Result<PlanContext, String> {
    let kps = ground_keypoints(scene, task).map_err(|e| format!("grounding: {e}"))?;
    Ok(PlanContext {
        instruction: task.instruction.clone(),
        dims: Dims::new(horizon, scene.action_dim(), kps.len()),
        keypoints: kps,
        history: Vec::new(),
    })
}

/// Closed-loop episode: perturb the nominal scene, plan stages, then per
/// chunk re-ground keypoints, sample a chunk at the controller's lambda,
/// execute it and feed its reward to the stage machine. A plan that finishes
/// without success is restarted from stage 1. Planning, grounding and
/// perturbation failures end the episode with a reason tag.
pub fn run_episode(
    ctx: &EpisodeContext,
    task_id: &str,
    perturbation: &PerturbationSpec,
    variant: Variant,
    planner: &mut dyn StagePlanner,
    seed: u64,
) -> EpisodeResult {
    let clock = Instant::now();
    let mut res = episode_inner(ctx, task_id, perturbation, variant, planner, seed);
    if ctx.config.timing {
        res.wall_ms = clock.elapsed().as_millis() as u64;
    }
    res
}

fn episode_inner(
    ctx: &EpisodeContext,
    task_id: &str,
    perturbation: &PerturbationSpec,
    variant: Variant,
    planner: &mut dyn StagePlanner,
    seed: u64,
) -> EpisodeResult {
    let cfg = ctx.config;
    let Some(nominal) = catalog::task_by_id(task_id) else {
        return EpisodeResult::failed("config");
    };
    let Some(first_policy) = ctx.library.get(task_id, 0) else {
        return EpisodeResult::failed("policy");
    };
    let streams = SeedStreams::new(seed);
    let scene0 = catalog::scene_for(&nominal);
    let (mut scene, task) =
        match apply_perturbation(&scene0, &nominal, perturbation, &mut streams.stream(STREAM_PERTURB)) {
            Ok(v) => v,
            Err(_) => return EpisodeResult::failed("perturbation"),
        };
    let mut res = EpisodeResult::failed("budget");
    res.start = Some(scene.clone());
    if cfg.max_chunks == 0 {
        return res;
    }
    let horizon = first_policy.horizon();
    let pctx = match plan_context(&task, &scene, horizon) {
        Ok(c) => c,
        Err(_) => {
            res.reason = Some("grounding".into());
            return res;
        }
    };
    let mut program: RewardProgram = match planner.plan_stages(&pctx) {
        Ok(p) => p,
        Err(_) => {
            res.reason = Some("planning".into());
            return res;
        }
    };
    let ccfg = cfg.controller();
    let mut state = StageState::start(&program, &ccfg);
    let guidance = variant.guidance(&cfg.guidance);

    for chunk_idx in 0..cfg.max_chunks {
        let pctx = match plan_context(&task, &scene, horizon) {
            Ok(c) => c,
            Err(_) => {
                res.reason = Some("grounding".into());
                return res;
            }
        };
        let policy = ctx.library.get(task_id, chunk_idx).unwrap_or(first_policy);
        let grip = scene.gripper.position.clone();
        let reward = match StageReward::new(&program, state.stage, &pctx.keypoints, &grip, policy) {
            Ok(r) => r,
            Err(_) => {
                res.reason = Some("reward".into());
                return res;
            }
        };
        let chunk_streams = streams.child(chunk_idx as u64);
        let sampled = match &guidance {
            None => sample_unguided(policy, 1, &ctx.backend, &chunk_streams)
                .map_err(|e| e.to_string())
                .and_then(|b| {
                    let x = b.particles()[0].as_slice().to_vec();
                    let r = reward.value(&x).map_err(|e| e.to_string())?;
                    Ok((policy.to_workspace(&x), r))
                }),
            Some(g) => guided_denoise(policy, &ctx.backend, &reward, g, state.lambda, &chunk_streams)
                .map(|o| (o.best, o.final_rewards[o.best_index]))
                .map_err(|e| e.to_string()),
        };
        let (chunk, r_t) = match sampled {
            Ok(v) => v,
            Err(_) => {
                res.reason = Some("sampling".into());
                return res;
            }
        };
        let (next, path) = execute_chunk_traced(&scene, &chunk);
        scene = next;
        res.path.extend(path);
        res.chunks += 1;
        let mut record = ChunkRecord {
            stage: state.stage,
            lambda: state.lambda,
            reward: r_t,
            decision: None,
        };
        if check_success(&scene, &task) {
            res.trace.push(record);
            res.success = true;
            res.reason = None;
            res.final_stage = state.stage;
            return res;
        }
        match step_controller(&mut state, r_t, planner, &program, &pctx, &ccfg) {
            Ok(step) => {
                record.decision = Some(step.decision);
                if let Some(p) = step.program {
                    program = p;
                }
            }
            Err(ControlError::Plan(_)) => {
                res.trace.push(record);
                res.final_stage = state.stage;
                res.reason = Some("planner".into());
                return res;
            }
            Err(_) => {
                res.trace.push(record);
                res.final_stage = state.stage;
                res.reason = Some("controller".into());
                return res;
            }
        }
        res.trace.push(record);
        if state.complete {
            state = StageState::start(&program, &ccfg);
            res.replans += 1;
        }
    }
    res.final_stage = state.stage;
    res
}
