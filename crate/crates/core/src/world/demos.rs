use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::physics::{step_env, GripCommand};
use super::scene::{dist, Scene};
use super::task::{check_success, ground_keypoints, Predicate, TaskSpec};
use super::WorldError;
use crate::policy::ActionChunk;

/// Expert cruise speed per step, below the per-step clamp.
pub const EXPERT_SPEED: f64 = 0.06;
/// Arrival tolerance for expert waypoints.
pub const EXPERT_TOL: f64 = 0.02;
pub const EXPERT_MAX_STEPS: usize = 80;

fn toward(from: &[f64], to: &[f64], speed: f64) -> Vec<f64> {
    let d = dist(from, to);
    let s = if d > speed { speed / d } else { 1.0 };
    from.iter().zip(to).map(|(f, t)| (t - f) * s).collect()
}

/// Next expert action for `task` in `scene`, or `None` once done.
///
/// Cubes: reach open, close on the cube, carry to the zone center, open.
/// Parts: reach the handle, then drive it to the grounded goal point.
pub fn expert_action(scene: &Scene, task: &TaskSpec) -> Result<Option<Vec<f64>>, WorldError> {
    let kps = ground_keypoints(scene, task)?;
    let g = &scene.gripper.position;
    let act = |delta: Vec<f64>, cmd: GripCommand| {
        let mut a = delta;
        a.push(cmd.channel());
        Some(a)
    };
    let zero = vec![0.0; scene.space_dim()];
    Ok(match &task.predicate {
        Predicate::ObjectInZone { object, .. } => {
            let obj = kps.points()[0].as_slice();
            let zone = kps.points()[1].as_slice();
            let holding = scene.held_object().is_some_and(|o| o.label == *object);
            if check_success(scene, task) && !holding {
                None
            } else if holding {
                if dist(obj, zone) > EXPERT_TOL {
                    act(toward(obj, zone, EXPERT_SPEED), GripCommand::Keep)
                } else {
                    act(zero, GripCommand::Open)
                }
            } else if dist(g, obj) > EXPERT_TOL {
                let cmd = if scene.gripper.closed { GripCommand::Open } else { GripCommand::Keep };
                act(toward(g, obj, EXPERT_SPEED), cmd)
            } else {
                act(zero, GripCommand::Close)
            }
        }
        Predicate::Holding { .. } => {
            if check_success(scene, task) {
                None
            } else if dist(g, &kps.points()[0]) > EXPERT_TOL {
                act(toward(g, &kps.points()[0], EXPERT_SPEED), GripCommand::Keep)
            } else {
                act(zero, GripCommand::Close)
            }
        }
        Predicate::JointAbove { .. } | Predicate::JointBelow { .. } => {
            let handle = kps.points()[0].as_slice();
            let goal = kps.points()[1].as_slice();
            if check_success(scene, task) {
                None
            } else if dist(g, handle) > EXPERT_TOL {
                act(toward(g, handle, EXPERT_SPEED), GripCommand::Keep)
            } else {
                act(toward(g, goal, EXPERT_SPEED), GripCommand::Keep)
            }
        }
    })
}

/// One expert rollout with Gaussian noise on positional deltas. Returns the
/// executed actions and whether the task ended solved.
pub fn expert_rollout<R: Rng + ?Sized>(
    scene: &Scene,
    task: &TaskSpec,
    noise_scale: f64,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, bool), WorldError> {
    let normal = Normal::new(0.0, noise_scale.max(0.0)).expect("finite scale");
    let mut s = scene.clone();
    let mut actions = Vec::new();
    let d = s.space_dim();
    let clamp = s.physics.max_delta;
    for _ in 0..EXPERT_MAX_STEPS {
        let Some(mut a) = expert_action(&s, task)? else {
            return Ok((actions, true));
        };
        if noise_scale > 0.0 {
            for v in a.iter_mut().take(d) {
                *v += normal.sample(rng);
            }
        }
        for v in a.iter_mut().take(d) {
            *v = v.clamp(-clamp, clamp);
        }
        step_env(&mut s, &a);
        actions.push(a);
    }
    Ok((actions, check_success(&s, task)))
}

/// Cuts an action sequence into `horizon`-step chunks, padding with no-ops.
pub fn chunk_actions(actions: &[Vec<f64>], horizon: usize, dim: usize) -> Vec<ActionChunk> {
    actions
        .chunks(horizon)
        .map(|rows| {
            let mut c = ActionChunk::zeros(horizon, dim);
            for (t, r) in rows.iter().enumerate() {
                for (j, v) in r.iter().enumerate() {
                    c.set(t, j, *v);
                }
            }
            c
        })
        .collect()
}

/// `n` successful expert demonstrations, each a sequence of chunks.
///
/// Rollouts that fail the task are discarded; more than `n` failures (over
/// half of at most `2n` attempts) is an error.
pub fn generate_demos<R: Rng + ?Sized>(
    scene: &Scene,
    task: &TaskSpec,
    n: usize,
    horizon: usize,
    noise_scale: f64,
    rng: &mut R,
) -> Result<Vec<Vec<ActionChunk>>, WorldError> {
    if horizon == 0 {
        return Err(WorldError::Demo("horizon must be at least 1".into()));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(WorldError::Demo(format!("bad noise scale {noise_scale}")));
    }
    let mut out = Vec::with_capacity(n);
    let mut failures = 0;
    while out.len() < n {
        let (actions, ok) = expert_rollout(scene, task, noise_scale, rng)?;
        if ok {
            out.push(chunk_actions(&actions, horizon, scene.action_dim()));
        } else {
            failures += 1;
            if failures > n {
                return Err(WorldError::Demo(format!(
                    "expert failed {failures} times on {} (noise {noise_scale})",
                    task.id
                )));
            }
        }
    }
    Ok(out)
}
