use super::scene::{dist, Scene};
use crate::policy::ActionChunk;

/// Gripper command decoded from the last action channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GripCommand {
    Close,
    Open,
    Keep,
}

impl GripCommand {
    /// Above `threshold` closes, below `-threshold` opens, otherwise keeps.
    pub fn decode(g: f64, threshold: f64) -> Self {
        if g > threshold {
            GripCommand::Close
        } else if g < -threshold {
            GripCommand::Open
        } else {
            GripCommand::Keep
        }
    }

    pub fn channel(self) -> f64 {
        match self {
            GripCommand::Close => 1.0,
            GripCommand::Open => -1.0,
            GripCommand::Keep => 0.0,
        }
    }
}

/// One kinematic step. `action` holds positional deltas then the gripper channel.
///
/// Order: clamp the delta, move the gripper within bounds, drag parts whose
/// handle was within reach before the move (joint change is the realized
/// displacement along the axis over the travel), carry the held object, then
/// apply the gripper command. A close command grasps the nearest free movable
/// object within `grasp_radius` of the new gripper position. Non-finite
/// entries are treated as zero.
pub fn step_env(scene: &mut Scene, action: &[f64]) {
    let d = scene.space_dim();
    assert_eq!(action.len(), d + 1, "action width");
    let clean = |v: f64| if v.is_finite() { v } else { 0.0 };
    let p = scene.physics;
    let old = scene.gripper.position.clone();
    let mut new: Vec<f64> = (0..d)
        .map(|i| old[i] + clean(action[i]).clamp(-p.max_delta, p.max_delta))
        .collect();
    scene.bounds.clamp(&mut new);
    let moved: Vec<f64> = new.iter().zip(&old).map(|(n, o)| n - o).collect();

    if moved.iter().any(|m| *m != 0.0) {
        for part in scene.parts.iter_mut() {
            if dist(&old, &part.handle()) <= p.handle_radius {
                let along: f64 = moved.iter().zip(&part.axis).map(|(m, a)| m * a).sum();
                part.joint = (part.joint + along / part.travel).clamp(0.0, 1.0);
            }
        }
        if let Some(id) = scene.gripper.held {
            if let Some(o) = scene.objects.iter_mut().find(|o| o.id == id) {
                for (x, m) in o.position.iter_mut().zip(&moved) {
                    *x += m;
                }
                scene.bounds.clamp(&mut o.position);
            }
        }
    }
    scene.gripper.position = new;

    match GripCommand::decode(clean(action[d]), p.close_threshold) {
        GripCommand::Keep => {}
        GripCommand::Open => {
            scene.gripper.closed = false;
            scene.gripper.held = None;
        }
        GripCommand::Close => {
            scene.gripper.closed = true;
            if scene.gripper.held.is_none() {
                let g = &scene.gripper.position;
                scene.gripper.held = scene
                    .objects
                    .iter()
                    .filter(|o| o.movable)
                    .map(|o| (dist(g, &o.position), o.id))
                    .filter(|(r, _)| *r <= p.grasp_radius)
                    .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                    .map(|(_, id)| id);
            }
        }
    }
}

/// Folds [`step_env`] over the chunk rows.
pub fn execute_chunk(scene: &Scene, chunk: &ActionChunk) -> Scene {
    let mut s = scene.clone();
    for t in 0..chunk.horizon() {
        step_env(&mut s, chunk.row(t));
    }
    s
}

/// Like [`execute_chunk`], also returning the gripper position after each step.
pub fn execute_chunk_traced(scene: &Scene, chunk: &ActionChunk) -> (Scene, Vec<Vec<f64>>) {
    let mut s = scene.clone();
    let mut path = Vec::with_capacity(chunk.horizon());
    for t in 0..chunk.horizon() {
        step_env(&mut s, chunk.row(t));
        path.push(s.gripper.position.clone());
    }
    (s, path)
}
