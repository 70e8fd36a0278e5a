//! Deterministic kinematic tabletop: scenes, oracle keypoints, perturbations,
//! scripted demonstrations, chunk execution and success predicates.
//!
//! Actions are positional deltas followed by one gripper channel. A channel
//! above `close_threshold` closes the gripper and grasps the nearest free
//! movable object within `grasp_radius`; below `-close_threshold` opens it and
//! releases; anything in between keeps the current state. Parts are 1-DOF
//! prismatic joints dragged by gripper motion near their handle.

pub mod catalog;
mod demos;
mod perturb;
mod physics;
mod scene;
mod task;

pub use demos::{
    chunk_actions, expert_action, expert_rollout, generate_demos, EXPERT_MAX_STEPS, EXPERT_SPEED,
    EXPERT_TOL,
};
pub use perturb::{apply_perturbation, PerturbationSpec, MAX_PLACEMENT_TRIES, MIN_SEPARATION, PLACEMENT_MARGIN};
pub use physics::{execute_chunk, execute_chunk_traced, step_env, GripCommand};
pub use scene::{load_scene, save_scene, Bounds, Gripper, Object, Part, PhysicsParams, Scene, Zone};
pub use task::{check_success, ground_keypoints, Predicate, TaskFamily, TaskSpec, JOINT_GOAL_MARGIN};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("scene schema violation at {path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("grounding failed: {0}")]
    Grounding(String),
    #[error("perturbation failed: {0}")]
    Perturbation(String),
    #[error("demo generation failed: {0}")]
    Demo(String),
}
