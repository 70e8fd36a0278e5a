//! Chunk-level closed-loop control: adaptive guidance strength, hysteresis
//! stage switching and pluggable stage planners.

mod controller;
mod lambda;
mod planner;
mod schmitt;

use std::time::Duration;

pub use controller::{step_controller, ControlStep, ControllerConfig, StageState};
pub use lambda::{
    adaptive_lambda, adaptive_lambda_corrected, adaptive_lambda_with, LambdaConvention, BASE_GUARD,
};
pub use planner::{ExternalPlanner, PlanContext, Recovery, ScriptedPlanner, StagePlanner, StageTemplate};
pub use schmitt::{schmitt_decide, SwitchDecision};

use crate::reward::RewardError;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("no stage template matches instruction {0:?}")]
    TemplateMiss(String),
    #[error("instruction names {0:?}, which has no keypoint")]
    UnknownLabel(String),
    #[error("planner program rejected: {0}")]
    Reward(#[from] RewardError),
    #[error("planner protocol: {0}")]
    Protocol(String),
    #[error("planner io: {0}")]
    Io(String),
    #[error("planner gave no reply within {0:?}")]
    Timeout(Duration),
    #[error("planner aborted the episode")]
    Aborted,
}

#[derive(Debug, thiserror::Error)]
pub enum ControlError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("task already complete")]
    Finished,
}
