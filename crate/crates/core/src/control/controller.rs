use serde::{Deserialize, Serialize};

use super::{
    adaptive_lambda_with, schmitt_decide, ControlError, LambdaConvention, PlanContext, Recovery,
    StagePlanner, SwitchDecision,
};
use crate::reward::RewardProgram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub lambda_max: f64,
    pub retry_limit: usize,
    pub reinforce_factor: f64,
    pub convention: LambdaConvention,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            lambda_max: 1.0,
            retry_limit: 3,
            reinforce_factor: 1.5,
            convention: LambdaConvention::Corrected,
        }
    }
}

/// Closed-loop stage machine state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageState {
    /// 1-based.
    pub stage: usize,
    pub stage_count: usize,
    /// Reward of the first chunk executed in this stage.
    pub r_base: Option<f64>,
    pub r_high: f64,
    pub r_low: f64,
    pub lambda: f64,
    pub reinforce_count: usize,
    /// Rewards observed in this stage, oldest first.
    pub history: Vec<f64>,
    pub complete: bool,
}

impl StageState {
    /// Stage 1 of `program` at the neutral guidance strength `lambda_max / 2`.
    pub fn start(program: &RewardProgram, config: &ControllerConfig) -> Self {
        let mut s = Self {
            stage: 1,
            stage_count: program.stage_count(),
            r_base: None,
            r_high: 0.0,
            r_low: 0.0,
            lambda: config.lambda_max / 2.0,
            reinforce_count: 0,
            history: Vec::new(),
            complete: false,
        };
        s.enter(1, program, config);
        s
    }

    fn enter(&mut self, stage: usize, program: &RewardProgram, config: &ControllerConfig) {
        let st = &program.stages()[stage - 1];
        self.stage = stage;
        self.stage_count = program.stage_count();
        self.r_high = st.high;
        self.r_low = st.low;
        self.r_base = None;
        self.lambda = config.lambda_max / 2.0;
        self.reinforce_count = 0;
        self.history.clear();
    }
}

/// What one controller step did.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStep {
    pub decision: SwitchDecision,
    /// Set when the planner replaced the program.
    pub program: Option<RewardProgram>,
    /// Set when the retry budget was exhausted and the stage restarted.
    pub restarted: bool,
}

/// Feed the reward of the chunk just executed into the stage machine.
///
/// Advance moves to the next stage (or marks completion after the last) and
/// notifies the planner. Maintain recomputes lambda from progress against the
/// stage baseline. Reinforce multiplies lambda by `reinforce_factor` up to
/// `lambda_max`; past `retry_limit` reinforcements the planner decides
/// between restarting the stage and aborting.
pub fn step_controller(
    state: &mut StageState,
    r_t: f64,
    planner: &mut dyn StagePlanner,
    program: &RewardProgram,
    ctx: &PlanContext,
    config: &ControllerConfig,
) -> Result<ControlStep, ControlError> {
    if state.complete {
        return Err(ControlError::Finished);
    }
    if !r_t.is_finite() {
        return Err(ControlError::NonFiniteReward(r_t));
    }
    state.history.push(r_t);
    let r_base = *state.r_base.get_or_insert(r_t);
    let decision = schmitt_decide(r_t, state.r_high, state.r_low);
    let mut out = ControlStep {
        decision,
        program: None,
        restarted: false,
    };
    match decision {
        SwitchDecision::Advance => {
            if state.stage == state.stage_count {
                state.complete = true;
                return Ok(out);
            }
            let ctx = PlanContext {
                history: state.history.clone(),
                ..ctx.clone()
            };
            let replaced = planner.next_stage(&ctx, state.stage)?;
            let next = state.stage + 1;
            let prog = replaced.as_ref().unwrap_or(program);
            if prog.stage_count() < next {
                return Err(ControlError::Plan(super::PlanError::Protocol(format!(
                    "replacement program has {} stages, need at least {next}",
                    prog.stage_count()
                ))));
            }
            state.enter(next, prog, config);
            out.program = replaced;
        }
        SwitchDecision::Maintain => {
            state.lambda =
                adaptive_lambda_with(config.convention, r_t, r_base, state.r_low, config.lambda_max);
        }
        SwitchDecision::Reinforce => {
            state.lambda = (state.lambda * config.reinforce_factor).min(config.lambda_max);
            state.reinforce_count += 1;
            if state.reinforce_count > config.retry_limit {
                let ctx = PlanContext {
                    history: state.history.clone(),
                    ..ctx.clone()
                };
                match planner.recover(&ctx, state.stage)? {
                    Recovery::RestartStage => {
                        state.enter(state.stage, program, config);
                        out.restarted = true;
                    }
                    Recovery::Abort => return Err(ControlError::Plan(super::PlanError::Aborted)),
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{PlanError, ScriptedPlanner};
    use crate::reward::{parse_reward, Dims, KeypointSet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn program(stages: usize) -> RewardProgram {
        let text: String = (0..stages)
            .map(|i| format!("stage s{i} {{ reward: -norm2(cum(a)[T-1]); high: -0.05; low: -0.5; }}\n"))
            .collect();
        parse_reward(&text, Dims::new(2, 3, 0)).unwrap()
    }

    fn ctx() -> PlanContext {
        PlanContext {
            instruction: String::new(),
            keypoints: KeypointSet::new(vec![]).unwrap(),
            dims: Dims::new(2, 3, 0),
            history: vec![],
        }
    }

    #[test]
    fn terminal_advance_completes() {
        let p = program(1);
        let cfg = ControllerConfig::default();
        let mut st = StageState::start(&p, &cfg);
        let out = step_controller(&mut st, 0.0, &mut ScriptedPlanner::default(), &p, &ctx(), &cfg).unwrap();
        assert_eq!(out.decision, SwitchDecision::Advance);
        assert!(st.complete);
        assert!(matches!(
            step_controller(&mut st, 0.0, &mut ScriptedPlanner::default(), &p, &ctx(), &cfg),
            Err(ControlError::Finished)
        ));
    }

    #[test]
    fn advance_resets_stage_state() {
        let p = program(2);
        let cfg = ControllerConfig::default();
        let mut st = StageState::start(&p, &cfg);
        let mut pl = ScriptedPlanner::default();
        step_controller(&mut st, -0.3, &mut pl, &p, &ctx(), &cfg).unwrap();
        assert_eq!(st.r_base, Some(-0.3));
        step_controller(&mut st, -0.01, &mut pl, &p, &ctx(), &cfg).unwrap();
        assert_eq!((st.stage, st.r_base, st.history.len()), (2, None, 0));
        assert!(!st.complete);
    }

    #[test]
    fn improving_maintain_never_raises_lambda() {
        let p = program(1);
        let cfg = ControllerConfig::default();
        let mut st = StageState::start(&p, &cfg);
        let mut pl = ScriptedPlanner::default();
        let mut last = f64::INFINITY;
        for r in [-0.4, -0.3, -0.2] {
            let out = step_controller(&mut st, r, &mut pl, &p, &ctx(), &cfg).unwrap();
            assert_eq!(out.decision, SwitchDecision::Maintain);
            assert!(st.lambda <= last);
            last = st.lambda;
        }
    }

    #[test]
    fn reinforce_clamps_and_counts_then_restarts() {
        let p = program(1);
        let cfg = ControllerConfig::default();
        let mut st = StageState::start(&p, &cfg);
        st.lambda = cfg.lambda_max;
        let mut pl = ScriptedPlanner::default();
        for i in 1..=cfg.retry_limit {
            let out = step_controller(&mut st, -0.9, &mut pl, &p, &ctx(), &cfg).unwrap();
            assert_eq!(out.decision, SwitchDecision::Reinforce);
            assert_eq!(st.lambda, cfg.lambda_max);
            assert_eq!(st.reinforce_count, i);
        }
        let out = step_controller(&mut st, -0.9, &mut pl, &p, &ctx(), &cfg).unwrap();
        assert!(out.restarted);
        assert_eq!((st.stage, st.reinforce_count, st.r_base), (1, 0, None));
    }

    struct Failing;
    impl StagePlanner for Failing {
        fn plan_stages(&mut self, _: &PlanContext) -> Result<RewardProgram, PlanError> {
            Err(PlanError::Aborted)
        }
        fn next_stage(&mut self, _: &PlanContext, _: usize) -> Result<Option<RewardProgram>, PlanError> {
            Err(PlanError::Protocol("down".into()))
        }
    }

    #[test]
    fn planner_failure_propagates() {
        let p = program(2);
        let cfg = ControllerConfig::default();
        let mut st = StageState::start(&p, &cfg);
        assert!(matches!(
            step_controller(&mut st, 0.0, &mut Failing, &p, &ctx(), &cfg),
            Err(ControlError::Plan(_))
        ));
    }

    #[test]
    fn in_band_traces_only_maintain() {
        let p = program(3);
        let cfg = ControllerConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let mut st = StageState::start(&p, &cfg);
            for _ in 0..rng.gen_range(1..60) {
                let r = rng.gen_range(st.r_low..=st.r_high);
                let out = step_controller(&mut st, r, &mut ScriptedPlanner::default(), &p, &ctx(), &cfg).unwrap();
                assert_eq!(out.decision, SwitchDecision::Maintain);
                assert_eq!(st.stage, 1);
                assert!(st.lambda > 0.0 && st.lambda <= cfg.lambda_max);
            }
        }
    }
}
