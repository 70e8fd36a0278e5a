//! Fast self-checks of the numerical core, each against an oracle that does
//! not share code with the checked routine.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{schmitt_decide, PlanContext, StagePlanner, SwitchDecision};
use crate::policy::{sample_unguided, ActionChunk, Backend, FlowSchedule, GaussianMixturePolicy, MixtureComponent, NoiseSchedule};
use crate::reward::{check_grad, parse_reward, Dims, KeypointSet};
use crate::rng::SeedStreams;
use crate::steering::{fk_weights, guided_denoise, GuidanceConfig, StageReward};
use crate::world::{catalog, ground_keypoints};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail: detail.into(),
    }
}

fn random_policy(rng: &mut ChaCha8Rng, horizon: usize, dim: usize) -> GaussianMixturePolicy {
    let m = rng.gen_range(1..=3);
    let comps = (0..m)
        .map(|_| MixtureComponent {
            weight: 1.0 / m as f64,
            mean: (0..horizon * dim).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            var: (0..horizon * dim).map(|_| rng.gen_range(0.05..1.5)).collect(),
        })
        .collect();
    GaussianMixturePolicy::new(horizon, dim, comps, "check").expect("valid random policy")
}

/// Log density of `c a0 + s z`, summed per coordinate and component.
fn log_density(policy: &GaussianMixturePolicy, a: &[f64], c: f64, s2: f64) -> f64 {
    let terms: Vec<f64> = policy
        .components()
        .iter()
        .map(|comp| {
            comp.weight.ln()
                + a.iter()
                    .enumerate()
                    .map(|(i, x)| {
                        let var = c * c * comp.var[i] + s2;
                        let d = x - c * comp.mean[i];
                        -0.5 * (d * d / var + (2.0 * std::f64::consts::PI * var).ln())
                    })
                    .sum::<f64>()
        })
        .collect();
    let mx = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + terms.iter().map(|t| (t - mx).exp()).sum::<f64>().ln()
}

fn all_off_reduction() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..20 {
        let policy = random_policy(&mut rng, 2, 3);
        let backend = if case % 2 == 0 {
            Backend::Diffusion(NoiseSchedule::build(10, 1e-4, 0.2).expect("valid schedule"))
        } else {
            Backend::Flow(FlowSchedule::new(10, 1e-3).expect("valid schedule"))
        };
        let prog = parse_reward("reward: -sum_t(a[t][0] ^ 2);", Dims::new(2, 3, 0)).expect("valid program");
        let kps = KeypointSet::new(vec![]).expect("empty set");
        let Ok(reward) = StageReward::new(&prog, 1, &kps, &[0.0, 0.0], &policy) else {
            return result("all-off reduction", false, "reward setup failed");
        };
        let config = GuidanceConfig {
            batch_size: 4,
            use_rbf: false,
            use_fk: false,
            mcmc_steps: Some(0),
            ..GuidanceConfig::default()
        };
        let streams = SeedStreams::new(case);
        let (Ok(g), Ok(p)) = (
            guided_denoise(&policy, &backend, &reward, &config, 0.0, &streams),
            sample_unguided(&policy, 4, &backend, &streams),
        ) else {
            return result("all-off reduction", false, format!("case {case}: sampling failed"));
        };
        let same = g
            .batch
            .particles()
            .iter()
            .zip(p.particles())
            .all(|(x, y)| x.as_slice().iter().zip(y.as_slice()).all(|(u, v)| u.to_bits() == v.to_bits()));
        if !same {
            return result("all-off reduction", false, format!("case {case} differs"));
        }
    }
    result("all-off reduction", true, "20 cases bitwise equal")
}

fn score_vs_differences() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let policy = random_policy(&mut rng, 2, 2);
        let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (c, s2) = (rng.gen_range(0.1..1.0), rng.gen_range(0.05..1.0));
        let got = policy.score_at(&a, c, s2);
        let mut x = a.clone();
        for i in 0..a.len() {
            let h = 1e-5;
            x[i] = a[i] + h;
            let fp = log_density(&policy, &x, c, s2);
            x[i] = a[i] - h;
            let fm = log_density(&policy, &x, c, s2);
            x[i] = a[i];
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max((got[i] - fd).abs() / fd.abs().max(1e-3));
        }
    }
    result("score", worst < 1e-5, format!("50 points, worst relative error {worst:.2e}"))
}

fn catalog_reward_gradients() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut planner = catalog::scripted_planner();
    let mut worst: f64 = 0.0;
    for task in catalog::all_tasks() {
        let scene = catalog::scene_for(&task);
        let Ok(kps) = ground_keypoints(&scene, &task) else {
            return result("reward gradients", false, format!("{}: grounding failed", task.id));
        };
        let dims = Dims::new(8, scene.action_dim(), kps.len());
        let ctx = PlanContext {
            instruction: task.instruction.clone(),
            keypoints: kps.clone(),
            dims,
            history: Vec::new(),
        };
        let Ok(program) = planner.plan_stages(&ctx) else {
            return result("reward gradients", false, format!("{}: planning failed", task.id));
        };
        for s in 1..=program.stage_count() {
            let values: Vec<f64> = (0..8 * scene.action_dim()).map(|_| rng.gen_range(-0.2..0.2)).collect();
            let chunk = ActionChunk::new(8, scene.action_dim(), values).expect("shape matches");
            match check_grad(&program, s, &chunk, &kps, &scene.gripper.position, 1e-6) {
                Ok(e) => worst = worst.max(e),
                Err(e) => return result("reward gradients", false, format!("{} stage {s}: {e}", task.id)),
            }
        }
    }
    result("reward gradients", worst < 1e-4, format!("catalog programs, worst relative error {worst:.2e}"))
}

fn fk_hand_values() -> CheckResult {
    let w = fk_weights(&[0.0, 2f64.ln()]);
    let ok = (w[0] - 1.0 / 3.0).abs() < 1e-12 && (w[1] - 2.0 / 3.0).abs() < 1e-12;
    let big = fk_weights(&[1000.0, 0.0]);
    let finite = big.iter().all(|x| x.is_finite());
    result("fk weights", ok && finite, format!("{w:?}, reward 1000 -> {big:?}"))
}

fn schmitt_band() -> CheckResult {
    let ok = schmitt_decide(0.5, 0.4, -0.4) == SwitchDecision::Advance
        && schmitt_decide(-0.5, 0.4, -0.4) == SwitchDecision::Reinforce
        && schmitt_decide(0.0, 0.4, -0.4) == SwitchDecision::Maintain;
    result("schmitt trigger", ok, "above, below and inside the band")
}

/// Runs every check; takes well under a second in release builds.
pub fn run_checks() -> Vec<CheckResult> {
    vec![
        all_off_reduction(),
        score_vs_differences(),
        catalog_reward_gradients(),
        fk_hand_values(),
        schmitt_band(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for c in run_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
