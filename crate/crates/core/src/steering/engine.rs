use serde::Serialize;

use super::fk::{effective_sample_size, multinomial_indices, normalize_log_weights};
use super::guidance::{apply_diffusion_guidance, apply_flow_guidance};
use super::mcmc::{mala, Chain, FlowMarginal, LocalGaussian, StageReward};
use super::repulsion::rbf_repulsion_grad;
use super::{FkMode, GuidanceConfig, ParticleBatch, SteerError};
use crate::numeric::{mean, quantile};
use crate::policy::{
    denoise_mean, denoise_step, flow_churn_step, flow_step, ActionChunk, Backend,
    GaussianMixturePolicy,
};
use crate::rng::{fill_standard_normal, SeedStreams, STREAM_RESAMPLE};

/// One row per denoising step plus a final row for the clean batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepDiagnostics {
    /// Steps taken so far, counted from the noisy end.
    pub step: usize,
    /// Diffusion step `k` or flow time.
    pub level: f64,
    pub reward_min: f64,
    pub reward_q25: f64,
    pub reward_mean: f64,
    pub reward_q75: f64,
    pub reward_max: f64,
    pub ess: f64,
    pub resampled: bool,
    pub mcmc_accept: f64,
}

impl StepDiagnostics {
    pub const CSV_HEADER: &'static str =
        "step,level,reward_min,reward_q25,reward_mean,reward_q75,reward_max,ess,resampled,mcmc_accept";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.level,
            self.reward_min,
            self.reward_q25,
            self.reward_mean,
            self.reward_q75,
            self.reward_max,
            self.ess,
            self.resampled as u8,
            self.mcmc_accept
        )
    }
}

#[derive(Debug, Clone)]
pub struct GuidedOutput {
    /// Highest final reward, lowest index on ties, in workspace units.
    pub best: ActionChunk,
    pub best_index: usize,
    /// Clean particles in normalized units with final rewards cached.
    pub batch: ParticleBatch,
    pub final_rewards: Vec<f64>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// One transition of the reverse process.
#[derive(Debug, Clone, Copy)]
enum Move {
    Diffusion { k: usize },
    Flow { k: f64, dk: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Level {
    mv: Move,
    /// Potential temperature at the start and end of the move.
    tau_from: f64,
    tau_to: f64,
}

fn flow_tau(k: f64) -> f64 {
    let c = (1.0 - k) * (1.0 - k);
    c / (c + k * k)
}

fn plan(backend: &Backend, anneal: bool) -> Vec<Level> {
    let t = |x: f64| if anneal { x } else { 1.0 };
    match backend {
        Backend::Diffusion(s) => (1..=s.steps())
            .rev()
            .map(|k| Level {
                mv: Move::Diffusion { k },
                tau_from: t(s.alpha_bar(k)),
                tau_to: t(s.alpha_bar(k - 1)),
            })
            .collect(),
        Backend::Flow(f) => {
            let g = f.grid();
            (0..f.steps)
                .map(|j| Level {
                    mv: Move::Flow {
                        k: g[j],
                        dk: g[j] - g[j + 1],
                    },
                    tau_from: t(flow_tau(g[j])),
                    tau_to: if j + 1 == f.steps { 1.0 } else { t(flow_tau(g[j + 1])) },
                })
                .collect()
        }
    }
}

struct Particle {
    chain: Chain,
    log_w: f64,
}

impl Clone for Particle {
    fn clone(&self) -> Self {
        Self {
            chain: self.chain.clone(),
            log_w: self.log_w,
        }
    }
}

fn gaussian_log_ratio(y: &[f64], m_b: &[f64], m_q: &[f64], var: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..y.len() {
        let b = y[i] - m_b[i];
        let q = y[i] - m_q[i];
        acc += q * q - b * b;
    }
    acc / (2.0 * var)
}

fn churn_mean(x: &[f64], v: &[f64], k: f64, dk: f64, churn: f64) -> Vec<f64> {
    let g2 = churn * k;
    x.iter()
        .zip(v)
        .map(|(xi, vi)| {
            let score = -(xi + (1.0 - k) * vi) / k;
            xi - dk * vi + 0.5 * g2 * dk * score
        })
        .collect()
}

fn stats(step: usize, level: f64, r: &[f64], ess: f64, resampled: bool, acc: f64) -> StepDiagnostics {
    StepDiagnostics {
        step,
        level,
        reward_min: r.iter().copied().fold(f64::INFINITY, f64::min),
        reward_q25: quantile(r, 0.25),
        reward_mean: mean(r),
        reward_q75: quantile(r, 0.75),
        reward_max: r.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ess,
        resampled,
        mcmc_accept: acc,
    }
}

/// Reward-steered sampling of one action chunk batch.
///
/// Per step: base prediction, Feynman-Kac weighting and optional resampling,
/// guided proposal (reward gradient scaled by `lambda` minus repulsion), then
/// MALA refinement. Particle `i` draws only from stream `i` of `streams`;
/// resampling draws from a reserved stream.
pub fn guided_denoise(
    policy: &GaussianMixturePolicy,
    backend: &Backend,
    reward: &StageReward,
    config: &GuidanceConfig,
    lambda: f64,
    streams: &SeedStreams,
) -> Result<GuidedOutput, SteerError> {
    config.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SteerError::Config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let corrected = config.use_fk && config.fk_mode == FkMode::Corrected;
    if let Backend::Flow(f) = backend {
        f.validate()?;
        if corrected && f.churn == 0.0 {
            return Err(SteerError::Config(
                "corrected FK weights need a stochastic flow sampler (churn > 0)".into(),
            ));
        }
    }
    let b = config.batch_size;
    let n = policy.model_dim();
    let mcmc_steps = config.mcmc_steps_for(backend.kind());
    let guide = config.use_gradient && lambda > 0.0;
    let need_grad = guide || mcmc_steps > 0;
    let beta = config.fk_beta;
    let levels = plan(backend, config.fk_anneal);
    let rbf_steps = (config.rbf_window * levels.len() as f64).ceil() as usize;

    let eval = |x: &[f64]| -> Result<(f64, Vec<f64>), SteerError> {
        if need_grad {
            Ok(reward.value_grad(x)?)
        } else {
            Ok((reward.value(x)?, Vec::new()))
        }
    };

    let mut rngs = streams.particles(b);
    let mut resample_rng = streams.stream(STREAM_RESAMPLE);
    let mut ps = Vec::with_capacity(b);
    for rng in rngs.iter_mut() {
        let mut x = vec![0.0; n];
        fill_standard_normal(rng, &mut x);
        let (r, g) = eval(&x)?;
        let log_w = if corrected { beta * levels[0].tau_from * r } else { 0.0 };
        ps.push(Particle {
            chain: Chain { x, r, g },
            log_w,
        });
    }

    let mut diags = Vec::with_capacity(levels.len() + 1);
    let mut since_resample = 0usize;
    for (j, lvl) in levels.iter().enumerate() {
        // Base prediction at the current level.
        let preds: Vec<Vec<f64>> = ps
            .iter()
            .map(|p| match (lvl.mv, backend) {
                (Move::Diffusion { k }, Backend::Diffusion(s)) => Ok(policy.epsilon(&p.chain.x, k, s)),
                (Move::Flow { k, .. }, _) => policy.velocity(&p.chain.x, k),
                _ => unreachable!("plan matches backend"),
            })
            .collect::<Result<_, _>>()?;

        // Reward used for literal weights and for the guidance gradient.
        let clean_eval = config.reward_on_clean_estimate && !corrected;
        let evals: Vec<(f64, Vec<f64>)> = if clean_eval {
            ps.iter()
                .zip(&preds)
                .map(|(p, pred)| {
                    let x0: Vec<f64> = match (lvl.mv, backend) {
                        (Move::Diffusion { k }, Backend::Diffusion(s)) => {
                            let ab = s.alpha_bar(k);
                            let (c, sd) = (1.0 / ab.sqrt(), (1.0 - ab).sqrt());
                            p.chain.x.iter().zip(pred).map(|(x, e)| (x - sd * e) * c).collect()
                        }
                        (Move::Flow { k, .. }, _) => {
                            p.chain.x.iter().zip(pred).map(|(x, v)| x - k * v).collect()
                        }
                        _ => unreachable!(),
                    };
                    eval(&x0)
                })
                .collect::<Result<_, _>>()?
        } else {
            ps.iter().map(|p| (p.chain.r, p.chain.g.clone())).collect()
        };
        let rewards: Vec<f64> = evals.iter().map(|e| e.0).collect();

        // Weighting and resampling.
        let log_w: Vec<f64> = if corrected {
            ps.iter().map(|p| p.log_w).collect()
        } else {
            rewards.iter().map(|r| beta * r).collect()
        };
        let w = normalize_log_weights(&log_w);
        let ess = effective_sample_size(&w);
        let mut resampled = false;
        let (mut ps_cur, mut preds, mut evals) = (ps, preds, evals);
        if config.use_fk
            && (ess < config.ess_threshold * b as f64 || (j > 0 && since_resample >= config.fk_period))
        {
            let idx = multinomial_indices(&w, &mut resample_rng);
            ps_cur = idx.iter().map(|&i| ps_cur[i].clone()).collect();
            preds = idx.iter().map(|&i| preds[i].clone()).collect();
            evals = idx.iter().map(|&i| evals[i].clone()).collect();
            for p in ps_cur.iter_mut() {
                p.log_w = 0.0;
            }
            resampled = true;
            since_resample = 0;
        }
        since_resample += 1;

        // Guidance direction: lambda * grad R minus repulsion.
        let mut dirs: Vec<Option<Vec<f64>>> = vec![None; b];
        if guide {
            for (d, e) in dirs.iter_mut().zip(&evals) {
                *d = Some(e.1.iter().map(|g| lambda * g).collect());
            }
        }
        if config.use_rbf && config.rbf_strength > 0.0 && j < rbf_steps && b > 1 {
            let xs: Vec<&[f64]> = ps_cur.iter().map(|p| p.chain.x.as_slice()).collect();
            let rep = rbf_repulsion_grad(&xs, config.rbf_epsilon);
            for (d, r) in dirs.iter_mut().zip(rep) {
                let v = d.get_or_insert_with(|| vec![0.0; n]);
                for (vi, ri) in v.iter_mut().zip(r) {
                    *vi -= config.rbf_strength * ri;
                }
            }
        }

        // Propose, correct, refine.
        let mut accepted = 0usize;
        let mut next = Vec::with_capacity(b);
        for (i, p) in ps_cur.into_iter().enumerate() {
            let rng = &mut rngs[i];
            let x = &p.chain.x;
            let pred = &preds[i];
            let (y, m_b, m_q, var) = match (lvl.mv, backend) {
                (Move::Diffusion { k }, Backend::Diffusion(s)) => {
                    let eps_hat = match &dirs[i] {
                        Some(g) => apply_diffusion_guidance(pred, g, 1.0, k, s),
                        None => pred.clone(),
                    };
                    let y = denoise_step(x, &eps_hat, k, s, rng);
                    let sigma = s.sigma(k);
                    if sigma > 0.0 && (corrected || mcmc_steps > 0) {
                        let m_b = denoise_mean(x, pred, k, s);
                        let m_q = if dirs[i].is_some() { denoise_mean(x, &eps_hat, k, s) } else { m_b.clone() };
                        (y, Some(m_b), Some(m_q), sigma * sigma)
                    } else {
                        (y, None, None, sigma * sigma)
                    }
                }
                (Move::Flow { k, dk }, Backend::Flow(f)) => {
                    // Corrected mode scales the direction by the churn variance
                    // rate so the mean shift equals `var * dir`, the exact tilt
                    // of the transition kernel by a linear reward.
                    let scale = if corrected { f.churn * k } else { 1.0 };
                    let v_hat = match &dirs[i] {
                        Some(g) => {
                            let neg: Vec<f64> = g.iter().map(|v| -scale * v).collect();
                            apply_flow_guidance(pred, &neg, 1.0)
                        }
                        None => pred.clone(),
                    };
                    if f.churn > 0.0 {
                        let y = flow_churn_step(x, &v_hat, k, dk, f.churn, rng);
                        let m_b = churn_mean(x, pred, k, dk, f.churn);
                        let m_q = if dirs[i].is_some() { churn_mean(x, &v_hat, k, dk, f.churn) } else { m_b.clone() };
                        (y, Some(m_b), Some(m_q), f.churn * k * dk)
                    } else {
                        (flow_step(x, &v_hat, dk), None, None, 0.0)
                    }
                }
                _ => unreachable!(),
            };
            let (ry, gy) = eval(&y)?;
            let mut log_w = p.log_w;
            if corrected {
                if let (Some(mb), Some(mq)) = (&m_b, &m_q) {
                    log_w += gaussian_log_ratio(&y, mb, mq, var);
                }
                log_w += beta * (lvl.tau_to * ry - lvl.tau_from * p.chain.r);
            }
            let mut chain = Chain { x: y, r: ry, g: gy };
            if mcmc_steps > 0 {
                let kappa = if corrected {
                    beta * lvl.tau_to
                } else {
                    lambda
                };
                if let Some(mb) = &m_b {
                    let h = config.mcmc_step_scale * var;
                    let base = LocalGaussian { mean: mb, var };
                    accepted += mala(&mut chain, &base, reward, kappa, h, mcmc_steps, rng);
                } else if let (Move::Flow { k, dk }, false) = (lvl.mv, corrected) {
                    let k_next = k - dk;
                    let h = config.mcmc_step_scale * k_next * k_next;
                    let base = FlowMarginal { policy, k: k_next };
                    accepted += mala(&mut chain, &base, reward, kappa, h, mcmc_steps, rng);
                }
            }
            next.push(Particle { chain, log_w });
        }
        ps = next;
        let level = match lvl.mv {
            Move::Diffusion { k } => k as f64,
            Move::Flow { k, .. } => k,
        };
        let acc = if mcmc_steps > 0 { accepted as f64 / (b * mcmc_steps) as f64 } else { 0.0 };
        diags.push(stats(j, level, &rewards, ess, resampled, acc));
    }

    // Clean end.
    let mut final_resampled = false;
    let log_w: Vec<f64> = ps.iter().map(|p| p.log_w).collect();
    let w = normalize_log_weights(&log_w);
    let ess = effective_sample_size(&w);
    if corrected {
        let idx = multinomial_indices(&w, &mut resample_rng);
        ps = idx.iter().map(|&i| ps[i].clone()).collect();
        final_resampled = true;
    }
    let final_rewards: Vec<f64> = ps.iter().map(|p| p.chain.r).collect();
    diags.push(stats(levels.len(), 0.0, &final_rewards, ess, final_resampled, 0.0));

    let best_index = final_rewards
        .iter()
        .enumerate()
        .fold(0, |best, (i, r)| if *r > final_rewards[best] { i } else { best });
    let chunks = ps
        .into_iter()
        .map(|p| ActionChunk::new(policy.horizon(), policy.dim(), p.chain.x))
        .collect::<Result<Vec<_>, _>>()?;
    let best = policy.to_workspace(chunks[best_index].as_slice());
    let mut batch = ParticleBatch::new(chunks)?;
    batch.set_rewards(final_rewards.clone());
    Ok(GuidedOutput {
        best,
        best_index,
        batch,
        final_rewards,
        diagnostics: diags,
    })
}
