use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActionChunk, FlowSchedule, GaussianMixturePolicy, NoiseSchedule, PolicyError};
use crate::rng::{fill_standard_normal, SeedStreams};
use crate::steering::ParticleBatch;

/// Generative process used to draw chunks from a policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Diffusion(NoiseSchedule),
    Flow(FlowSchedule),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Diffusion,
    Flow,
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Diffusion(_) => BackendKind::Diffusion,
            Backend::Flow(_) => BackendKind::Flow,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Backend::Diffusion(s) => s.steps(),
            Backend::Flow(f) => f.steps,
        }
    }
}

/// One reverse update `a_{k-1} = (a_k - (1-alpha_k)/sqrt(1-abar_k) eps)/sqrt(alpha_k) + sigma_k z`.
///
/// `z` is drawn only when `sigma_k > 0`.
pub fn denoise_step<R: Rng + ?Sized>(
    a: &[f64],
    eps_hat: &[f64],
    k: usize,
    sched: &NoiseSchedule,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = denoise_mean(a, eps_hat, k, sched);
    let sigma = sched.sigma(k);
    if sigma > 0.0 {
        let mut z = vec![0.0; out.len()];
        fill_standard_normal(rng, &mut z);
        for (o, zi) in out.iter_mut().zip(&z) {
            *o += sigma * zi;
        }
    }
    out
}

/// Deterministic part of [`denoise_step`].
pub fn denoise_mean(a: &[f64], eps_hat: &[f64], k: usize, sched: &NoiseSchedule) -> Vec<f64> {
    assert_eq!(a.len(), eps_hat.len(), "shape mismatch");
    let alpha = sched.alpha(k);
    let coef = (1.0 - alpha) / (1.0 - sched.alpha_bar(k)).sqrt();
    let inv = 1.0 / alpha.sqrt();
    a.iter()
        .zip(eps_hat)
        .map(|(x, e)| (x - coef * e) * inv)
        .collect()
}

/// Euler step toward the clean end: `a - dk * v`.
pub fn flow_step(a: &[f64], v_hat: &[f64], dk: f64) -> Vec<f64> {
    assert_eq!(a.len(), v_hat.len(), "shape mismatch");
    a.iter().zip(v_hat).map(|(x, v)| x - dk * v).collect()
}

/// Euler-Maruyama step that keeps the flow marginals, with diffusion
/// coefficient `churn * k` and the score implied by `v_hat`.
pub fn flow_churn_step<R: Rng + ?Sized>(
    a: &[f64],
    v_hat: &[f64],
    k: f64,
    dk: f64,
    churn: f64,
    rng: &mut R,
) -> Vec<f64> {
    let g2 = churn * k;
    let noise = (g2 * dk).sqrt();
    let mut z = vec![0.0; a.len()];
    fill_standard_normal(rng, &mut z);
    a.iter()
        .zip(v_hat)
        .zip(&z)
        .map(|((x, v), zi)| {
            let score = -(x + (1.0 - k) * v) / k;
            x - dk * v + 0.5 * g2 * dk * score + noise * zi
        })
        .collect()
}

/// One particle's reverse pass from its own stream.
fn sample_one<R: Rng + ?Sized>(
    policy: &GaussianMixturePolicy,
    backend: &Backend,
    rng: &mut R,
) -> Result<Vec<f64>, PolicyError> {
    let mut x = vec![0.0; policy.model_dim()];
    fill_standard_normal(rng, &mut x);
    match backend {
        Backend::Diffusion(sched) => {
            for k in (1..=sched.steps()).rev() {
                let eps = policy.epsilon(&x, k, sched);
                x = denoise_step(&x, &eps, k, sched, rng);
            }
        }
        Backend::Flow(flow) => {
            flow.validate()?;
            let grid = flow.grid();
            for j in 0..flow.steps {
                let (k, dk) = (grid[j], grid[j] - grid[j + 1]);
                let v = policy.velocity(&x, k)?;
                x = if flow.churn > 0.0 {
                    flow_churn_step(&x, &v, k, dk, flow.churn, rng)
                } else {
                    flow_step(&x, &v, dk)
                };
            }
        }
    }
    Ok(x)
}

/// `count` independent clean chunks in normalized units; particle `i` consumes
/// only stream `i` of `streams`.
pub fn sample_unguided(
    policy: &GaussianMixturePolicy,
    count: usize,
    backend: &Backend,
    streams: &SeedStreams,
) -> Result<ParticleBatch, PolicyError> {
    if count == 0 {
        return Err(PolicyError::Config("batch size must be at least 1".into()));
    }
    let particles = (0..count)
        .map(|i| {
            let mut rng = streams.particle(i);
            let x = sample_one(policy, backend, &mut rng)?;
            ActionChunk::new(policy.horizon(), policy.dim(), x)
        })
        .collect::<Result<Vec<_>, _>>()?;
    ParticleBatch::new(particles)
}
