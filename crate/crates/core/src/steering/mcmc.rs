use rand::Rng;

use super::{ParticleBatch, SteerError};
use crate::policy::GaussianMixturePolicy;
use crate::reward::{KeypointSet, RewardError, RewardProgram};
use crate::rng::{fill_standard_normal, SeedStreams};

/// One stage reward bound to a scene, evaluated on normalized chunks.
///
/// Values are computed on the workspace-unit chunk; gradients are returned in
/// normalized units (chain rule through the per-column action scale).
#[derive(Debug, Clone)]
pub struct StageReward<'a> {
    program: &'a RewardProgram,
    stage: usize,
    params: Vec<f64>,
    scale: Vec<f64>,
}

impl<'a> StageReward<'a> {
    pub fn new(
        program: &'a RewardProgram,
        stage: usize,
        kps: &KeypointSet,
        grip_start: &[f64],
        policy: &GaussianMixturePolicy,
    ) -> Result<Self, SteerError> {
        let d = program.dims();
        if d.horizon != policy.horizon() || d.dim != policy.dim() {
            return Err(SteerError::Config(format!(
                "reward program is {}x{} but policy is {}x{}",
                d.horizon,
                d.dim,
                policy.horizon(),
                policy.dim()
            )));
        }
        program.stage(stage)?;
        Ok(Self {
            program,
            stage,
            params: program.params(kps, grip_start)?,
            scale: policy.action_scale().to_vec(),
        })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    fn to_workspace(&self, x: &[f64]) -> Vec<f64> {
        let d = self.scale.len();
        x.iter().enumerate().map(|(i, v)| v * self.scale[i % d]).collect()
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, RewardError> {
        self.program.eval_with(self.stage, &self.to_workspace(x), &self.params)
    }

    pub fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>), RewardError> {
        let (v, mut g) = self.program.grad_with(self.stage, &self.to_workspace(x), &self.params)?;
        let d = self.scale.len();
        for (i, gi) in g.iter_mut().enumerate() {
            *gi *= self.scale[i % d];
        }
        Ok((v, g))
    }
}

/// State of one MALA chain: position, reward and reward gradient there.
#[derive(Debug, Clone)]
pub(crate) struct Chain {
    pub x: Vec<f64>,
    pub r: f64,
    pub g: Vec<f64>,
}

/// Base log-density (up to a constant) and its gradient.
pub(crate) trait BaseDensity {
    fn log_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
}

/// Isotropic Gaussian `N(mean, var I)`.
pub(crate) struct LocalGaussian<'a> {
    pub mean: &'a [f64],
    pub var: f64,
}

impl BaseDensity for LocalGaussian<'_> {
    fn log_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut q = 0.0;
        let g = x
            .iter()
            .zip(self.mean)
            .map(|(xi, m)| {
                let d = xi - m;
                q += d * d;
                -d / self.var
            })
            .collect();
        (-0.5 * q / self.var, g)
    }
}

/// Noised policy marginal at flow time `k`.
pub(crate) struct FlowMarginal<'a> {
    pub policy: &'a GaussianMixturePolicy,
    pub k: f64,
}

impl BaseDensity for FlowMarginal<'_> {
    fn log_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (c, s2) = (1.0 - self.k, self.k * self.k);
        (
            self.policy.log_density_at(x, c, s2),
            self.policy.score_at(x, c, s2),
        )
    }
}

/// Metropolis-adjusted Langevin steps on `base(x) * exp(kappa R(x))` with step `h`.
///
/// Proposals whose reward is non-finite are rejected. Returns the number of accepted moves.
pub(crate) fn mala<R: Rng + ?Sized, B: BaseDensity>(
    chain: &mut Chain,
    base: &B,
    reward: &StageReward,
    kappa: f64,
    h: f64,
    steps: usize,
    rng: &mut R,
) -> usize {
    let n = chain.x.len();
    let target = |x: &[f64], r: f64, g: &[f64]| -> (f64, Vec<f64>) {
        let (lb, gb) = base.log_grad(x);
        let grad = gb.iter().zip(g).map(|(a, b)| a + kappa * b).collect();
        (lb + kappa * r, grad)
    };
    let (mut lp, mut grad) = target(&chain.x, chain.r, &chain.g);
    let mut accepted = 0;
    let mut z = vec![0.0; n];
    let noise = (2.0 * h).sqrt();
    for _ in 0..steps {
        fill_standard_normal(rng, &mut z);
        let u: f64 = rng.gen();
        let y: Vec<f64> = (0..n)
            .map(|i| chain.x[i] + h * grad[i] + noise * z[i])
            .collect();
        let Ok((ry, gy)) = reward.value_grad(&y) else {
            continue;
        };
        let (lpy, grad_y) = target(&y, ry, &gy);
        // log q(x | y) - log q(y | x) with q(b | a) = N(b; a + h grad(a), 2h).
        let mut fwd = 0.0;
        let mut bwd = 0.0;
        for i in 0..n {
            let f = y[i] - chain.x[i] - h * grad[i];
            let b = chain.x[i] - y[i] - h * grad_y[i];
            fwd += f * f;
            bwd += b * b;
        }
        let log_alpha = lpy - lp - (bwd - fwd) / (4.0 * h);
        if log_alpha.is_finite() && u.ln() < log_alpha {
            chain.x = y;
            chain.r = ry;
            chain.g = gy;
            lp = lpy;
            grad = grad_y;
            accepted += 1;
        }
    }
    accepted
}

/// Unadjusted Langevin refinement `a <- a + eta * lambda * grad R + sqrt(2 eta) xi`
/// on every particle, with particle `i` drawing from stream `i`. Only the reward
/// gradient is used; the base policy is not consulted.
pub fn mcmc_refine(
    batch: &ParticleBatch,
    reward: &StageReward,
    lambda: f64,
    steps: usize,
    step_scale: f64,
    noise: bool,
    streams: &SeedStreams,
) -> Result<ParticleBatch, SteerError> {
    if steps == 0 {
        return Ok(batch.clone());
    }
    let scale = (2.0 * step_scale).sqrt();
    let particles = batch
        .particles()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = streams.particle(i);
            let mut x = p.as_slice().to_vec();
            let mut z = vec![0.0; x.len()];
            for _ in 0..steps {
                let (_, g) = reward.value_grad(&x)?;
                if noise {
                    fill_standard_normal(&mut rng, &mut z);
                }
                for ((xi, gi), zi) in x.iter_mut().zip(&g).zip(&z) {
                    *xi += step_scale * lambda * gi + scale * zi;
                }
            }
            Ok(p.with_values(x))
        })
        .collect::<Result<Vec<_>, SteerError>>()?;
    let mut out = batch.clone();
    out.replace(particles);
    Ok(out)
}
