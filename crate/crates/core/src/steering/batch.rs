use crate::policy::{ActionChunk, PolicyError};

/// `B` chunks at a common denoising step, with optional cached rewards and
/// normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleBatch {
    particles: Vec<ActionChunk>,
    rewards: Option<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl ParticleBatch {
    pub fn new(particles: Vec<ActionChunk>) -> Result<Self, PolicyError> {
        let first = particles
            .first()
            .ok_or_else(|| PolicyError::Config("batch needs at least one particle".into()))?;
        let (t, d) = (first.horizon(), first.dim());
        if particles.iter().any(|p| p.horizon() != t || p.dim() != d) {
            return Err(PolicyError::Config("particles differ in shape".into()));
        }
        Ok(Self {
            particles,
            rewards: None,
            weights: None,
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[ActionChunk] {
        &self.particles
    }

    pub fn into_particles(self) -> Vec<ActionChunk> {
        self.particles
    }

    pub fn rewards(&self) -> Option<&[f64]> {
        self.rewards.as_deref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn set_rewards(&mut self, rewards: Vec<f64>) {
        assert_eq!(rewards.len(), self.particles.len());
        self.rewards = Some(rewards);
    }

    /// Panics unless `weights` are nonnegative and sum to 1 within 1e-9.
    pub fn set_weights(&mut self, weights: Vec<f64>) {
        assert_eq!(weights.len(), self.particles.len());
        assert!(weights.iter().all(|w| *w >= 0.0));
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        self.weights = Some(weights);
    }

    pub fn clear_caches(&mut self) {
        self.rewards = None;
        self.weights = None;
    }

    /// Replace particle values in place; caches are dropped.
    pub fn replace(&mut self, particles: Vec<ActionChunk>) {
        assert_eq!(particles.len(), self.particles.len());
        self.particles = particles;
        self.clear_caches();
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.particles.len() as f64;
        let mut out = vec![0.0; self.particles[0].len()];
        for p in &self.particles {
            for (o, v) in out.iter_mut().zip(p.as_slice()) {
                *o += v / n;
            }
        }
        out
    }
}
