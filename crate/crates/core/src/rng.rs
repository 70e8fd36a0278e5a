//! Deterministic random streams.
//!
//! Every stochastic operation draws from a ChaCha stream derived from one root
//! seed. Particles get their own stream (indexed by particle slot) so results do
//! not depend on evaluation order; auxiliary consumers (resampling, MCMC
//! acceptance, perturbations) use reserved stream ids counted down from
//! `u64::MAX`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Reserved auxiliary stream ids.
pub const STREAM_RESAMPLE: u64 = u64::MAX;
pub const STREAM_MCMC_ACCEPT: u64 = u64::MAX - 1;
pub const STREAM_EM_INIT: u64 = u64::MAX - 2;
pub const STREAM_PERTURB: u64 = u64::MAX - 3;
pub const STREAM_DEMOS: u64 = u64::MAX - 4;

/// Root seed from which all streams of one run (or one episode) are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    root: u64,
}

impl SeedStreams {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    /// Stream owned by particle slot `index`.
    pub fn particle(&self, index: usize) -> ChaCha8Rng {
        self.stream(index as u64)
    }

    /// Arbitrary stream id.
    pub fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root);
        rng.set_stream(id);
        rng
    }

    /// One stream per particle, in slot order.
    pub fn particles(&self, count: usize) -> Vec<ChaCha8Rng> {
        (0..count).map(|i| self.particle(i)).collect()
    }

    /// Derive an independent child root (used to give each chunk of an
    /// episode fresh streams).
    pub fn child(&self, salt: u64) -> SeedStreams {
        let mut rng = self.stream(STREAM_DEMOS.wrapping_sub(1 + salt));
        SeedStreams::new(rand::Rng::gen(&mut rng))
    }
}

pub fn standard_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_standard_normal<R: rand::Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}
