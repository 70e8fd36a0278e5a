//! Frozen base policies with closed-form denoising and velocity fields.
//!
//! A policy is a diagonal Gaussian mixture over flattened action chunks. Both
//! generative processes push that mixture through a linear Gaussian channel
//! `a = c * a0 + s * z`, so the noised marginal is again a mixture and its
//! score is exact:
//!
//! * diffusion: `c = sqrt(abar_k)`, `s^2 = 1 - abar_k`, integer `k` in `1..=K`;
//! * flow: `c = 1 - k`, `s = k`, real `k` in `(0, 1]` with `k = 1` pure noise.

mod chunk;
mod document;
mod em;
mod mixture;
mod sampling;
mod schedule;

use thiserror::Error;

pub use chunk::ActionChunk;
pub use document::{ComponentDocument, PolicyDocument};
pub use em::{fit_gmm_em, EmFit, EmOptions};
pub use mixture::{GaussianMixturePolicy, MixtureComponent, DEFAULT_COV_FLOOR};
pub use sampling::{
    denoise_mean, denoise_step, flow_churn_step, flow_step, sample_unguided, Backend, BackendKind,
};
pub use schedule::{FlowSchedule, NoiseSchedule, ReverseVariance};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("no demonstrations supplied")]
    EmptyDemos,
    #[error("malformed policy document: {0}")]
    Document(#[from] serde_json::Error),
}
