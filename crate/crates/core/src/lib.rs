//! Inference-time steering of frozen action policies.
//!
//! A frozen mixture policy proposes action chunks by reverse diffusion or by
//! flow integration. Stage-wise reward programs written in a small DSL are
//! differentiated on a tape and steer the sampler through gradient guidance,
//! inverse-distance repulsion, MALA refinement and Feynman-Kac resampling. A
//! closed-loop controller adapts the guidance scale and switches stages with
//! a two-threshold trigger, and a kinematic tabletop with a benchmark harness
//! closes the loop.
//!
//! Every random draw comes from [`rng::SeedStreams`], so a root seed fixes
//! every output regardless of thread count.

pub mod bench;
pub mod checks;
pub mod control;
pub mod numeric;
pub mod policy;
pub mod reward;
pub mod rng;
pub mod steering;
pub mod world;
