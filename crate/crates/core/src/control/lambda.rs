use serde::{Deserialize, Serialize};

use crate::numeric::sigmoid;

/// Below this magnitude a baseline reward cannot normalize progress.
pub const BASE_GUARD: f64 = 1e-6;

/// Which progress ratio feeds the sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaConvention {
    /// `rho = R_t / R_base`. Grows with progress only for positive rewards.
    Literal,
    /// `rho = 1 + (R_t - R_base) / |R_base - R_low|`, clamped to `[0, 2]`.
    /// Increasing in `R_t` for any reward sign.
    #[default]
    Corrected,
}

/// `lambda_max * sigmoid(1 - R_t / R_base)`, or `lambda_max / 2` when `|R_base| < 1e-6`.
pub fn adaptive_lambda(r_t: f64, r_base: f64, lambda_max: f64) -> f64 {
    if r_base.abs() < BASE_GUARD {
        return lambda_max / 2.0;
    }
    lambda_max * sigmoid(1.0 - r_t / r_base)
}

/// Guidance strength that shrinks as `r_t` improves on the stage baseline.
///
/// When `r_base > r_low` the ratio is `(R_t - R_low) / (R_base - R_low)`.
pub fn adaptive_lambda_corrected(r_t: f64, r_base: f64, r_low: f64, lambda_max: f64) -> f64 {
    let span = (r_base - r_low).abs();
    if span < BASE_GUARD {
        return lambda_max / 2.0;
    }
    let rho = (1.0 + (r_t - r_base) / span).clamp(0.0, 2.0);
    lambda_max * sigmoid(1.0 - rho)
}

pub fn adaptive_lambda_with(
    convention: LambdaConvention,
    r_t: f64,
    r_base: f64,
    r_low: f64,
    lambda_max: f64,
) -> f64 {
    match convention {
        LambdaConvention::Literal => adaptive_lambda(r_t, r_base, lambda_max),
        LambdaConvention::Corrected => adaptive_lambda_corrected(r_t, r_base, r_low, lambda_max),
    }
}
