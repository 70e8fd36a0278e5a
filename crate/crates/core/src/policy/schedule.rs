use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Choice of per-step reverse noise scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReverseVariance {
    /// `sigma_k^2 = beta_k`. Exact reverse variance for unit-variance data.
    #[default]
    Beta,
    /// `sigma_k^2 = beta_k (1 - abar_{k-1}) / (1 - abar_k)`.
    Posterior,
}

/// Discrete DDPM noise schedule indexed by `k = 1..=K` (`k = K` is pure noise).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    sigmas: Vec<f64>,
    variance: ReverseVariance,
}

impl NoiseSchedule {
    /// Linear beta schedule with `sigma_k^2 = beta_k`.
    pub fn build(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, PolicyError> {
        Self::build_with(steps, beta_min, beta_max, ReverseVariance::Beta)
    }

    pub fn build_with(
        steps: usize,
        beta_min: f64,
        beta_max: f64,
        variance: ReverseVariance,
    ) -> Result<Self, PolicyError> {
        if steps == 0 {
            return Err(PolicyError::Config("schedule needs at least one step".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(PolicyError::Config(format!(
                "beta bounds must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let betas = if steps == 1 {
            vec![beta_min]
        } else {
            (0..steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas, variance)
    }

    pub fn from_betas(betas: Vec<f64>, variance: ReverseVariance) -> Result<Self, PolicyError> {
        if betas.is_empty() {
            return Err(PolicyError::Config("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(PolicyError::Config(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        let sigmas = (0..betas.len())
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                match variance {
                    ReverseVariance::Beta => betas[i].sqrt(),
                    ReverseVariance::Posterior => {
                        (betas[i] * (1.0 - alpha_bars[i - 1]) / (1.0 - alpha_bars[i])).sqrt()
                    }
                }
            })
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            sigmas,
            variance,
        })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn variance(&self) -> ReverseVariance {
        self.variance
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta(&self, k: usize) -> f64 {
        self.betas[k - 1]
    }

    pub fn alpha(&self, k: usize) -> f64 {
        1.0 - self.betas[k - 1]
    }

    /// Cumulative product; `alpha_bar(0) == 1`.
    pub fn alpha_bar(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.alpha_bars[k - 1]
        }
    }

    pub fn sigma(&self, k: usize) -> f64 {
        self.sigmas[k - 1]
    }
}

/// Uniform Euler grid for flow sampling from `k = 1` down to `k_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSchedule {
    pub steps: usize,
    pub k_min: f64,
    /// Diffusion coefficient of the stochastic variant; `0` gives the plain ODE.
    #[serde(default)]
    pub churn: f64,
}

impl FlowSchedule {
    pub fn new(steps: usize, k_min: f64) -> Result<Self, PolicyError> {
        let s = Self {
            steps,
            k_min,
            churn: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_churn(mut self, churn: f64) -> Result<Self, PolicyError> {
        self.churn = churn;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.steps == 0 {
            return Err(PolicyError::Config("flow needs at least one step".into()));
        }
        if !(self.k_min > 0.0 && self.k_min < 1.0) {
            return Err(PolicyError::Config(format!("k_min {} outside (0, 1)", self.k_min)));
        }
        if !(self.churn >= 0.0 && self.churn.is_finite()) {
            return Err(PolicyError::Config("churn must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Grid points `k_0 = 1 > k_1 > ... > k_steps = k_min`.
    pub fn grid(&self) -> Vec<f64> {
        let dk = (1.0 - self.k_min) / self.steps as f64;
        (0..=self.steps)
            .map(|j| if j == self.steps { self.k_min } else { 1.0 - j as f64 * dk })
            .collect()
    }
}

impl Default for FlowSchedule {
    fn default() -> Self {
        Self {
            steps: 32,
            k_min: 1e-3,
            churn: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_schedule() {
        let s = NoiseSchedule::build(1, 0.1, 0.1).unwrap();
        assert!((s.alpha(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn two_step_cumulative_product() {
        let s = NoiseSchedule::build(2, 0.1, 0.2).unwrap();
        assert!((s.alpha_bar(1) - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2) - 0.72).abs() < 1e-15);
        assert_eq!(s.alpha_bar(0), 1.0);
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(NoiseSchedule::build(0, 0.1, 0.2).is_err());
        assert!(NoiseSchedule::build(4, 0.0, 0.2).is_err());
        assert!(NoiseSchedule::build(4, 0.3, 0.2).is_err());
        assert!(NoiseSchedule::build(4, 0.1, 1.0).is_err());
    }

    #[test]
    fn posterior_variance_variant() {
        let s = NoiseSchedule::build_with(3, 0.1, 0.3, ReverseVariance::Posterior).unwrap();
        let expect = (0.3 * (1.0 - s.alpha_bar(2)) / (1.0 - s.alpha_bar(3))).sqrt();
        assert!((s.sigma(3) - expect).abs() < 1e-15);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn flow_grid_endpoints() {
        let f = FlowSchedule::new(4, 1e-3).unwrap();
        let g = f.grid();
        assert_eq!(g.len(), 5);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[4], 1e-3);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    proptest::proptest! {
        #[test]
        fn alpha_bar_strictly_decreasing(k in 1usize..200, lo in 1e-5f64..0.5, span in 0.0f64..0.49) {
            let hi = (lo + span).min(0.999);
            let s = NoiseSchedule::build(k, lo, hi).unwrap();
            for i in 1..=k {
                proptest::prop_assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
            }
            proptest::prop_assert_eq!(s.sigma(1), 0.0);
        }
    }
}
