use serde::{Deserialize, Serialize};

use super::{ActionChunk, NoiseSchedule, PolicyError};
use crate::numeric::log_sum_exp;

pub const DEFAULT_COV_FLOOR: f64 = 1e-6;

/// One diagonal Gaussian of a mixture over flattened chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Frozen base policy: a diagonal Gaussian mixture over flattened `T x D` chunks
/// expressed in normalized action units.
///
/// `action_scale[d]` maps normalized column `d` to workspace units.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixturePolicy {
    horizon: usize,
    dim: usize,
    components: Vec<MixtureComponent>,
    condition_key: String,
    action_scale: Vec<f64>,
}

impl GaussianMixturePolicy {
    pub fn new(
        horizon: usize,
        dim: usize,
        components: Vec<MixtureComponent>,
        condition_key: impl Into<String>,
    ) -> Result<Self, PolicyError> {
        Self::with_floor(horizon, dim, components, condition_key, DEFAULT_COV_FLOOR)
    }

    /// Weights are renormalized; variances are raised to `floor`.
    pub fn with_floor(
        horizon: usize,
        dim: usize,
        mut components: Vec<MixtureComponent>,
        condition_key: impl Into<String>,
        floor: f64,
    ) -> Result<Self, PolicyError> {
        let n = horizon * dim;
        if n == 0 {
            return Err(PolicyError::Config("policy shape must be positive".into()));
        }
        if components.is_empty() {
            return Err(PolicyError::Config("mixture needs at least one component".into()));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(PolicyError::Config(format!("covariance floor {floor} must be positive")));
        }
        let mut total = 0.0;
        for (m, c) in components.iter().enumerate() {
            if c.mean.len() != n || c.var.len() != n {
                return Err(PolicyError::Shape {
                    expected: n,
                    got: if c.mean.len() != n { c.mean.len() } else { c.var.len() },
                });
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(PolicyError::Config(format!("component {m} has invalid weight")));
            }
            if c.mean.iter().chain(&c.var).any(|v| !v.is_finite()) {
                return Err(PolicyError::Config(format!("component {m} has non-finite entries")));
            }
            if c.var.iter().any(|v| *v <= 0.0) {
                return Err(PolicyError::Config(format!(
                    "component {m} has a nonpositive variance"
                )));
            }
            total += c.weight;
        }
        if total <= 0.0 {
            return Err(PolicyError::Config("mixture weights sum to zero".into()));
        }
        for c in components.iter_mut() {
            c.weight /= total;
            for v in c.var.iter_mut() {
                *v = v.max(floor);
            }
        }
        Ok(Self {
            horizon,
            dim,
            components,
            condition_key: condition_key.into(),
            action_scale: vec![1.0; dim],
        })
    }

    /// Single standard-normal component.
    pub fn standard_normal(horizon: usize, dim: usize, condition_key: &str) -> Self {
        let n = horizon * dim;
        Self::new(
            horizon,
            dim,
            vec![MixtureComponent {
                weight: 1.0,
                mean: vec![0.0; n],
                var: vec![1.0; n],
            }],
            condition_key,
        )
        .expect("standard normal is valid")
    }

    pub fn with_action_scale(mut self, scale: Vec<f64>) -> Result<Self, PolicyError> {
        if scale.len() != self.dim {
            return Err(PolicyError::Shape {
                expected: self.dim,
                got: scale.len(),
            });
        }
        if scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(PolicyError::Config("action scale entries must be positive".into()));
        }
        self.action_scale = scale;
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of a flattened chunk.
    pub fn model_dim(&self) -> usize {
        self.horizon * self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn condition_key(&self) -> &str {
        &self.condition_key
    }

    pub fn action_scale(&self) -> &[f64] {
        &self.action_scale
    }

    /// Mixture mean in normalized units.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.model_dim()];
        for c in &self.components {
            for (o, m) in out.iter_mut().zip(&c.mean) {
                *o += c.weight * m;
            }
        }
        out
    }

    /// Normalized values to a workspace-unit chunk.
    pub fn to_workspace(&self, values: &[f64]) -> ActionChunk {
        ActionChunk::zeros(self.horizon, self.dim)
            .with_values(values.to_vec())
            .scale_columns(&self.action_scale)
    }

    /// Workspace-unit chunk to normalized values.
    pub fn to_model(&self, chunk: &ActionChunk) -> Vec<f64> {
        let inv: Vec<f64> = self.action_scale.iter().map(|s| 1.0 / s).collect();
        chunk.scale_columns(&inv).into_vec()
    }

    /// Log-responsibilities and per-component variances for the law of
    /// `c * a0 + s * z` with `a0` drawn from the mixture and `z` standard normal.
    fn responsibilities(&self, a: &[f64], c: f64, s2: f64) -> (Vec<f64>, f64) {
        assert_eq!(a.len(), self.model_dim(), "chunk length mismatch");
        let mut logs = Vec::with_capacity(self.components.len());
        for comp in &self.components {
            if comp.weight == 0.0 {
                logs.push(f64::NEG_INFINITY);
                continue;
            }
            let mut acc = 0.0;
            for ((x, m), v) in a.iter().zip(&comp.mean).zip(&comp.var) {
                let var = c * c * v + s2;
                let d = x - c * m;
                acc += d * d / var + var.ln();
            }
            logs.push(comp.weight.ln() - 0.5 * acc);
        }
        let lse = log_sum_exp(&logs);
        (logs, lse)
    }

    /// `log p(a)` for `a = c * a0 + s * z`.
    pub fn log_density_at(&self, a: &[f64], c: f64, s2: f64) -> f64 {
        let (_, lse) = self.responsibilities(a, c, s2);
        lse - 0.5 * a.len() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// `grad log p(a)` for `a = c * a0 + s * z`.
    pub fn score_at(&self, a: &[f64], c: f64, s2: f64) -> Vec<f64> {
        let (logs, lse) = self.responsibilities(a, c, s2);
        let mut out = vec![0.0; a.len()];
        for (comp, l) in self.components.iter().zip(&logs) {
            let r = (l - lse).exp();
            if r == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                let var = c * c * comp.var[i] + s2;
                *o -= r * (a[i] - c * comp.mean[i]) / var;
            }
        }
        out
    }

    /// Exact noise prediction at diffusion step `k`.
    pub fn epsilon(&self, a: &[f64], k: usize, sched: &NoiseSchedule) -> Vec<f64> {
        assert!(k >= 1 && k <= sched.steps(), "step {k} outside schedule");
        let ab = sched.alpha_bar(k);
        let scale = (1.0 - ab).sqrt();
        let mut s = self.score_at(a, ab.sqrt(), 1.0 - ab);
        for v in s.iter_mut() {
            *v *= -scale;
        }
        s
    }

    fn check_flow_time(k: f64) -> Result<(), PolicyError> {
        if !(k > 0.0 && k <= 1.0) {
            return Err(PolicyError::Domain(format!(
                "flow time {k} outside (0, 1]; velocity is undefined at the clean end"
            )));
        }
        Ok(())
    }

    /// Marginal velocity `E[z - a0 | a_k = a]` of the path `a_k = (1-k) a0 + k z`.
    pub fn velocity(&self, a: &[f64], k: f64) -> Result<Vec<f64>, PolicyError> {
        Self::check_flow_time(k)?;
        let c = 1.0 - k;
        let (logs, lse) = self.responsibilities(a, c, k * k);
        let mut out = vec![0.0; a.len()];
        for (comp, l) in self.components.iter().zip(&logs) {
            let r = (l - lse).exp();
            if r == 0.0 {
                continue;
            }
            for (i, o) in out.iter_mut().enumerate() {
                let sig = comp.var[i];
                let var = c * c * sig + k * k;
                let v = (k - c * sig) * (a[i] - c * comp.mean[i]) / var - comp.mean[i];
                *o += r * v;
            }
        }
        Ok(out)
    }

    /// `grad log p_k(a)` along the flow path.
    pub fn flow_score(&self, a: &[f64], k: f64) -> Result<Vec<f64>, PolicyError> {
        Self::check_flow_time(k)?;
        Ok(self.score_at(a, 1.0 - k, k * k))
    }
}
