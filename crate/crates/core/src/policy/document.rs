use serde::{Deserialize, Serialize};

use super::{GaussianMixturePolicy, MixtureComponent, NoiseSchedule, PolicyError, ReverseVariance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDocument {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub diag_cov: Vec<f64>,
}

/// JSON form of a policy and its noise schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDocument {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "K")]
    pub steps: usize,
    pub betas: Vec<f64>,
    pub components: Vec<ComponentDocument>,
    pub condition_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_scale: Option<Vec<f64>>,
    #[serde(default)]
    pub variance: ReverseVariance,
}

impl PolicyDocument {
    pub fn from_parts(policy: &GaussianMixturePolicy, sched: &NoiseSchedule) -> Self {
        let scale = policy.action_scale();
        Self {
            horizon: policy.horizon(),
            dim: policy.dim(),
            steps: sched.steps(),
            betas: sched.betas().to_vec(),
            components: policy
                .components()
                .iter()
                .map(|c| ComponentDocument {
                    weight: c.weight,
                    mean: c.mean.clone(),
                    diag_cov: c.var.clone(),
                })
                .collect(),
            condition_key: policy.condition_key().to_string(),
            action_scale: if scale.iter().all(|s| *s == 1.0) {
                None
            } else {
                Some(scale.to_vec())
            },
            variance: sched.variance(),
        }
    }

    pub fn into_parts(self) -> Result<(GaussianMixturePolicy, NoiseSchedule), PolicyError> {
        if self.betas.len() != self.steps {
            return Err(PolicyError::Config(format!(
                "K = {} but {} betas given",
                self.steps,
                self.betas.len()
            )));
        }
        let sched = NoiseSchedule::from_betas(self.betas, self.variance)?;
        let components = self
            .components
            .into_iter()
            .map(|c| MixtureComponent {
                weight: c.weight,
                mean: c.mean,
                var: c.diag_cov,
            })
            .collect();
        let mut policy =
            GaussianMixturePolicy::new(self.horizon, self.dim, components, self.condition_key)?;
        if let Some(scale) = self.action_scale {
            policy = policy.with_action_scale(scale)?;
        }
        Ok((policy, sched))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("policy document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let p = GaussianMixturePolicy::standard_normal(2, 3, "move#reach")
            .with_action_scale(vec![0.1, 0.1, 1.0])
            .unwrap();
        let s = NoiseSchedule::build(4, 1e-4, 0.3).unwrap();
        let text = PolicyDocument::from_parts(&p, &s).to_json();
        assert!(text.contains("\"diag_cov\""));
        let (p2, s2) = PolicyDocument::from_json(&text).unwrap().into_parts().unwrap();
        assert_eq!(p, p2);
        assert_eq!(s, s2);
    }

    #[test]
    fn mismatched_betas_rejected() {
        let p = GaussianMixturePolicy::standard_normal(1, 1, "k");
        let s = NoiseSchedule::build(3, 1e-4, 0.3).unwrap();
        let mut d = PolicyDocument::from_parts(&p, &s);
        d.steps = 4;
        assert!(d.into_parts().is_err());
    }
}
