use serde::{Deserialize, Serialize};

use super::PolicyError;

/// A `T x D` action trajectory stored row-major.
///
/// Columns `0..D-1` are positional deltas, column `D-1` is the gripper command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    horizon: usize,
    dim: usize,
    values: Vec<f64>,
}

impl ActionChunk {
    pub fn new(horizon: usize, dim: usize, values: Vec<f64>) -> Result<Self, PolicyError> {
        if horizon == 0 || dim == 0 {
            return Err(PolicyError::Config(format!(
                "chunk shape must be positive, got {horizon}x{dim}"
            )));
        }
        if values.len() != horizon * dim {
            return Err(PolicyError::Shape {
                expected: horizon * dim,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(PolicyError::Domain(format!(
                "chunk entry ({}, {}) is not finite",
                i / dim,
                i % dim
            )));
        }
        Ok(Self {
            horizon,
            dim,
            values,
        })
    }

    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self {
            horizon,
            dim,
            values: vec![0.0; horizon * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, PolicyError> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PolicyError::Config("ragged chunk rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.dim + d]
    }

    pub fn set(&mut self, t: usize, d: usize, v: f64) {
        self.values[t * self.dim + d] = v;
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Same shape, new values. Panics on length mismatch.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len(), "chunk length mismatch");
        Self {
            horizon: self.horizon,
            dim: self.dim,
            values,
        }
    }

    /// Multiply each column by the matching entry of `scale`.
    pub fn scale_columns(&self, scale: &[f64]) -> Self {
        assert_eq!(scale.len(), self.dim);
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * scale[i % self.dim])
            .collect();
        self.with_values(values)
    }

    /// Concatenate along time.
    pub fn concat(&self, other: &ActionChunk) -> Result<ActionChunk, PolicyError> {
        if self.dim != other.dim {
            return Err(PolicyError::Shape {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        ActionChunk::new(self.horizon + other.horizon, self.dim, values)
    }
}
