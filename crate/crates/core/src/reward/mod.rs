//! Stage-wise differentiable reward programs.
//!
//! Grammar (whitespace-insensitive, `#` or `//` start comments):
//!
//! ```text
//! file    := header? ( stage+ | fields )
//! header  := "dims" "T" "=" INT "D" "=" INT "n" "=" INT
//! stage   := "stage" IDENT "{" fields "}"
//! fields  := ( field ";" )*
//! field   := "reward" ":" expr | "high" ":" NUM | "low" ":" NUM
//!          | "description" ":" STRING
//! expr    := term ( ("+" | "-") term )*
//! term    := unary ( ("*" | "/") unary )*
//! unary   := "-" unary | power
//! power   := primary ( "^" "-"? NUM )?
//! primary := NUM | "(" expr ")" | "[" expr ("," expr)* "]"
//!          | "a" "[" idx "]" sel? | "cum" "(" "a" ")" "[" idx "]" sel?
//!          | "p" "[" idx "]" sel? | "grip_start" sel?
//!          | UNARY "(" expr ")" | "norm2" "(" expr ")" | "dot" "(" expr "," expr ")"
//!          | ("sum_t" | "mean_t") "(" expr ")"
//!          | ("softmin_t" | "softmax_t") "(" NUM "," expr ")"
//! sel     := "[" idx "]" | "[" idx ":" idx "]"
//! idx     := integer arithmetic over literals, T, D, n and (inside a reduction) t
//! UNARY   := neg | exp | log | tanh | sigmoid | softplus | sqrt_safe
//! ```
//!
//! Values are scalars or vectors; arithmetic broadcasts scalars. `x / y`
//! evaluates `x*y/(y^2 + 1e-9)`. `sqrt_safe(x)` is `sqrt(max(x, 0) + 1e-12)`.
//! `cum(a)[t][d]` is `grip_start[d]` plus the sum of `a[0..=t][d]`; only the
//! `D - 1` positional columns are addressable. Keypoints and `grip_start` are
//! constants: gradients flow only into chunk entries.
//!
//! A file without `stage` blocks is a single stage named `main`. A stage
//! that gives neither threshold gets `high = -0.05`, `low = -0.5`.

mod ast;
mod lexer;
mod parser;
mod tape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{BinOp, Expr, Index, Reduce, Select, UnaryOp};
pub use tape::{Tape, DIV_GUARD, SQRT_GUARD};

use crate::policy::ActionChunk;

pub const DEFAULT_HIGH: f64 = -0.05;
pub const DEFAULT_LOW: f64 = -0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("unknown identifier `{name}` at {line}:{col}")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("{what} index {index} out of range 0..{bound} at {line}:{col}")]
    IndexOutOfRange {
        what: String,
        index: i64,
        bound: usize,
        line: usize,
        col: usize,
    },
    #[error("exponent must be a numeric constant at {line}:{col}")]
    NonConstantExponent { line: usize, col: usize },
    #[error("type error at {line}:{col}: {msg}")]
    Type { line: usize, col: usize, msg: String },
    #[error("stage `{stage}` sets only one threshold; `{which}` is missing")]
    MissingThreshold { stage: String, which: &'static str },
    #[error("stage `{stage}` needs finite thresholds with high > low, got high={high} low={low}")]
    InvalidThresholds { stage: String, high: f64, low: f64 },
    #[error("invalid dims: {0}")]
    Dims(String),
    #[error("stage {s} out of range 1..={count}")]
    StageOutOfRange { s: usize, count: usize },
    #[error("evaluation produced a non-finite value at `{node}`")]
    NonFinite { node: String },
    #[error("evaluation context mismatch: {0}")]
    Context(String),
}

/// Chunk horizon `T`, action width `D` (last column is the gripper) and keypoint count `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "n")]
    pub keypoints: usize,
}

impl Dims {
    pub fn new(horizon: usize, dim: usize, keypoints: usize) -> Self {
        Self {
            horizon,
            dim,
            keypoints,
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.horizon == 0 {
            return Err(RewardError::Dims("T must be at least 1".into()));
        }
        if self.dim < 2 {
            return Err(RewardError::Dims(
                "D must be at least 2 (positions plus gripper)".into(),
            ));
        }
        Ok(())
    }

    pub fn position_dim(&self) -> usize {
        self.dim - 1
    }
}

/// Labelled anchor points in workspace units.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct KeypointSet {
    labels: Vec<String>,
    points: Vec<Vec<f64>>,
}

impl KeypointSet {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self, RewardError> {
        let mut labels = Vec::with_capacity(entries.len());
        let mut points = Vec::with_capacity(entries.len());
        for (label, p) in entries {
            if labels.contains(&label) {
                return Err(RewardError::Context(format!("duplicate keypoint label `{label}`")));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(RewardError::Context(format!("keypoint `{label}` is not finite")));
            }
            labels.push(label);
            points.push(p);
        }
        Ok(Self { labels, points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.points[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub name: String,
    pub reward: Expr,
    pub high: f64,
    pub low: f64,
    pub description: String,
}

impl Stage {
    fn validate_thresholds(&self) -> Result<(), RewardError> {
        if !(self.high.is_finite() && self.low.is_finite() && self.high > self.low) {
            return Err(RewardError::InvalidThresholds {
                stage: self.name.clone(),
                high: self.high,
                low: self.low,
            });
        }
        Ok(())
    }
}

/// A validated, compiled program. Immutable once built.
#[derive(Debug, Clone)]
pub struct RewardProgram {
    dims: Dims,
    stages: Vec<Stage>,
    tapes: Vec<Tape>,
}

impl PartialEq for RewardProgram {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.stages == other.stages
    }
}

/// Parse and compile `text` against `dims`. A `dims` header, if present, must agree.
pub fn parse_reward(text: &str, dims: Dims) -> Result<RewardProgram, RewardError> {
    let (dims, parsed) = parser::parse(text, Some(dims))?;
    RewardProgram::from_stages(dims, parsed.stages)
}

/// Parse a `.reward` file, taking dims from its header.
pub fn parse_reward_file(text: &str) -> Result<RewardProgram, RewardError> {
    let (dims, parsed) = parser::parse(text, None)?;
    debug_assert!(parsed.header.is_some());
    RewardProgram::from_stages(dims, parsed.stages)
}

impl RewardProgram {
    /// Build from stages constructed in code. Index bounds are not rechecked
    /// here; prefer [`parse_reward`] for untrusted input.
    pub fn from_stages(dims: Dims, stages: Vec<Stage>) -> Result<Self, RewardError> {
        dims.validate()?;
        if stages.is_empty() {
            return Err(RewardError::Syntax {
                line: 1,
                col: 1,
                msg: "program has no stages".into(),
            });
        }
        for s in &stages {
            s.validate_thresholds()?;
        }
        let tapes = stages.iter().map(|s| Tape::compile(&s.reward, dims)).collect();
        Ok(Self {
            dims,
            stages,
            tapes,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// 1-based stage lookup.
    pub fn stage(&self, s: usize) -> Result<&Stage, RewardError> {
        self.check_stage(s)?;
        Ok(&self.stages[s - 1])
    }

    fn check_stage(&self, s: usize) -> Result<(), RewardError> {
        if s == 0 || s > self.stages.len() {
            return Err(RewardError::StageOutOfRange {
                s,
                count: self.stages.len(),
            });
        }
        Ok(())
    }

    /// Parameter vector `[grip_start, p_0, ..., p_{n-1}]` (positional coordinates only).
    pub fn params(&self, kps: &KeypointSet, grip_start: &[f64]) -> Result<Vec<f64>, RewardError> {
        let pd = self.dims.position_dim();
        if grip_start.len() != pd {
            return Err(RewardError::Context(format!(
                "grip_start has {} coordinates, expected {pd}",
                grip_start.len()
            )));
        }
        if kps.len() < self.dims.keypoints {
            return Err(RewardError::Context(format!(
                "program references {} keypoints but {} were supplied",
                self.dims.keypoints,
                kps.len()
            )));
        }
        let mut out = grip_start.to_vec();
        for (label, p) in kps.labels.iter().zip(&kps.points).take(self.dims.keypoints) {
            if p.len() < pd {
                return Err(RewardError::Context(format!(
                    "keypoint `{label}` has {} coordinates, expected {pd}",
                    p.len()
                )));
            }
            out.extend_from_slice(&p[..pd]);
        }
        Ok(out)
    }

    fn check_chunk(&self, chunk: &[f64]) -> Result<(), RewardError> {
        let n = self.dims.horizon * self.dims.dim;
        if chunk.len() != n {
            return Err(RewardError::Context(format!(
                "chunk has {} entries, expected {n}",
                chunk.len()
            )));
        }
        Ok(())
    }

    /// Evaluate stage `s` on a flat chunk given precomputed [`params`](Self::params).
    pub fn eval_with(&self, s: usize, chunk: &[f64], params: &[f64]) -> Result<f64, RewardError> {
        self.check_stage(s)?;
        self.check_chunk(chunk)?;
        self.tapes[s - 1].eval(chunk, params).map_err(|e| self.tag(s, e))
    }

    /// Value and gradient of stage `s` given precomputed params.
    pub fn grad_with(
        &self,
        s: usize,
        chunk: &[f64],
        params: &[f64],
    ) -> Result<(f64, Vec<f64>), RewardError> {
        self.check_stage(s)?;
        self.check_chunk(chunk)?;
        self.tapes[s - 1].grad(chunk, params).map_err(|e| self.tag(s, e))
    }

    fn tag(&self, s: usize, e: RewardError) -> RewardError {
        match e {
            RewardError::NonFinite { node } => RewardError::NonFinite {
                node: format!("stage {}: {node}", self.stages[s - 1].name),
            },
            other => other,
        }
    }

    pub fn eval(
        &self,
        s: usize,
        chunk: &ActionChunk,
        kps: &KeypointSet,
        grip_start: &[f64],
    ) -> Result<f64, RewardError> {
        let params = self.params(kps, grip_start)?;
        self.eval_with(s, chunk.as_slice(), &params)
    }

    /// Gradient with respect to every chunk entry, row-major.
    pub fn grad(
        &self,
        s: usize,
        chunk: &ActionChunk,
        kps: &KeypointSet,
        grip_start: &[f64],
    ) -> Result<Vec<f64>, RewardError> {
        let params = self.params(kps, grip_start)?;
        Ok(self.grad_with(s, chunk.as_slice(), &params)?.1)
    }

    /// Canonical text; parses back to an equal program.
    pub fn print(&self) -> String {
        let d = self.dims;
        let mut out = format!("dims T={} D={} n={}\n", d.horizon, d.dim, d.keypoints);
        for s in &self.stages {
            out.push_str(&format!("stage {} {{\n  reward: {};\n", s.name, s.reward));
            out.push_str(&format!("  high: {:?};\n  low: {:?};\n", s.high, s.low));
            if !s.description.is_empty() {
                let esc = s
                    .description
                    .replace('\\', "\\\\")
                    .replace('"', "\\\"")
                    .replace('\n', "\\n");
                out.push_str(&format!("  description: \"{esc}\";\n"));
            }
            out.push_str("}\n");
        }
        out
    }
}

/// Worst relative error `|ad - fd| / max(|ad|, |fd|, 1e-3)` of the reverse-mode
/// gradient against central differences with step `h`.
pub fn check_grad(
    program: &RewardProgram,
    s: usize,
    chunk: &ActionChunk,
    kps: &KeypointSet,
    grip_start: &[f64],
    h: f64,
) -> Result<f64, RewardError> {
    let params = program.params(kps, grip_start)?;
    let (_, g) = program.grad_with(s, chunk.as_slice(), &params)?;
    let mut x = chunk.as_slice().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let x0 = x[i];
        x[i] = x0 + h;
        let fp = program.eval_with(s, &x, &params)?;
        x[i] = x0 - h;
        let fm = program.eval_with(s, &x, &params)?;
        x[i] = x0;
        let fd = (fp - fm) / (2.0 * h);
        let err = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests;
