//! Flat scalar tape with reverse-mode gradients.

use std::collections::HashMap;

use super::ast::{BinOp, Expr, Index, Reduce, Select, UnaryOp};
use super::{Dims, RewardError};
use crate::numeric::{log_sum_exp, sigmoid};

pub const DIV_GUARD: f64 = 1e-9;
pub const SQRT_GUARD: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    /// Flat chunk entry.
    Input(usize),
    /// Entry of the parameter vector `[grip_start, p_0, p_1, ...]`.
    Param(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Unary(UnaryOp, usize),
    Pow(usize, f64),
    Sum(Vec<usize>),
    Scale(usize, f64),
    SoftMin(f64, Vec<usize>),
    SoftMax(f64, Vec<usize>),
    Norm(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Instr {
    op: Op,
    desc: usize,
}

#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    descs: Vec<String>,
    output: usize,
    dims: Dims,
}

struct Compiler<'a> {
    dims: &'a Dims,
    instrs: Vec<Instr>,
    descs: Vec<String>,
    leaves: HashMap<(u8, usize), usize>,
    cum: HashMap<(usize, usize), usize>,
}

fn describe(e: &Expr, t: Option<i64>) -> String {
    let mut s = e.to_string();
    if s.chars().count() > 72 {
        s = s.chars().take(69).collect::<String>() + "...";
    }
    match t {
        Some(t) => format!("{s} (t = {t})"),
        None => s,
    }
}

impl<'a> Compiler<'a> {
    fn push(&mut self, op: Op, desc: usize) -> usize {
        self.instrs.push(Instr { op, desc });
        self.instrs.len() - 1
    }

    fn leaf(&mut self, kind: u8, idx: usize, desc: usize) -> usize {
        if let Some(&n) = self.leaves.get(&(kind, idx)) {
            return n;
        }
        let op = if kind == 0 { Op::Input(idx) } else { Op::Param(idx) };
        let n = self.push(op, desc);
        self.leaves.insert((kind, idx), n);
        n
    }

    fn ix(&self, ix: &Index, t: Option<i64>) -> usize {
        ix.eval(self.dims, t).expect("index validated at parse time") as usize
    }

    fn columns(&self, sel: &Select, width: usize, t: Option<i64>) -> Vec<usize> {
        match sel {
            Select::All => (0..width).collect(),
            Select::At(i) => vec![self.ix(i, t)],
            Select::Range(lo, hi) => (self.ix(lo, t)..self.ix(hi, t)).collect(),
        }
    }

    fn cum_node(&mut self, row: usize, col: usize, desc: usize) -> usize {
        if let Some(&n) = self.cum.get(&(row, col)) {
            return n;
        }
        let input = self.leaf(0, row * self.dims.dim + col, desc);
        let prev = if row == 0 {
            self.leaf(1, col, desc)
        } else {
            self.cum_node(row - 1, col, desc)
        };
        let n = self.push(Op::Add(prev, input), desc);
        self.cum.insert((row, col), n);
        n
    }

    fn compile(&mut self, e: &Expr, t: Option<i64>) -> Vec<usize> {
        self.descs.push(describe(e, t));
        let desc = self.descs.len() - 1;
        let pos = self.dims.dim - 1;
        match e {
            Expr::Num(v) => vec![self.push(Op::Const(*v), desc)],
            Expr::Action(row, sel) => {
                let r = self.ix(row, t);
                self.columns(sel, self.dims.dim, t)
                    .into_iter()
                    .map(|c| self.leaf(0, r * self.dims.dim + c, desc))
                    .collect()
            }
            Expr::Cum(row, sel) => {
                let r = self.ix(row, t);
                self.columns(sel, pos, t)
                    .into_iter()
                    .map(|c| self.cum_node(r, c, desc))
                    .collect()
            }
            Expr::Keypoint(i, sel) => {
                let base = pos * (1 + self.ix(i, t));
                self.columns(sel, pos, t)
                    .into_iter()
                    .map(|c| self.leaf(1, base + c, desc))
                    .collect()
            }
            Expr::GripStart(sel) => self
                .columns(sel, pos, t)
                .into_iter()
                .map(|c| self.leaf(1, c, desc))
                .collect(),
            Expr::Vector(items) => items.iter().flat_map(|x| self.compile(x, t)).collect(),
            Expr::Unary(op, x) => {
                let xs = self.compile(x, t);
                xs.into_iter()
                    .map(|n| self.push(Op::Unary(*op, n), desc))
                    .collect()
            }
            Expr::Binary(op, a, b) => {
                let xs = self.compile(a, t);
                let ys = self.compile(b, t);
                let n = xs.len().max(ys.len());
                (0..n)
                    .map(|i| {
                        let x = xs[if xs.len() == 1 { 0 } else { i }];
                        let y = ys[if ys.len() == 1 { 0 } else { i }];
                        let op = match op {
                            BinOp::Add => Op::Add(x, y),
                            BinOp::Sub => Op::Sub(x, y),
                            BinOp::Mul => Op::Mul(x, y),
                            BinOp::Div => Op::Div(x, y),
                        };
                        self.push(op, desc)
                    })
                    .collect()
            }
            Expr::Pow(x, p) => {
                let xs = self.compile(x, t);
                xs.into_iter()
                    .map(|n| self.push(Op::Pow(n, *p), desc))
                    .collect()
            }
            Expr::Reduce(r, body) => {
                let terms: Vec<usize> = (0..self.dims.horizon as i64)
                    .map(|tt| self.compile(body, Some(tt))[0])
                    .collect();
                let op = match r {
                    Reduce::Sum => Op::Sum(terms),
                    Reduce::Mean => {
                        let s = self.push(Op::Sum(terms), desc);
                        Op::Scale(s, 1.0 / self.dims.horizon as f64)
                    }
                    Reduce::SoftMin(tau) => Op::SoftMin(*tau, terms),
                    Reduce::SoftMax(tau) => Op::SoftMax(*tau, terms),
                };
                vec![self.push(op, desc)]
            }
            Expr::Norm2(x) => {
                let xs = self.compile(x, t);
                vec![self.push(Op::Norm(xs), desc)]
            }
            Expr::Dot(a, b) => {
                let xs = self.compile(a, t);
                let ys = self.compile(b, t);
                let prods: Vec<usize> = xs
                    .iter()
                    .zip(&ys)
                    .map(|(x, y)| self.push(Op::Mul(*x, *y), desc))
                    .collect();
                vec![self.push(Op::Sum(prods), desc)]
            }
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn compile(expr: &Expr, dims: Dims) -> Tape {
        let mut c = Compiler {
            dims: &dims,
            instrs: Vec::new(),
            descs: Vec::new(),
            leaves: HashMap::new(),
            cum: HashMap::new(),
        };
        let out = c.compile(expr, None);
        debug_assert_eq!(out.len(), 1, "reward must be scalar");
        Tape {
            output: out[0],
            instrs: c.instrs,
            descs: c.descs,
            dims,
        }
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    fn forward(&self, input: &[f64], params: &[f64]) -> Result<Vec<f64>, RewardError> {
        let mut v = vec![0.0; self.instrs.len()];
        for (i, ins) in self.instrs.iter().enumerate() {
            let x = match &ins.op {
                Op::Const(c) => *c,
                Op::Input(j) => input[*j],
                Op::Param(j) => params[*j],
                Op::Add(a, b) => v[*a] + v[*b],
                Op::Sub(a, b) => v[*a] - v[*b],
                Op::Mul(a, b) => v[*a] * v[*b],
                Op::Div(a, b) => v[*a] * v[*b] / (v[*b] * v[*b] + DIV_GUARD),
                Op::Unary(op, a) => {
                    let x = v[*a];
                    match op {
                        UnaryOp::Neg => -x,
                        UnaryOp::Exp => x.exp(),
                        UnaryOp::Log => x.ln(),
                        UnaryOp::Tanh => x.tanh(),
                        UnaryOp::Sigmoid => sigmoid(x),
                        UnaryOp::Softplus => softplus(x),
                        UnaryOp::SqrtSafe => (x.max(0.0) + SQRT_GUARD).sqrt(),
                    }
                }
                Op::Pow(a, p) => {
                    let x = v[*a];
                    if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
                        x.powi(*p as i32)
                    } else {
                        x.powf(*p)
                    }
                }
                Op::Sum(xs) => xs.iter().map(|j| v[*j]).sum(),
                Op::Scale(a, s) => v[*a] * s,
                Op::SoftMin(tau, xs) => {
                    let z: Vec<f64> = xs.iter().map(|j| -v[*j] / tau).collect();
                    -tau * log_sum_exp(&z)
                }
                Op::SoftMax(tau, xs) => {
                    let z: Vec<f64> = xs.iter().map(|j| v[*j] / tau).collect();
                    tau * log_sum_exp(&z)
                }
                Op::Norm(xs) => xs.iter().map(|j| v[*j] * v[*j]).sum::<f64>().sqrt(),
            };
            if !x.is_finite() {
                return Err(RewardError::NonFinite {
                    node: self.descs[ins.desc].clone(),
                });
            }
            v[i] = x;
        }
        Ok(v)
    }

    pub fn eval(&self, input: &[f64], params: &[f64]) -> Result<f64, RewardError> {
        Ok(self.forward(input, params)?[self.output])
    }

    /// Value and gradient with respect to the flat chunk.
    pub fn grad(&self, input: &[f64], params: &[f64]) -> Result<(f64, Vec<f64>), RewardError> {
        let v = self.forward(input, params)?;
        let mut adj = vec![0.0; v.len()];
        adj[self.output] = 1.0;
        let mut g = vec![0.0; self.dims.horizon * self.dims.dim];
        for i in (0..=self.output).rev() {
            let w = adj[i];
            if w == 0.0 {
                continue;
            }
            match &self.instrs[i].op {
                Op::Const(_) | Op::Param(_) => {}
                Op::Input(j) => g[*j] += w,
                Op::Add(a, b) => {
                    adj[*a] += w;
                    adj[*b] += w;
                }
                Op::Sub(a, b) => {
                    adj[*a] += w;
                    adj[*b] -= w;
                }
                Op::Mul(a, b) => {
                    let (x, y) = (v[*a], v[*b]);
                    adj[*a] += w * y;
                    adj[*b] += w * x;
                }
                Op::Div(a, b) => {
                    let (x, y) = (v[*a], v[*b]);
                    let den = y * y + DIV_GUARD;
                    adj[*a] += w * y / den;
                    adj[*b] += w * x * (DIV_GUARD - y * y) / (den * den);
                }
                Op::Unary(op, a) => {
                    let x = v[*a];
                    let f = v[i];
                    let d = match op {
                        UnaryOp::Neg => -1.0,
                        UnaryOp::Exp => f,
                        UnaryOp::Log => 1.0 / x,
                        UnaryOp::Tanh => 1.0 - f * f,
                        UnaryOp::Sigmoid => f * (1.0 - f),
                        UnaryOp::Softplus => sigmoid(x),
                        UnaryOp::SqrtSafe => {
                            if x > 0.0 {
                                0.5 / f
                            } else {
                                0.0
                            }
                        }
                    };
                    adj[*a] += w * d;
                }
                Op::Pow(a, p) => {
                    let x = v[*a];
                    let d = if *p == 0.0 {
                        0.0
                    } else if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
                        p * x.powi(*p as i32 - 1)
                    } else {
                        p * x.powf(p - 1.0)
                    };
                    adj[*a] += w * d;
                }
                Op::Sum(xs) => {
                    for j in xs {
                        adj[*j] += w;
                    }
                }
                Op::Scale(a, s) => adj[*a] += w * s,
                Op::SoftMin(tau, xs) | Op::SoftMax(tau, xs) => {
                    let sign = if matches!(self.instrs[i].op, Op::SoftMin(..)) {
                        -1.0
                    } else {
                        1.0
                    };
                    let z: Vec<f64> = xs.iter().map(|j| sign * v[*j] / tau).collect();
                    let lse = log_sum_exp(&z);
                    for (j, zj) in xs.iter().zip(&z) {
                        adj[*j] += w * (zj - lse).exp();
                    }
                }
                Op::Norm(xs) => {
                    let f = v[i];
                    if f > 0.0 {
                        for j in xs {
                            adj[*j] += w * v[*j] / f;
                        }
                    }
                }
            }
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(RewardError::NonFinite {
                node: "gradient".into(),
            });
        }
        Ok((v[self.output], g))
    }
}
