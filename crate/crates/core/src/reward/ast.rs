use std::fmt::{self, Write as _};

/// Integer index expression. `Var` is the reduction variable `t`.
#[derive(Debug, Clone, PartialEq)]
pub enum Index {
    Lit(i64),
    Horizon,
    Dim,
    Count,
    Var,
    Add(Box<Index>, Box<Index>),
    Sub(Box<Index>, Box<Index>),
    Mul(Box<Index>, Box<Index>),
    Neg(Box<Index>),
}

impl Index {
    pub fn eval(&self, dims: &super::Dims, t: Option<i64>) -> Option<i64> {
        Some(match self {
            Index::Lit(v) => *v,
            Index::Horizon => dims.horizon as i64,
            Index::Dim => dims.dim as i64,
            Index::Count => dims.keypoints as i64,
            Index::Var => t?,
            Index::Add(a, b) => a.eval(dims, t)? + b.eval(dims, t)?,
            Index::Sub(a, b) => a.eval(dims, t)? - b.eval(dims, t)?,
            Index::Mul(a, b) => a.eval(dims, t)? * b.eval(dims, t)?,
            Index::Neg(a) => -a.eval(dims, t)?,
        })
    }

    pub fn uses_var(&self) -> bool {
        match self {
            Index::Var => true,
            Index::Lit(_) | Index::Horizon | Index::Dim | Index::Count => false,
            Index::Add(a, b) | Index::Sub(a, b) | Index::Mul(a, b) => a.uses_var() || b.uses_var(),
            Index::Neg(a) => a.uses_var(),
        }
    }
}

/// Column selection after a row index.
#[derive(Debug, Clone, PartialEq)]
pub enum Select {
    All,
    At(Index),
    /// Half-open `[lo:hi]`.
    Range(Index, Index),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Softplus,
    SqrtSafe,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Exp => "exp",
            UnaryOp::Log => "log",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Sigmoid => "sigmoid",
            UnaryOp::Softplus => "softplus",
            UnaryOp::SqrtSafe => "sqrt_safe",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "neg" => UnaryOp::Neg,
            "exp" => UnaryOp::Exp,
            "log" => UnaryOp::Log,
            "tanh" => UnaryOp::Tanh,
            "sigmoid" => UnaryOp::Sigmoid,
            "softplus" => UnaryOp::Softplus,
            "sqrt_safe" => UnaryOp::SqrtSafe,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    /// Guarded: `x / y` means `x * y / (y^2 + 1e-9)`.
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reduce {
    Sum,
    Mean,
    SoftMin(f64),
    SoftMax(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// `a[t]`, `a[t][d]`, `a[t][i:j]`.
    Action(Index, Select),
    /// `cum(a)[t][..]`: gripper start plus prefix sum of positional deltas.
    Cum(Index, Select),
    /// `p[i][..]`.
    Keypoint(Index, Select),
    /// `grip_start[..]`.
    GripStart(Select),
    Vector(Vec<Expr>),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Reduce(Reduce, Box<Expr>),
    Norm2(Box<Expr>),
    Dot(Box<Expr>, Box<Expr>),
}

fn fmt_num(out: &mut String, v: f64) {
    // Debug formatting of f64 round-trips exactly.
    let _ = write!(out, "{v:?}");
}

fn fmt_index(out: &mut String, ix: &Index) {
    match ix {
        Index::Lit(v) => {
            let _ = write!(out, "{v}");
        }
        Index::Horizon => out.push('T'),
        Index::Dim => out.push('D'),
        Index::Count => out.push('n'),
        Index::Var => out.push('t'),
        Index::Add(a, b) | Index::Sub(a, b) | Index::Mul(a, b) => {
            let sym = match ix {
                Index::Add(..) => " + ",
                Index::Sub(..) => " - ",
                _ => " * ",
            };
            out.push('(');
            fmt_index(out, a);
            out.push_str(sym);
            fmt_index(out, b);
            out.push(')');
        }
        Index::Neg(a) => {
            out.push_str("-(");
            fmt_index(out, a);
            out.push(')');
        }
    }
}

fn fmt_select(out: &mut String, sel: &Select) {
    match sel {
        Select::All => {}
        Select::At(i) => {
            out.push('[');
            fmt_index(out, i);
            out.push(']');
        }
        Select::Range(lo, hi) => {
            out.push('[');
            fmt_index(out, lo);
            out.push(':');
            fmt_index(out, hi);
            out.push(']');
        }
    }
}

fn fmt_row(out: &mut String, head: &str, row: &Index, sel: &Select) {
    out.push_str(head);
    out.push('[');
    fmt_index(out, row);
    out.push(']');
    fmt_select(out, sel);
}

pub(crate) fn fmt_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(v) => fmt_num(out, *v),
        Expr::Action(t, s) => fmt_row(out, "a", t, s),
        Expr::Cum(t, s) => fmt_row(out, "cum(a)", t, s),
        Expr::Keypoint(i, s) => fmt_row(out, "p", i, s),
        Expr::GripStart(s) => {
            out.push_str("grip_start");
            fmt_select(out, s);
        }
        Expr::Vector(items) => {
            out.push('[');
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                fmt_expr(out, it);
            }
            out.push(']');
        }
        Expr::Unary(UnaryOp::Neg, x) => {
            out.push_str("-(");
            fmt_expr(out, x);
            out.push(')');
        }
        Expr::Unary(op, x) => {
            out.push_str(op.name());
            out.push('(');
            fmt_expr(out, x);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            out.push('(');
            fmt_expr(out, a);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            fmt_expr(out, b);
            out.push(')');
        }
        Expr::Pow(b, p) => {
            out.push_str("((");
            fmt_expr(out, b);
            out.push_str(") ^ ");
            fmt_num(out, *p);
            out.push(')');
        }
        Expr::Reduce(r, body) => {
            match r {
                Reduce::Sum => out.push_str("sum_t("),
                Reduce::Mean => out.push_str("mean_t("),
                Reduce::SoftMin(tau) | Reduce::SoftMax(tau) => {
                    out.push_str(if matches!(r, Reduce::SoftMin(_)) {
                        "softmin_t("
                    } else {
                        "softmax_t("
                    });
                    fmt_num(out, *tau);
                    out.push_str(", ");
                }
            }
            fmt_expr(out, body);
            out.push(')');
        }
        Expr::Norm2(x) => {
            out.push_str("norm2(");
            fmt_expr(out, x);
            out.push(')');
        }
        Expr::Dot(a, b) => {
            out.push_str("dot(");
            fmt_expr(out, a);
            out.push_str(", ");
            fmt_expr(out, b);
            out.push(')');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        fmt_expr(&mut s, self);
        f.write_str(&s)
    }
}
