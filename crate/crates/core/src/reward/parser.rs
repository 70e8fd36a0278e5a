use super::ast::{BinOp, Expr, Index, Reduce, Select, UnaryOp};
use super::lexer::{lex, Tok, Token};
use super::{Dims, RewardError, Stage, DEFAULT_HIGH, DEFAULT_LOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Scalar,
    Vector(usize),
}

impl Shape {
    fn describe(self) -> String {
        match self {
            Shape::Scalar => "scalar".into(),
            Shape::Vector(n) => format!("vector of length {n}"),
        }
    }
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    dims: Dims,
    /// Nesting depth of `*_t` reductions; `t` is bound when positive.
    depth: usize,
}

pub(super) struct Parsed {
    pub header: Option<Dims>,
    pub stages: Vec<Stage>,
}

/// Parse text. `dims` bounds all indices; when `None`, a `dims` header is required.
pub(super) fn parse(text: &str, dims: Option<Dims>) -> Result<(Dims, Parsed), RewardError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        dims: dims.unwrap_or(Dims {
            horizon: 0,
            dim: 0,
            keypoints: 0,
        }),
        depth: 0,
    };
    let header = p.header()?;
    let dims = match (dims, header) {
        (Some(d), Some(h)) if d != h => {
            let t = &p.toks[0];
            return Err(RewardError::Syntax {
                line: t.line,
                col: t.col,
                msg: format!(
                    "header declares T={} D={} n={} but caller expects T={} D={} n={}",
                    h.horizon, h.dim, h.keypoints, d.horizon, d.dim, d.keypoints
                ),
            });
        }
        (Some(d), _) => d,
        (None, Some(h)) => h,
        (None, None) => {
            let t = &p.toks[0];
            return Err(RewardError::Syntax {
                line: t.line,
                col: t.col,
                msg: "missing `dims T=.. D=.. n=..` header".into(),
            });
        }
    };
    dims.validate()?;
    p.dims = dims;
    let stages = p.program()?;
    Ok((dims, Parsed { header, stages }))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, off: usize) -> &Tok {
        let i = (self.pos + off).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, RewardError> {
        let (line, col) = self.here();
        Err(RewardError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn expect(&mut self, tok: Tok) -> Result<(), RewardError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            let want = match &tok {
                Tok::Eof => "end of input".to_string(),
                t => t.describe(),
            };
            self.syntax(format!("expected {want}, found {}", self.peek().describe()))
        }
    }

    fn is_ident(&self, name: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == name)
    }

    fn header(&mut self) -> Result<Option<Dims>, RewardError> {
        if !self.is_ident("dims") {
            return Ok(None);
        }
        self.bump();
        let (mut t, mut d, mut n) = (None, None, None);
        while let (Tok::Ident(name), Tok::Eq) = (self.peek().clone(), self.peek_at(1).clone()) {
            let slot = match name.as_str() {
                "T" => &mut t,
                "D" => &mut d,
                "n" => &mut n,
                _ => break,
            };
            self.bump();
            self.bump();
            let Tok::Num(v) = self.peek().clone() else {
                return self.syntax("expected an integer after `=`");
            };
            if v < 0.0 || v.fract() != 0.0 {
                return self.syntax("dimension must be a nonnegative integer");
            }
            self.bump();
            *slot = Some(v as usize);
        }
        match (t, d, n) {
            (Some(horizon), Some(dim), Some(keypoints)) => Ok(Some(Dims {
                horizon,
                dim,
                keypoints,
            })),
            _ => self.syntax("`dims` header needs T, D and n"),
        }
    }

    fn program(&mut self) -> Result<Vec<Stage>, RewardError> {
        let mut stages: Vec<Stage> = Vec::new();
        if self.is_ident("stage") {
            while self.is_ident("stage") {
                let (line, col) = self.here();
                self.bump();
                let name = match self.bump().tok {
                    Tok::Ident(s) => s,
                    _ => {
                        return Err(RewardError::Syntax {
                            line,
                            col,
                            msg: "expected a stage name after `stage`".into(),
                        })
                    }
                };
                if stages.iter().any(|s| s.name == name) {
                    return Err(RewardError::Syntax {
                        line,
                        col,
                        msg: format!("duplicate stage `{name}`"),
                    });
                }
                self.expect(Tok::LBrace)?;
                let stage = self.fields(name, (line, col), Some(Tok::RBrace))?;
                self.expect(Tok::RBrace)?;
                stages.push(stage);
            }
        } else if self.is_ident("reward") {
            let at = self.here();
            stages.push(self.fields("main".into(), at, None)?);
        } else {
            return self.syntax(format!(
                "expected `stage` or `reward`, found {}",
                self.peek().describe()
            ));
        }
        self.expect(Tok::Eof)?;
        Ok(stages)
    }

    fn fields(
        &mut self,
        name: String,
        at: (usize, usize),
        close: Option<Tok>,
    ) -> Result<Stage, RewardError> {
        let (mut reward, mut high, mut low, mut description) = (None, None, None, None);
        loop {
            let done = match &close {
                Some(t) => self.peek() == t,
                None => *self.peek() == Tok::Eof,
            };
            if done {
                break;
            }
            let (line, col) = self.here();
            let field = match self.bump().tok {
                Tok::Ident(s) => s,
                other => {
                    return Err(RewardError::Syntax {
                        line,
                        col,
                        msg: format!("expected a field name, found {}", other.describe()),
                    })
                }
            };
            self.expect(Tok::Colon)?;
            let dup = |present: bool| -> Result<(), RewardError> {
                if present {
                    Err(RewardError::Syntax {
                        line,
                        col,
                        msg: format!("field `{field}` given twice"),
                    })
                } else {
                    Ok(())
                }
            };
            match field.as_str() {
                "reward" => {
                    dup(reward.is_some())?;
                    let (e, shape) = self.expr()?;
                    if shape != Shape::Scalar {
                        return Err(RewardError::Type {
                            line,
                            col,
                            msg: format!("reward must be a scalar, found {}", shape.describe()),
                        });
                    }
                    reward = Some(e);
                }
                "high" => {
                    dup(high.is_some())?;
                    high = Some(self.signed_number()?);
                }
                "low" => {
                    dup(low.is_some())?;
                    low = Some(self.signed_number()?);
                }
                "description" => {
                    dup(description.is_some())?;
                    match self.bump().tok {
                        Tok::Str(s) => description = Some(s),
                        _ => {
                            return Err(RewardError::Syntax {
                                line,
                                col,
                                msg: "description must be a string".into(),
                            })
                        }
                    }
                }
                other => {
                    return Err(RewardError::Syntax {
                        line,
                        col,
                        msg: format!("unknown field `{other}`"),
                    })
                }
            }
            self.expect(Tok::Semi)?;
        }
        let Some(reward) = reward else {
            return Err(RewardError::Syntax {
                line: at.0,
                col: at.1,
                msg: format!("stage `{name}` has no reward"),
            });
        };
        let (high, low) = match (high, low) {
            (None, None) => (DEFAULT_HIGH, DEFAULT_LOW),
            (Some(h), Some(l)) => (h, l),
            (None, Some(_)) => return Err(RewardError::MissingThreshold { stage: name, which: "high" }),
            (Some(_), None) => return Err(RewardError::MissingThreshold { stage: name, which: "low" }),
        };
        let stage = Stage {
            name,
            reward,
            high,
            low,
            description: description.unwrap_or_default(),
        };
        stage.validate_thresholds()?;
        Ok(stage)
    }

    fn signed_number(&mut self) -> Result<f64, RewardError> {
        let neg = match self.peek() {
            Tok::Minus => {
                self.bump();
                true
            }
            Tok::Plus => {
                self.bump();
                false
            }
            _ => false,
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => self.syntax(format!("expected a number, found {}", other.describe())),
        }
    }

    fn binary_shape(&self, a: Shape, b: Shape, at: (usize, usize)) -> Result<Shape, RewardError> {
        match (a, b) {
            (Shape::Scalar, s) | (s, Shape::Scalar) => Ok(s),
            (Shape::Vector(x), Shape::Vector(y)) if x == y => Ok(a),
            _ => Err(RewardError::Type {
                line: at.0,
                col: at.1,
                msg: format!("cannot combine {} with {}", a.describe(), b.describe()),
            }),
        }
    }

    fn expr(&mut self) -> Result<(Expr, Shape), RewardError> {
        let (mut lhs, mut shape) = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let at = self.here();
            self.bump();
            let (rhs, rs) = self.term()?;
            shape = self.binary_shape(shape, rs, at)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, shape))
    }

    fn term(&mut self) -> Result<(Expr, Shape), RewardError> {
        let (mut lhs, mut shape) = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            let at = self.here();
            self.bump();
            let (rhs, rs) = self.unary()?;
            shape = self.binary_shape(shape, rs, at)?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok((lhs, shape))
    }

    fn unary(&mut self) -> Result<(Expr, Shape), RewardError> {
        if *self.peek() == Tok::Minus {
            if let (Tok::Num(v), next) = (self.peek_at(1).clone(), self.peek_at(2)) {
                if *next != Tok::Caret {
                    self.bump();
                    self.bump();
                    return Ok((Expr::Num(-v), Shape::Scalar));
                }
            }
            self.bump();
            let (e, s) = self.unary()?;
            return Ok((Expr::Unary(UnaryOp::Neg, Box::new(e)), s));
        }
        self.power()
    }

    fn power(&mut self) -> Result<(Expr, Shape), RewardError> {
        let (base, shape) = self.primary()?;
        if *self.peek() != Tok::Caret {
            return Ok((base, shape));
        }
        self.bump();
        let (line, col) = self.here();
        let neg = if *self.peek() == Tok::Minus {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok((Expr::Pow(Box::new(base), if neg { -v } else { v }), shape))
            }
            _ => Err(RewardError::NonConstantExponent { line, col }),
        }
    }

    fn primary(&mut self) -> Result<(Expr, Shape), RewardError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok((Expr::Num(v), Shape::Scalar))
            }
            Tok::LParen => {
                self.bump();
                let r = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(r)
            }
            Tok::LBracket => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    let at = self.here();
                    let (e, s) = self.expr()?;
                    if s != Shape::Scalar {
                        return Err(RewardError::Type {
                            line: at.0,
                            col: at.1,
                            msg: "vector literal entries must be scalars".into(),
                        });
                    }
                    items.push(e);
                    if *self.peek() == Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RBracket)?;
                let n = items.len();
                Ok((Expr::Vector(items), Shape::Vector(n)))
            }
            Tok::Ident(name) => {
                self.bump();
                self.named(&name, line, col)
            }
            other => self.syntax(format!("expected an expression, found {}", other.describe())),
        }
    }

    fn call_arg(&mut self) -> Result<(Expr, Shape), RewardError> {
        self.expect(Tok::LParen)?;
        let r = self.expr()?;
        self.expect(Tok::RParen)?;
        Ok(r)
    }

    fn named(&mut self, name: &str, line: usize, col: usize) -> Result<(Expr, Shape), RewardError> {
        let pos_dims = self.dims.dim - 1;
        match name {
            "a" => {
                let t = self.row_index(self.dims.horizon, "time")?;
                let (sel, shape) = self.select(self.dims.dim, "action column")?;
                Ok((Expr::Action(t, sel), shape))
            }
            "cum" => {
                self.expect(Tok::LParen)?;
                if !self.is_ident("a") {
                    return self.syntax("`cum` only accepts `a`");
                }
                self.bump();
                self.expect(Tok::RParen)?;
                let t = self.row_index(self.dims.horizon, "time")?;
                let (sel, shape) = self.select(pos_dims, "position column")?;
                Ok((Expr::Cum(t, sel), shape))
            }
            "p" => {
                let i = self.row_index(self.dims.keypoints, "keypoint")?;
                let (sel, shape) = self.select(pos_dims, "keypoint coordinate")?;
                Ok((Expr::Keypoint(i, sel), shape))
            }
            "grip_start" => {
                let (sel, shape) = self.select(pos_dims, "gripper coordinate")?;
                Ok((Expr::GripStart(sel), shape))
            }
            "norm2" => {
                let (e, _) = self.call_arg()?;
                Ok((Expr::Norm2(Box::new(e)), Shape::Scalar))
            }
            "dot" => {
                self.expect(Tok::LParen)?;
                let (a, sa) = self.expr()?;
                self.expect(Tok::Comma)?;
                let (b, sb) = self.expr()?;
                self.expect(Tok::RParen)?;
                if sa != sb {
                    return Err(RewardError::Type {
                        line,
                        col,
                        msg: format!("dot of {} and {}", sa.describe(), sb.describe()),
                    });
                }
                Ok((Expr::Dot(Box::new(a), Box::new(b)), Shape::Scalar))
            }
            "sum_t" | "mean_t" | "softmin_t" | "softmax_t" => {
                self.expect(Tok::LParen)?;
                let op = match name {
                    "sum_t" => Reduce::Sum,
                    "mean_t" => Reduce::Mean,
                    _ => {
                        let tau = self.signed_number()?;
                        if !(tau > 0.0 && tau.is_finite()) {
                            return Err(RewardError::Syntax {
                                line,
                                col,
                                msg: format!("temperature must be positive, got {tau}"),
                            });
                        }
                        self.expect(Tok::Comma)?;
                        if name == "softmin_t" {
                            Reduce::SoftMin(tau)
                        } else {
                            Reduce::SoftMax(tau)
                        }
                    }
                };
                self.depth += 1;
                let at = self.here();
                let body = self.expr();
                self.depth -= 1;
                let (body, shape) = body?;
                if shape != Shape::Scalar {
                    return Err(RewardError::Type {
                        line: at.0,
                        col: at.1,
                        msg: format!("reduction body must be a scalar, found {}", shape.describe()),
                    });
                }
                self.expect(Tok::RParen)?;
                Ok((Expr::Reduce(op, Box::new(body)), Shape::Scalar))
            }
            "T" | "D" | "n" | "t" => Err(RewardError::Type {
                line,
                col,
                msg: format!("`{name}` may only appear inside an index"),
            }),
            other => match UnaryOp::from_name(other) {
                Some(op) => {
                    let (e, s) = self.call_arg()?;
                    Ok((Expr::Unary(op, Box::new(e)), s))
                }
                None => Err(RewardError::UnknownIdentifier {
                    name: other.to_string(),
                    line,
                    col,
                }),
            },
        }
    }

    fn index_values(&self, ix: &Index, at: (usize, usize)) -> Result<Vec<i64>, RewardError> {
        if ix.uses_var() {
            if self.depth == 0 {
                return Err(RewardError::UnknownIdentifier {
                    name: "t".into(),
                    line: at.0,
                    col: at.1,
                });
            }
            Ok((0..self.dims.horizon as i64)
                .map(|t| ix.eval(&self.dims, Some(t)).expect("t bound"))
                .collect())
        } else {
            Ok(vec![ix.eval(&self.dims, None).expect("closed index")])
        }
    }

    fn check_bound(
        &self,
        ix: &Index,
        bound: usize,
        what: &str,
        at: (usize, usize),
        inclusive: bool,
    ) -> Result<Vec<i64>, RewardError> {
        let values = self.index_values(ix, at)?;
        let limit = if inclusive { bound as i64 + 1 } else { bound as i64 };
        if let Some(v) = values.iter().find(|v| **v < 0 || **v >= limit) {
            return Err(RewardError::IndexOutOfRange {
                what: what.to_string(),
                index: *v,
                bound,
                line: at.0,
                col: at.1,
            });
        }
        Ok(values)
    }

    fn row_index(&mut self, bound: usize, what: &str) -> Result<Index, RewardError> {
        self.expect(Tok::LBracket)?;
        let at = self.here();
        let ix = self.index()?;
        self.expect(Tok::RBracket)?;
        self.check_bound(&ix, bound, what, at, false)?;
        Ok(ix)
    }

    fn select(&mut self, bound: usize, what: &str) -> Result<(Select, Shape), RewardError> {
        if *self.peek() != Tok::LBracket {
            return Ok((Select::All, Shape::Vector(bound)));
        }
        self.bump();
        let at = self.here();
        let lo = self.index()?;
        if *self.peek() == Tok::Colon {
            self.bump();
            let at_hi = self.here();
            let hi = self.index()?;
            self.expect(Tok::RBracket)?;
            let los = self.check_bound(&lo, bound, what, at, false)?;
            let his = self.check_bound(&hi, bound, what, at_hi, true)?;
            let n = los.len().max(his.len());
            let widths: Vec<i64> = (0..n)
                .map(|i| his[i.min(his.len() - 1)] - los[i.min(los.len() - 1)])
                .collect();
            let w = widths[0];
            if w <= 0 || widths.iter().any(|x| *x != w) {
                return Err(RewardError::Type {
                    line: at.0,
                    col: at.1,
                    msg: "slice must be nonempty with a width independent of t".into(),
                });
            }
            return Ok((Select::Range(lo, hi), Shape::Vector(w as usize)));
        }
        self.expect(Tok::RBracket)?;
        self.check_bound(&lo, bound, what, at, false)?;
        Ok((Select::At(lo), Shape::Scalar))
    }

    fn index(&mut self) -> Result<Index, RewardError> {
        let mut lhs = self.index_term()?;
        loop {
            match self.peek() {
                Tok::Plus => {
                    self.bump();
                    lhs = Index::Add(Box::new(lhs), Box::new(self.index_term()?));
                }
                Tok::Minus => {
                    self.bump();
                    lhs = Index::Sub(Box::new(lhs), Box::new(self.index_term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn index_term(&mut self) -> Result<Index, RewardError> {
        let mut lhs = self.index_factor()?;
        while *self.peek() == Tok::Star {
            self.bump();
            lhs = Index::Mul(Box::new(lhs), Box::new(self.index_factor()?));
        }
        Ok(lhs)
    }

    fn index_factor(&mut self) -> Result<Index, RewardError> {
        let (line, col) = self.here();
        match self.bump().tok {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() < 1e15 => Ok(Index::Lit(v as i64)),
            Tok::Num(v) => Err(RewardError::Syntax {
                line,
                col,
                msg: format!("index must be an integer, got {v}"),
            }),
            Tok::Minus => {
                if let Tok::Num(v) = self.peek().clone() {
                    if v.fract() == 0.0 {
                        self.bump();
                        return Ok(Index::Lit(-(v as i64)));
                    }
                }
                Ok(Index::Neg(Box::new(self.index_factor()?)))
            }
            Tok::LParen => {
                let ix = self.index()?;
                self.expect(Tok::RParen)?;
                Ok(ix)
            }
            Tok::Ident(s) => match s.as_str() {
                "T" => Ok(Index::Horizon),
                "D" => Ok(Index::Dim),
                "n" => Ok(Index::Count),
                "t" => Ok(Index::Var),
                other => Err(RewardError::UnknownIdentifier {
                    name: other.to_string(),
                    line,
                    col,
                }),
            },
            other => Err(RewardError::Syntax {
                line,
                col,
                msg: format!("expected an index, found {}", other.describe()),
            }),
        }
    }
}
