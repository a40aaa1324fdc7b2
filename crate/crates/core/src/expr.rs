//! Small arithmetic-expression language for source terms.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?
//! atom    := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Variables are `t`, `x`, `y`, `z` (aliases `x0`, `x1`, `x2`); constants `pi`
//! and `e`; functions `sin`, `cos`, `exp`, `sqrt`. Evaluation carries a
//! forward-mode derivative in `t`, so every source has an exact time
//! derivative.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Const(f64),
    Time,
    Coord(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

/// Value and time derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Dual {
    v: f64,
    d: f64,
}

impl Dual {
    fn c(v: f64) -> Self {
        Dual { v, d: 0.0 }
    }
}

impl Node {
    fn eval(&self, t: f64, x: &[f64]) -> Dual {
        match self {
            Node::Const(v) => Dual::c(*v),
            Node::Time => Dual { v: t, d: 1.0 },
            Node::Coord(i) => Dual::c(x.get(*i).copied().unwrap_or(0.0)),
            Node::Neg(a) => {
                let a = a.eval(t, x);
                Dual { v: -a.v, d: -a.d }
            }
            Node::Add(a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                Dual {
                    v: a.v + b.v,
                    d: a.d + b.d,
                }
            }
            Node::Sub(a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                Dual {
                    v: a.v - b.v,
                    d: a.d - b.d,
                }
            }
            Node::Mul(a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                Dual {
                    v: a.v * b.v,
                    d: a.d * b.v + a.v * b.d,
                }
            }
            Node::Div(a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                Dual {
                    v: a.v / b.v,
                    d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
                }
            }
            Node::Pow(a, b) => {
                let (a, b) = (a.eval(t, x), b.eval(t, x));
                let v = a.v.powf(b.v);
                // d(a^b) = b a^(b-1) a' + a^b ln(a) b'
                let mut d = 0.0;
                if a.d != 0.0 {
                    d += b.v * a.v.powf(b.v - 1.0) * a.d;
                }
                if b.d != 0.0 {
                    d += v * a.v.ln() * b.d;
                }
                Dual { v, d }
            }
            Node::Call(f, a) => {
                let a = a.eval(t, x);
                match f {
                    Func::Sin => Dual {
                        v: a.v.sin(),
                        d: a.v.cos() * a.d,
                    },
                    Func::Cos => Dual {
                        v: a.v.cos(),
                        d: -a.v.sin() * a.d,
                    },
                    Func::Exp => {
                        let e = a.v.exp();
                        Dual { v: e, d: e * a.d }
                    }
                    Func::Sqrt => {
                        let s = a.v.sqrt();
                        Dual {
                            v: s,
                            d: if a.d == 0.0 { 0.0 } else { 0.5 * a.d / s },
                        }
                    }
                }
            }
        }
    }

    fn depends_on_time(&self) -> bool {
        match self {
            Node::Const(_) | Node::Coord(_) => false,
            Node::Time => true,
            Node::Neg(a) | Node::Call(_, a) => a.depends_on_time(),
            Node::Add(a, b)
            | Node::Sub(a, b)
            | Node::Mul(a, b)
            | Node::Div(a, b)
            | Node::Pow(a, b) => a.depends_on_time() || b.depends_on_time(),
        }
    }
}

/// A parsed scalar expression in `(t, x)`.
#[derive(Clone, PartialEq)]
pub struct Expr {
    source: String,
    root: Node,
}

impl Expr {
    pub fn parse(text: &str) -> Result<Self> {
        let tokens = tokenize(text)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
        };
        let root = p.expr()?;
        if p.pos != tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in '{text}'"
            )));
        }
        Ok(Self {
            source: text.to_string(),
            root,
        })
    }

    pub fn constant(v: f64) -> Self {
        Self {
            source: format!("{v:?}"),
            root: Node::Const(v),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.root.eval(t, x).v
    }

    /// Exact partial derivative in `t`.
    pub fn eval_dt(&self, t: f64, x: &[f64]) -> f64 {
        self.root.eval(t, x).d
    }

    pub fn is_time_independent(&self) -> bool {
        !self.root.depends_on_time()
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.root, Node::Const(v) if v == 0.0)
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// The expression multiplied by a constant.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            source: format!("{s:?}*({})", self.source),
            root: Node::Mul(Box::new(Node::Const(s)), Box::new(self.root.clone())),
        }
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({:?})", self.source)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl Serialize for Expr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(text: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number '{s}' in '{text}'")))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!(
                "unexpected character '{c}' in '{text}'"
            )));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Tok],
    pos: usize,
}

impl Parser<'_> {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Tok::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect_op(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expression(format!(
                "expected '{op}' at token {}",
                self.pos
            )))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Node::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Node::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Node::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek_op() {
            Some('-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Node> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end of expression".into()))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Node::Const(v)),
            Tok::Op('(') => {
                let inner = self.expr()?;
                self.expect_op(')')?;
                Ok(inner)
            }
            Tok::Op(c) => Err(Error::Expression(format!("unexpected '{c}'"))),
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    _ => None,
                };
                if let Some(f) = func {
                    self.expect_op('(')?;
                    let arg = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(Node::Call(f, Box::new(arg)));
                }
                match name.as_str() {
                    "t" => Ok(Node::Time),
                    "x" | "x0" => Ok(Node::Coord(0)),
                    "y" | "x1" => Ok(Node::Coord(1)),
                    "z" | "x2" => Ok(Node::Coord(2)),
                    "pi" => Ok(Node::Const(std::f64::consts::PI)),
                    "e" => Ok(Node::Const(std::f64::consts::E)),
                    other => Err(Error::Expression(format!("unknown identifier '{other}'"))),
                }
            }
        }
    }
}
