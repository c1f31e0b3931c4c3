//! A small expression language for coefficient fields and forcing terms.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! top    := '[' row (',' row)* ']' | '[' expr (',' expr)* ']' | expr
//! row    := '[' expr (',' expr)* ']'
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('+' | '-') unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | var | func '(' expr ')' | '(' expr ')'
//! var    := 'y' k ('[' c ']')? | 'x' ('[' c ']')?
//! func   := 'sin' | 'cos' | 'exp'
//! ```
//!
//! `yk` is the k-th fast variable (1-based) and `x` the physical point;
//! components are 1-based. In one dimension the component index may be
//! omitted.
//!
//! Coefficient expressions must be 1-periodic in every fast variable. This is
//! enforced syntactically: a fast coordinate may only occur inside the
//! argument of `sin`/`cos`, that argument must be affine in the fast
//! coordinates, and every coefficient must be an integer multiple of `2*pi`.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Tok {
    Num(f64),
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Comma,
    End,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    tok: Tok,
    pos: usize,
    len: usize,
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let single = match c {
            '+' => Some(Tok::Plus),
            '-' => Some(Tok::Minus),
            '*' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '^' => Some(Tok::Caret),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            '[' => Some(Tok::LBrack),
            ']' => Some(Tok::RBrack),
            ',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Token { tok, pos: i, len: 1 });
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Parse { pos: start, msg: format!("malformed number `{text}`") })?;
            out.push(Token { tok: Tok::Num(v), pos: start, len: i - start });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident, pos: start, len: i - start });
        } else {
            return Err(Error::Parse { pos: i, msg: format!("unexpected character `{c}`") });
        }
    }
    out.push(Token { tok: Tok::End, pos: src.len(), len: 0 });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

/// Variable reference, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Fast { slot: usize, comp: usize },
    Point { comp: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Expression node with the byte offset it starts at.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub node: Node,
    pub pos: usize,
}

impl Expr {
    pub fn eval(&self, x: &[f64], ys: &[f64], slot_dim: usize) -> f64 {
        match &self.node {
            Node::Num(v) => *v,
            Node::Var(Var::Fast { slot, comp }) => ys[slot * slot_dim + comp],
            Node::Var(Var::Point { comp }) => x[*comp],
            Node::Neg(e) => -e.eval(x, ys, slot_dim),
            Node::Bin(op, a, b) => {
                let (a, b) = (a.eval(x, ys, slot_dim), b.eval(x, ys, slot_dim));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => a.powf(b),
                }
            }
            Node::Call(f, a) => {
                let a = a.eval(x, ys, slot_dim);
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                }
            }
        }
    }

    fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match &self.node {
            Node::Num(_) => {}
            Node::Var(v) => f(*v),
            Node::Neg(e) | Node::Call(_, e) => e.visit_vars(f),
            Node::Bin(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    fn is_constant(&self) -> bool {
        let mut c = true;
        self.visit_vars(&mut |_| c = false);
        c
    }
}

/// Top-level shape of a parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Scalar(Expr),
    Vector(Vec<Expr>),
    Matrix(Vec<Vec<Expr>>),
}

impl Body {
    fn exprs(&self) -> Vec<&Expr> {
        match self {
            Body::Scalar(e) => vec![e],
            Body::Vector(v) => v.iter().collect(),
            Body::Matrix(m) => m.iter().flatten().collect(),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    at: usize,
    dim: usize,
    slot_dim: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Token {
        self.toks[self.at]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at];
        if t.tok != Tok::End {
            self.at += 1;
        }
        t
    }

    fn text(&self, t: Token) -> &'a str {
        &self.src[t.pos..t.pos + t.len]
    }

    fn err<T>(&self, pos: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Parse { pos, msg: msg.into() })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token> {
        let t = self.bump();
        if t.tok == tok {
            Ok(t)
        } else {
            self.err(t.pos, format!("expected {what}"))
        }
    }

    fn top(&mut self) -> Result<Body> {
        let body = if self.peek().tok == Tok::LBrack {
            let open = self.bump();
            if self.peek().tok == Tok::LBrack {
                let mut rows = vec![self.row()?];
                while self.peek().tok == Tok::Comma {
                    self.bump();
                    rows.push(self.row()?);
                }
                self.expect(Tok::RBrack, "`]`")?;
                let width = rows[0].len();
                if rows.iter().any(|r| r.len() != width) {
                    return self.err(open.pos, "matrix rows have different lengths");
                }
                Body::Matrix(rows)
            } else {
                let mut items = vec![self.expr()?];
                while self.peek().tok == Tok::Comma {
                    self.bump();
                    items.push(self.expr()?);
                }
                self.expect(Tok::RBrack, "`]`")?;
                Body::Vector(items)
            }
        } else {
            Body::Scalar(self.expr()?)
        };
        let t = self.peek();
        if t.tok != Tok::End {
            return self.err(t.pos, "unexpected trailing input");
        }
        Ok(body)
    }

    fn row(&mut self) -> Result<Vec<Expr>> {
        self.expect(Tok::LBrack, "`[`")?;
        let mut items = vec![self.expr()?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            items.push(self.expr()?);
        }
        self.expect(Tok::RBrack, "`]`")?;
        Ok(items)
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek().tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            let pos = lhs.pos;
            lhs = Expr { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek().tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            let pos = lhs.pos;
            lhs = Expr { node: Node::Bin(op, Box::new(lhs), Box::new(rhs)), pos };
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek().tok {
            Tok::Minus => {
                let t = self.bump();
                let e = self.unary()?;
                Ok(Expr { node: Node::Neg(Box::new(e)), pos: t.pos })
            }
            Tok::Plus => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek().tok == Tok::Caret {
            self.bump();
            let exp = self.unary()?;
            let pos = base.pos;
            return Ok(Expr { node: Node::Bin(BinOp::Pow, Box::new(base), Box::new(exp)), pos });
        }
        Ok(base)
    }

    fn component(&mut self, limit: usize, name: &str, pos: usize) -> Result<usize> {
        if self.peek().tok == Tok::LBrack {
            self.bump();
            let t = self.bump();
            let Tok::Num(v) = t.tok else {
                return self.err(t.pos, "expected a component index");
            };
            self.expect(Tok::RBrack, "`]`")?;
            if v.fract() != 0.0 || v < 1.0 || v as usize > limit {
                return self.err(t.pos, format!("component index of `{name}` must be an integer in 1..={limit}"));
            }
            Ok(v as usize - 1)
        } else if limit == 1 {
            Ok(0)
        } else {
            self.err(pos, format!("`{name}` is a {limit}-vector and needs a component index"))
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.bump();
        match t.tok {
            Tok::Num(v) => Ok(Expr { node: Node::Num(v), pos: t.pos }),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident => {
                let name = self.text(t);
                match name {
                    "pi" => Ok(Expr { node: Node::Num(PI), pos: t.pos }),
                    "sin" | "cos" | "exp" => {
                        let f = match name {
                            "sin" => Func::Sin,
                            "cos" => Func::Cos,
                            _ => Func::Exp,
                        };
                        self.expect(Tok::LParen, "`(` after function name")?;
                        let arg = self.expr()?;
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(Expr { node: Node::Call(f, Box::new(arg)), pos: t.pos })
                    }
                    "x" => {
                        let comp = self.component(self.dim, "x", t.pos)?;
                        Ok(Expr { node: Node::Var(Var::Point { comp }), pos: t.pos })
                    }
                    _ if name.len() > 1
                        && name.starts_with('y')
                        && name[1..].bytes().all(|b| b.is_ascii_digit()) =>
                    {
                        let k: usize = name[1..].parse().unwrap_or(0);
                        if k == 0 {
                            return self.err(t.pos, "fast variables are numbered from y1");
                        }
                        let comp = self.component(self.slot_dim, name, t.pos)?;
                        Ok(Expr { node: Node::Var(Var::Fast { slot: k - 1, comp }), pos: t.pos })
                    }
                    _ => self.err(t.pos, format!("unknown identifier `{name}`")),
                }
            }
            Tok::End => self.err(t.pos, "unexpected end of input"),
            _ => self.err(t.pos, "expected a number, variable, function or `(`"),
        }
    }
}

/// Affine form of a trigonometric argument in the fast coordinates.
struct Affine {
    coeffs: Vec<((usize, usize), f64)>,
}

impl Affine {
    fn free() -> Self {
        Affine { coeffs: Vec::new() }
    }

    fn scaled(mut self, s: f64) -> Self {
        self.coeffs.iter_mut().for_each(|(_, c)| *c *= s);
        self
    }

    fn merge(mut self, other: Affine, sign: f64) -> Self {
        for (k, c) in other.coeffs {
            match self.coeffs.iter_mut().find(|(kk, _)| *kk == k) {
                Some((_, cc)) => *cc += sign * c,
                None => self.coeffs.push((k, sign * c)),
            }
        }
        self
    }
}

fn has_fast(e: &Expr) -> bool {
    let mut found = false;
    e.visit_vars(&mut |v| found |= matches!(v, Var::Fast { .. }));
    found
}

fn violation<T>(pos: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::PeriodicityViolation { pos, msg: msg.into() })
}

fn affine(e: &Expr) -> Result<Affine> {
    if !has_fast(e) {
        return Ok(Affine::free());
    }
    match &e.node {
        Node::Var(Var::Fast { slot, comp }) => Ok(Affine { coeffs: vec![((*slot, *comp), 1.0)] }),
        Node::Neg(a) => Ok(affine(a)?.scaled(-1.0)),
        Node::Bin(BinOp::Add, a, b) => Ok(affine(a)?.merge(affine(b)?, 1.0)),
        Node::Bin(BinOp::Sub, a, b) => Ok(affine(a)?.merge(affine(b)?, -1.0)),
        Node::Bin(BinOp::Mul, a, b) => {
            if a.is_constant() {
                Ok(affine(b)?.scaled(a.eval(&[], &[], 1)))
            } else if b.is_constant() {
                Ok(affine(a)?.scaled(b.eval(&[], &[], 1)))
            } else {
                violation(e.pos, "fast variable multiplied by a non-constant factor inside a trigonometric argument")
            }
        }
        Node::Bin(BinOp::Div, a, b) if b.is_constant() => Ok(affine(a)?.scaled(1.0 / b.eval(&[], &[], 1))),
        _ => violation(e.pos, "trigonometric argument is not affine in the fast variables"),
    }
}

fn check_periodic(e: &Expr) -> Result<()> {
    match &e.node {
        Node::Num(_) | Node::Var(Var::Point { .. }) => Ok(()),
        Node::Var(Var::Fast { slot, .. }) => violation(
            e.pos,
            format!("fast variable y{} used outside a trigonometric argument", slot + 1),
        ),
        Node::Call(Func::Sin | Func::Cos, arg) => {
            for ((slot, _), c) in affine(arg)?.coeffs {
                let k = c / (2.0 * PI);
                if (k - k.round()).abs() > 1e-9 * k.abs().max(1.0) {
                    return violation(
                        e.pos,
                        format!("frequency {c} of y{} is not an integer multiple of 2*pi", slot + 1),
                    );
                }
            }
            Ok(())
        }
        Node::Call(Func::Exp, a) | Node::Neg(a) => check_periodic(a),
        Node::Bin(_, a, b) => {
            check_periodic(a)?;
            check_periodic(b)
        }
    }
}

/// Parsed expression together with the variable layout it was parsed for.
#[derive(Clone, PartialEq)]
pub struct CoefficientExpr {
    source: String,
    body: Body,
    dim: usize,
    slot_dim: usize,
    n_slots: usize,
    uses_point: bool,
}

impl fmt::Debug for CoefficientExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientExpr").field("source", &self.source).finish()
    }
}

fn parse_body(text: &str, dim: usize, slot_dim: usize) -> Result<Body> {
    if !(1..=2).contains(&dim) {
        return Err(Error::InvalidInput(format!("dimension must be 1 or 2, got {dim}")));
    }
    let mut p = Parser { src: text, toks: lex(text)?, at: 0, dim, slot_dim };
    p.top()
}

impl CoefficientExpr {
    fn build(text: &str, dim: usize, slot_dim: usize) -> Result<Self> {
        let body = parse_body(text, dim, slot_dim)?;
        match &body {
            Body::Scalar(_) => {}
            Body::Matrix(rows) if rows.len() == dim && rows[0].len() == dim => {}
            Body::Matrix(rows) => {
                return Err(Error::Parse {
                    pos: 0,
                    msg: format!("expected a {dim}x{dim} matrix, got {}x{}", rows.len(), rows[0].len()),
                })
            }
            Body::Vector(_) => {
                return Err(Error::Parse { pos: 0, msg: "a coefficient must be a scalar or a matrix".into() })
            }
        }
        for e in body.exprs() {
            check_periodic(e)?;
        }
        let mut n_slots = 0;
        let mut uses_point = false;
        for e in body.exprs() {
            e.visit_vars(&mut |v| match v {
                Var::Fast { slot, .. } => n_slots = n_slots.max(slot + 1),
                Var::Point { .. } => uses_point = true,
            });
        }
        Ok(CoefficientExpr { source: text.to_string(), body, dim, slot_dim, n_slots, uses_point })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slot_dim(&self) -> usize {
        self.slot_dim
    }

    /// Highest fast-variable index referenced.
    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    pub fn uses_point(&self) -> bool {
        self.uses_point
    }

    /// Scalar value; for matrix bodies the (0, 0) entry.
    pub fn eval_scalar(&self, x: &[f64], ys: &[f64]) -> f64 {
        match &self.body {
            Body::Scalar(e) => e.eval(x, ys, self.slot_dim),
            Body::Vector(v) => v[0].eval(x, ys, self.slot_dim),
            Body::Matrix(m) => m[0][0].eval(x, ys, self.slot_dim),
        }
    }

    /// Entry `(i, j)`; scalar bodies stand for multiples of the identity.
    pub fn eval_entries(&self, x: &[f64], ys: &[f64], out: &mut [[f64; 2]; 2]) {
        match &self.body {
            Body::Scalar(e) => {
                let v = e.eval(x, ys, self.slot_dim);
                *out = [[v, 0.0], [0.0, if self.dim == 2 { v } else { 0.0 }]];
            }
            Body::Matrix(m) => {
                *out = [[0.0; 2]; 2];
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        out[i][j] = m[i][j].eval(x, ys, self.slot_dim);
                    }
                }
            }
            Body::Vector(_) => unreachable!("rejected at parse time"),
        }
    }
}

/// Parses a periodic coefficient whose fast variables live in `R^dim`.
pub fn parse_coefficient(text: &str, dim: usize) -> Result<CoefficientExpr> {
    CoefficientExpr::build(text, dim, dim)
}

/// Parses a periodic profile `B(w)` with `w` in `R^cell_dim` written as `y1`,
/// producing a `dim x dim` matrix.
pub fn parse_cell_profile(text: &str, dim: usize, cell_dim: usize) -> Result<CoefficientExpr> {
    if cell_dim == 0 {
        return Err(Error::InvalidInput("cell dimension must be positive".into()));
    }
    let e = CoefficientExpr::build(text, dim, cell_dim)?;
    if e.n_slots > 1 {
        return Err(Error::InvalidInput("a cell profile has a single variable y1".into()));
    }
    Ok(e)
}

/// Expression in the physical point `x` only (forcing terms, boundary data).
#[derive(Clone, PartialEq)]
pub struct FieldExpr {
    source: String,
    body: Body,
}

impl fmt::Debug for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldExpr").field("source", &self.source).finish()
    }
}

impl FieldExpr {
    pub fn parse(text: &str, dim: usize) -> Result<Self> {
        let body = parse_body(text, dim, 1)?;
        for e in body.exprs() {
            if has_fast(e) {
                return Err(Error::Parse { pos: e.pos, msg: "field expressions may only use x".into() });
            }
        }
        if let Body::Matrix(_) = body {
            return Err(Error::Parse { pos: 0, msg: "field expressions are scalars or vectors".into() });
        }
        Ok(FieldExpr { source: text.to_string(), body })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of components (1 for a scalar).
    pub fn components(&self) -> usize {
        match &self.body {
            Body::Vector(v) => v.len(),
            _ => 1,
        }
    }

    pub fn eval(&self, x: &[f64], comp: usize) -> f64 {
        match &self.body {
            Body::Scalar(e) => e.eval(x, &[], 1),
            Body::Vector(v) => v[comp].eval(x, &[], 1),
            Body::Matrix(_) => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_one_scale() {
        let e = parse_coefficient("2 + sin(2*pi*y1)", 1).unwrap();
        assert_eq!(e.n_slots(), 1);
        assert!((e.eval_scalar(&[0.0], &[0.25]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn two_by_two_matrix() {
        let e = parse_coefficient("[[2+cos(2*pi*y1[1])*cos(2*pi*y2[2]), 0],[0, 2]]", 2).unwrap();
        assert_eq!(e.n_slots(), 2);
        let mut m = [[0.0; 2]; 2];
        e.eval_entries(&[0.0, 0.0], &[0.0, 0.3, 0.7, 0.0], &mut m);
        assert!((m[0][0] - 3.0).abs() < 1e-15);
        assert_eq!(m[1][1], 2.0);
        assert_eq!(m[0][1], 0.0);
    }

    #[test]
    fn non_integer_frequency_is_rejected() {
        assert!(matches!(parse_coefficient("sin(3.5*y1)", 1), Err(Error::PeriodicityViolation { pos: 0, .. })));
    }

    #[test]
    fn bare_fast_variable_is_rejected() {
        assert!(matches!(parse_coefficient("2 + y1", 1), Err(Error::PeriodicityViolation { pos: 4, .. })));
    }

    #[test]
    fn affine_combinations_and_phases_are_periodic() {
        let e = parse_coefficient("2 + cos(2*pi*(y1 - 3*y2) + 0.4) * exp(sin(4*pi*y2)/2)", 1).unwrap();
        let v = e.eval_scalar(&[0.0], &[0.1, 0.2]);
        let w = e.eval_scalar(&[0.0], &[1.1, -1.8]);
        assert!((v - w).abs() < 1e-13);
    }

    #[test]
    fn nonlinear_argument_is_rejected() {
        assert!(matches!(parse_coefficient("sin(2*pi*y1*y1)", 1), Err(Error::PeriodicityViolation { .. })));
        assert!(matches!(parse_coefficient("sin(2*pi*x*y1)", 1), Err(Error::PeriodicityViolation { .. })));
    }

    #[test]
    fn slow_point_dependence_is_allowed() {
        let e = parse_coefficient("(1 + x^2/2)*(2 + sin(2*pi*y1))", 1).unwrap();
        assert!(e.uses_point());
        assert!((e.eval_scalar(&[1.0], &[0.25]) - 4.5).abs() < 1e-14);
    }

    #[test]
    fn parse_errors_carry_positions() {
        match parse_coefficient("2 + * 3", 1) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("unexpected {other:?}"),
        }
        match parse_coefficient("sin(2*pi*y1", 1) {
            Err(Error::Parse { pos, .. }) => assert_eq!(pos, 11),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_coefficient("foo(y1)", 1), Err(Error::Parse { pos: 0, .. })));
        assert!(matches!(parse_coefficient("sin(2*pi*y1)", 2), Err(Error::Parse { .. })));
        assert!(matches!(parse_coefficient("sin(2*pi*y1[3])", 2), Err(Error::Parse { .. })));
    }

    #[test]
    fn precedence_and_power() {
        let e = FieldExpr::parse("1 + 2*3^2 - -4/2", 1).unwrap();
        assert_eq!(e.eval(&[0.0], 0), 21.0);
        let e = FieldExpr::parse("-2^2", 1).unwrap();
        assert_eq!(e.eval(&[0.0], 0), -4.0);
    }

    #[test]
    fn field_vectors() {
        let f = FieldExpr::parse("[sin(pi*x[1]), x[2]]", 2).unwrap();
        assert_eq!(f.components(), 2);
        assert_eq!(f.eval(&[0.5, 0.25], 1), 0.25);
        assert!(FieldExpr::parse("sin(2*pi*y1)", 1).is_err());
    }

    #[test]
    fn cell_profile_in_higher_dimension() {
        let b = parse_cell_profile("(2+sin(2*pi*y1[1]))*(2+cos(2*pi*y1[2]))", 1, 2).unwrap();
        assert_eq!(b.slot_dim(), 2);
        assert!((b.eval_scalar(&[0.0], &[0.25, 0.0]) - 9.0).abs() < 1e-14);
    }
}
