//! Oscillator expressions: parsing, evaluation, special functions, parity.
//!
//! The grammar is documented in `docs/expr-grammar.md`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OscError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` at byte {offset} takes {expected} argument(s), got {got}")]
    Arity { name: String, offset: usize, expected: usize, got: usize },
    #[error("unbound variable `{name}` at byte {offset}")]
    UnboundVariable { name: String, offset: usize },
    #[error("domain error at byte {offset}: {message}")]
    Domain { offset: usize, message: String },
    #[error("invalid oscillator: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    /// Spatial coordinate `x_i`, 1-based.
    X(u8),
    Omega,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    fn value(self) -> f64 {
        match self {
            Constant::Pi => PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
    Gamma,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "gamma" => Func::Gamma,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Gamma => "gamma",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone)]
pub enum ExprKind {
    Num(f64),
    Const(Constant),
    Var(Var),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
    BesselJ(u32, Box<Expr>),
}

/// Expression node with the byte offset of its source text. Equality is
/// structural and ignores offsets.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub offset: usize,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        use ExprKind::*;
        match (&self.kind, &other.kind) {
            (Num(a), Num(b)) => a.to_bits() == b.to_bits(),
            (Const(a), Const(b)) => a == b,
            (Var(a), Var(b)) => a == b,
            (Neg(a), Neg(b)) => a == b,
            (Binary(o1, a1, b1), Binary(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            (Call(f1, a), Call(f2, b)) => f1 == f2 && a == b,
            (BesselJ(n1, a), BesselJ(n2, b)) => n1 == n2 && a == b,
            _ => false,
        }
    }
}

impl Expr {
    fn new(kind: ExprKind, offset: usize) -> Self {
        Self { kind, offset }
    }

    pub fn variables(&self) -> BTreeSet<Var> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<Var>) {
        match &self.kind {
            ExprKind::Var(v) => {
                out.insert(*v);
            }
            ExprKind::Neg(a) | ExprKind::Call(_, a) | ExprKind::BesselJ(_, a) => a.collect_vars(out),
            ExprKind::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            ExprKind::Num(_) | ExprKind::Const(_) => {}
        }
    }

    /// Highest spatial coordinate index referenced (0 for none).
    pub fn spatial_dimension(&self) -> usize {
        self.variables()
            .iter()
            .filter_map(|v| match v {
                Var::X(i) => Some(*i as usize),
                Var::Omega => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn uses_omega(&self) -> bool {
        self.variables().contains(&Var::Omega)
    }

    /// Canonical fully parenthesized text; parses back to an equal tree.
    pub fn canonical(&self) -> String {
        let multi = self.spatial_dimension() > 1;
        let mut s = String::new();
        self.print(&mut s, multi);
        s
    }

    fn print(&self, out: &mut String, multi: bool) {
        match &self.kind {
            ExprKind::Num(v) => out.push_str(&format!("{v:?}")),
            ExprKind::Const(Constant::Pi) => out.push_str("pi"),
            ExprKind::Const(Constant::E) => out.push('e'),
            ExprKind::Var(Var::Omega) => out.push('w'),
            ExprKind::Var(Var::X(i)) => {
                if *i == 1 && !multi {
                    out.push('x');
                } else {
                    out.push_str(&format!("x{i}"));
                }
            }
            ExprKind::Neg(a) => {
                out.push_str("(-");
                a.print(out, multi);
                out.push(')');
            }
            ExprKind::Binary(op, a, b) => {
                out.push('(');
                a.print(out, multi);
                out.push(' ');
                out.push_str(op.symbol());
                out.push(' ');
                b.print(out, multi);
                out.push(')');
            }
            ExprKind::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.print(out, multi);
                out.push(')');
            }
            ExprKind::BesselJ(n, a) => {
                out.push_str(&format!("besselj({n}, "));
                a.print(out, multi);
                out.push(')');
            }
        }
    }

    pub fn eval(&self, b: &Bindings) -> Result<f64, OscError> {
        let v = match &self.kind {
            ExprKind::Num(v) => *v,
            ExprKind::Const(c) => c.value(),
            ExprKind::Var(var) => {
                b.get(*var).ok_or_else(|| OscError::UnboundVariable { name: var_name(*var), offset: self.offset })?
            }
            ExprKind::Neg(a) => -a.eval(b)?,
            ExprKind::Binary(op, l, r) => {
                let (x, y) = (l.eval(b)?, r.eval(b)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        x / y
                    }
                    BinOp::Pow => power(x, y).map_err(|m| self.domain(m))?,
                }
            }
            ExprKind::Call(f, a) => {
                let x = a.eval(b)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Abs => x.abs(),
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain(format!("sqrt of negative value {x}")));
                        }
                        x.sqrt()
                    }
                    Func::Gamma => gamma_fn(x).map_err(|e| self.domain(e.to_string()))?,
                }
            }
            ExprKind::BesselJ(n, a) => {
                let x = a.eval(b)?;
                bessel_j(*n as i64, x).map_err(|e| self.domain(e.to_string()))?
            }
        };
        if !v.is_finite() {
            return Err(self.domain(format!("non-finite result {v}")));
        }
        Ok(v)
    }

    fn domain(&self, message: impl Into<String>) -> OscError {
        OscError::Domain { offset: self.offset, message: message.into() }
    }

    /// Splits a sum into per-coordinate terms: `Some(parts)` with
    /// `Σ parts[i](x_{i+1})` equal to `self` when every additive term depends
    /// on at most one coordinate. Constant terms join the first coordinate.
    pub(crate) fn additive_split(&self, dimension: usize) -> Option<Vec<Expr>> {
        let mut terms = Vec::new();
        self.collect_terms(false, &mut terms);
        let mut parts: Vec<Option<Expr>> = vec![None; dimension];
        for (negated, term) in terms {
            let vars = term.variables();
            if vars.contains(&Var::Omega) || vars.len() > 1 {
                return None;
            }
            let axis = match vars.iter().next() {
                Some(Var::X(i)) => *i as usize - 1,
                _ => 0,
            };
            if axis >= dimension {
                return None;
            }
            let offset = term.offset;
            let term = if negated { Expr::new(ExprKind::Neg(Box::new(term)), offset) } else { term };
            parts[axis] = Some(match parts[axis].take() {
                None => term,
                Some(acc) => Expr::new(ExprKind::Binary(BinOp::Add, Box::new(acc), Box::new(term)), offset),
            });
        }
        Some(parts.into_iter().map(|p| p.unwrap_or(Expr::new(ExprKind::Num(0.0), 0))).collect())
    }

    fn collect_terms(&self, negated: bool, out: &mut Vec<(bool, Expr)>) {
        match &self.kind {
            ExprKind::Binary(BinOp::Add, a, b) => {
                a.collect_terms(negated, out);
                b.collect_terms(negated, out);
            }
            ExprKind::Binary(BinOp::Sub, a, b) => {
                a.collect_terms(negated, out);
                b.collect_terms(!negated, out);
            }
            ExprKind::Neg(a) => a.collect_terms(!negated, out),
            _ => out.push((negated, self.clone())),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

fn var_name(v: Var) -> String {
    match v {
        Var::X(i) => format!("x{i}"),
        Var::Omega => "w".into(),
    }
}

fn power(x: f64, y: f64) -> Result<f64, String> {
    if y.fract() == 0.0 && y.abs() <= i32::MAX as f64 {
        if x == 0.0 && y < 0.0 {
            return Err("zero raised to a negative power".into());
        }
        return Ok(x.powi(y as i32));
    }
    if x < 0.0 {
        return Err(format!("negative base {x} with non-integer exponent {y}"));
    }
    if x == 0.0 && y < 0.0 {
        return Err("zero raised to a negative power".into());
    }
    Ok(x.powf(y))
}

/// Variable values for [`Expr::eval`]; coordinates beyond `dimension` and an
/// absent `omega` are unbound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bindings {
    pub x: [f64; 3],
    pub dimension: usize,
    pub omega: Option<f64>,
}

impl Bindings {
    pub fn x(x: f64) -> Self {
        Self { x: [x, 0.0, 0.0], dimension: 1, omega: None }
    }

    pub fn point(coords: &[f64]) -> Self {
        let mut x = [0.0; 3];
        x[..coords.len()].copy_from_slice(coords);
        Self { x, dimension: coords.len(), omega: None }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = Some(omega);
        self
    }

    pub fn empty() -> Self {
        Self { x: [0.0; 3], dimension: 0, omega: None }
    }

    fn get(&self, var: Var) -> Option<f64> {
        match var {
            Var::X(i) if (i as usize) <= self.dimension => Some(self.x[i as usize - 1]),
            Var::X(_) => None,
            Var::Omega => self.omega,
        }
    }
}

pub fn eval(ast: &Expr, bindings: &Bindings) -> Result<f64, OscError> {
    ast.eval(bindings)
}

// ---------------------------------------------------------------------------
// Parser

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str) -> Result<Vec<(Token, usize)>, OscError> {
        let mut lx = Lexer { text, pos: 0 };
        let mut out = Vec::new();
        loop {
            let (tok, at) = lx.next()?;
            let end = tok == Token::End;
            out.push((tok, at));
            if end {
                return Ok(out);
            }
        }
    }

    fn next(&mut self) -> Result<(Token, usize), OscError> {
        let rest = &self.text[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        let start = self.pos;
        let Some(c) = trimmed.chars().next() else {
            return Ok((Token::End, start));
        };
        if c.is_ascii_digit() || c == '.' {
            return self.number(start);
        }
        if c.is_alphabetic() || c == '_' {
            let len = trimmed
                .char_indices()
                .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_'))
                .map_or(trimmed.len(), |(i, _)| i);
            self.pos += len;
            return Ok((Token::Ident(trimmed[..len].to_string()), start));
        }
        self.pos += c.len_utf8();
        let tok = match c {
            '+' | '-' | '*' | '/' | '^' => Token::Op(c),
            '×' | '·' => Token::Op('*'),
            '−' => Token::Op('-'),
            '÷' => Token::Op('/'),
            '(' => Token::LParen,
            ')' => Token::RParen,
            ',' => Token::Comma,
            _ => return Err(OscError::Syntax { offset: start, message: format!("unexpected character `{c}`") }),
        };
        Ok((tok, start))
    }

    fn number(&mut self, start: usize) -> Result<(Token, usize), OscError> {
        let bytes = self.text.as_bytes();
        let mut i = start;
        let digits = |i: &mut usize| {
            let from = *i;
            while *i < bytes.len() && bytes[*i].is_ascii_digit() {
                *i += 1;
            }
            *i - from
        };
        let mut mantissa = digits(&mut i);
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            mantissa += digits(&mut i);
        }
        if mantissa == 0 {
            return Err(OscError::Syntax { offset: start, message: "malformed number".into() });
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if digits(&mut j) > 0 {
                i = j;
            }
        }
        let text = &self.text[start..i];
        let value: f64 = text
            .parse()
            .map_err(|_| OscError::Syntax { offset: start, message: format!("malformed number `{text}`") })?;
        self.pos = i;
        Ok((Token::Num(value), start))
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Token, usize) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, message: impl Into<String>) -> OscError {
        OscError::Syntax { offset: self.offset(), message: message.into() }
    }

    fn expect(&mut self, tok: Token, what: &str) -> Result<(), OscError> {
        if *self.peek() == tok {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn expr(&mut self) -> Result<Expr, OscError> {
        let mut lhs = self.term()?;
        while let Token::Op(c @ ('+' | '-')) = *self.peek() {
            let (_, at) = self.bump();
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), at);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, OscError> {
        let mut lhs = self.unary()?;
        while let Token::Op(c @ ('*' | '/')) = *self.peek() {
            let (_, at) = self.bump();
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), at);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, OscError> {
        match *self.peek() {
            Token::Op('-') => {
                let (_, at) = self.bump();
                Ok(Expr::new(ExprKind::Neg(Box::new(self.unary()?)), at))
            }
            Token::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, OscError> {
        let base = self.primary()?;
        if *self.peek() == Token::Op('^') {
            let (_, at) = self.bump();
            let exponent = self.exponent()?;
            return Ok(Expr::new(ExprKind::Binary(BinOp::Pow, Box::new(base), Box::new(exponent)), at));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, OscError> {
        match *self.peek() {
            Token::Op('-') => {
                let (_, at) = self.bump();
                Ok(Expr::new(ExprKind::Neg(Box::new(self.exponent()?)), at))
            }
            Token::Op('+') => {
                self.bump();
                self.exponent()
            }
            _ => self.power(),
        }
    }

    fn primary(&mut self) -> Result<Expr, OscError> {
        let (tok, at) = self.bump();
        match tok {
            Token::Num(v) => Ok(Expr::new(ExprKind::Num(v), at)),
            Token::LParen => {
                let inner = self.expr()?;
                self.expect(Token::RParen, "`)`")?;
                Ok(inner)
            }
            Token::Ident(name) => self.identifier(name, at),
            Token::End => Err(OscError::Syntax { offset: at, message: "unexpected end of input".into() }),
            other => Err(OscError::Syntax { offset: at, message: format!("unexpected token {other:?}") }),
        }
    }

    fn identifier(&mut self, name: String, at: usize) -> Result<Expr, OscError> {
        let is_call = *self.peek() == Token::LParen;
        if !is_call {
            let kind = match name.as_str() {
                "x" | "x1" => ExprKind::Var(Var::X(1)),
                "x2" => ExprKind::Var(Var::X(2)),
                "x3" => ExprKind::Var(Var::X(3)),
                "w" | "omega" | "ω" => ExprKind::Var(Var::Omega),
                "pi" | "π" => ExprKind::Const(Constant::Pi),
                "e" => ExprKind::Const(Constant::E),
                _ if Func::from_name(&name).is_some() || name == "besselj" => {
                    return Err(self.error(format!("expected `(` after `{name}`")));
                }
                _ => return Err(OscError::UnknownIdentifier { name, offset: at }),
            };
            return Ok(Expr::new(kind, at));
        }
        let func = Func::from_name(&name);
        if func.is_none() && name != "besselj" {
            return Err(OscError::UnknownIdentifier { name, offset: at });
        }
        self.bump();
        let mut args = Vec::new();
        if *self.peek() != Token::RParen {
            args.push(self.expr()?);
            while *self.peek() == Token::Comma {
                self.bump();
                args.push(self.expr()?);
            }
        }
        self.expect(Token::RParen, "`)` or `,`")?;
        let expected = if func.is_some() { 1 } else { 2 };
        if args.len() != expected {
            return Err(OscError::Arity { name, offset: at, expected, got: args.len() });
        }
        let mut args = args.into_iter();
        match func {
            Some(f) => Ok(Expr::new(ExprKind::Call(f, Box::new(args.next().expect("one"))), at)),
            None => {
                let order = args.next().expect("two");
                let ExprKind::Num(v) = order.kind else {
                    return Err(OscError::Syntax {
                        offset: order.offset,
                        message: "besselj order must be a non-negative integer literal".into(),
                    });
                };
                if v < 0.0 || v.fract() != 0.0 || v > 1000.0 {
                    return Err(OscError::Syntax {
                        offset: order.offset,
                        message: format!("besselj order {v} is not a non-negative integer"),
                    });
                }
                Ok(Expr::new(ExprKind::BesselJ(v as u32, Box::new(args.next().expect("two"))), at))
            }
        }
    }
}

pub fn parse(text: &str) -> Result<Expr, OscError> {
    let tokens = Lexer::tokens(text)?;
    let mut p = Parser { tokens, pos: 0 };
    let e = p.expr()?;
    if *p.peek() != Token::End {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Special functions

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecialError {
    #[error("Bessel order {0} is negative")]
    NegativeOrder(i64),
    #[error("Bessel argument {0} outside the supported range |x| ≤ 1e6")]
    BesselArgument(f64),
    #[error("gamma is only supported for positive arguments, got {0}")]
    GammaDomain(f64),
}

pub const BESSEL_MAX_ARGUMENT: f64 = 1e6;

/// Bessel function of the first kind `J_ν(x)` for integer `ν ≥ 0`.
///
/// Power series for `|x| ≤ ν + 2`, otherwise Miller's downward recurrence
/// normalized by `J_0 + 2 Σ J_{2k} = 1`. Cost grows linearly in `|x|`.
pub fn bessel_j(order: i64, x: f64) -> Result<f64, SpecialError> {
    if order < 0 {
        return Err(SpecialError::NegativeOrder(order));
    }
    if !(x.abs() <= BESSEL_MAX_ARGUMENT) {
        return Err(SpecialError::BesselArgument(x));
    }
    let n = order as usize;
    let sign = if x < 0.0 && n % 2 == 1 { -1.0 } else { 1.0 };
    let ax = x.abs();
    if ax == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let value = if ax <= n as f64 + 2.0 { bessel_series(n, ax) } else { bessel_miller(n, ax) };
    Ok(sign * value)
}

fn bessel_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    // (x/2)^n / n! built incrementally to avoid overflow.
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let q = -half * half;
    let mut sum = term;
    for m in 1..200 {
        term *= q / (m as f64 * (m + n) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn bessel_miller(n: usize, x: f64) -> f64 {
    let start = {
        let top = (n as f64).max(x);
        let m = top + 30.0 + 2.0 * top.sqrt();
        2 * ((m as usize) / 2 + 1)
    };
    let two_over_x = 2.0 / x;
    let (mut next, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut result = 0.0;
    for k in (1..=start).rev() {
        // cur = J_k (unnormalized), next = J_{k+1}.
        let prev = k as f64 * two_over_x * cur - next;
        next = cur;
        cur = prev;
        let idx = k - 1;
        if idx == n {
            result = cur;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
    }
    // cur now holds J_0.
    if n == 0 {
        result = cur;
    }
    result / (norm + cur)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `Γ(x)` for `x > 0` (Lanczos, with reflection below 1/2).
pub fn gamma_fn(x: f64) -> Result<f64, SpecialError> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(SpecialError::GammaDomain(x));
    }
    if x.fract() == 0.0 && x <= 30.0 {
        return Ok((1..x as u64).map(|k| k as f64).product());
    }
    Ok(lanczos(x))
}

fn lanczos(x: f64) -> f64 {
    if x < 0.5 {
        return PI / ((PI * x).sin() * lanczos(1.0 - x));
    }
    let z = x - 1.0;
    let mut a = LANCZOS[0];
    let t = z + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (z + i as f64);
    }
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * a
}

// ---------------------------------------------------------------------------
// Oscillator specifications and parity

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
    None,
}

impl Parity {
    pub fn name(self) -> &'static str {
        match self {
            Parity::Even => "even",
            Parity::Odd => "odd",
            Parity::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OscillatorKind {
    /// `e^{iωg(x)}` with phase `g`.
    Phase,
    /// Real kernel `h_ω(x)`.
    Kernel,
}

impl OscillatorKind {
    pub fn name(self) -> &'static str {
        match self {
            OscillatorKind::Phase => "phase",
            OscillatorKind::Kernel => "kernel",
        }
    }
}

/// Tolerance used by [`OscillatorSpec`] when detecting parity, relative to
/// `max(1, max|g|)`.
pub const PARITY_TOLERANCE: f64 = 1e-12;

const PARITY_SAMPLES: usize = 64;
/// Frequencies at which kernel parity is probed.
const KERNEL_PARITY_OMEGAS: [f64; 5] = [0.37, 1.3, 7.1, 23.9, 101.7];

#[derive(Debug, Clone, PartialEq)]
pub struct OscillatorSpec {
    pub kind: OscillatorKind,
    pub expr: Expr,
    pub dimension: usize,
    pub declared_parity: Option<Parity>,
}

impl OscillatorSpec {
    pub fn new(kind: OscillatorKind, text: &str, dimension: Option<usize>) -> Result<Self, OscError> {
        let expr = parse(text)?;
        let used = expr.spatial_dimension();
        let dimension = dimension.unwrap_or(used.max(1));
        if !(1..=3).contains(&dimension) {
            return Err(OscError::InvalidSpec(format!("dimension {dimension} not in 1..=3")));
        }
        if used > dimension {
            return Err(OscError::InvalidSpec(format!(
                "expression uses x{used} but the oscillator is {dimension}-dimensional"
            )));
        }
        if kind == OscillatorKind::Phase && expr.uses_omega() {
            return Err(OscError::InvalidSpec("a phase g(x) must not depend on the frequency".into()));
        }
        Ok(Self { kind, expr, dimension, declared_parity: None })
    }

    pub fn phase(text: &str) -> Result<Self, OscError> {
        Self::new(OscillatorKind::Phase, text, None)
    }

    pub fn kernel(text: &str) -> Result<Self, OscError> {
        Self::new(OscillatorKind::Kernel, text, None)
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.declared_parity = Some(parity);
        self
    }

    pub fn text(&self) -> String {
        self.expr.canonical()
    }

    /// Declared parity, else the detected one. Multi-dimensional
    /// oscillators report [`Parity::None`].
    pub fn parity(&self) -> Parity {
        if let Some(p) = self.declared_parity {
            return p;
        }
        if self.dimension != 1 {
            return Parity::None;
        }
        match self.kind {
            OscillatorKind::Phase => detect_parity(&self.expr, PARITY_TOLERANCE),
            OscillatorKind::Kernel => detect_kernel_parity(&self.expr, PARITY_TOLERANCE),
        }
    }

    /// `g(x)` of a phase oscillator.
    pub fn phase_at(&self, x: &[f64]) -> Result<f64, OscError> {
        self.expr.eval(&Bindings::point(x))
    }

    /// `h_ω(x)` of a kernel oscillator.
    pub fn kernel_at(&self, x: &[f64], omega: f64) -> Result<f64, OscError> {
        self.expr.eval(&Bindings::point(x).with_omega(omega))
    }
}

fn classify(pairs: impl Iterator<Item = Option<(f64, f64)>>, tol: f64) -> Parity {
    let (mut even, mut odd, mut scale) = (0.0f64, 0.0f64, 1.0f64);
    for pair in pairs {
        let Some((a, b)) = pair else {
            return Parity::None;
        };
        even = even.max((a - b).abs());
        odd = odd.max((a + b).abs());
        scale = scale.max(a.abs()).max(b.abs());
    }
    if even <= tol * scale {
        Parity::Even
    } else if odd <= tol * scale {
        Parity::Odd
    } else {
        Parity::None
    }
}

fn symmetric_points() -> impl Iterator<Item = f64> {
    (0..PARITY_SAMPLES).map(|i| (i as f64 + 0.5) / PARITY_SAMPLES as f64)
}

/// Parity of a 1-D phase from 64 symmetric sample pairs `±x`, `x ∈ (0,1)`.
/// Deviations are measured relative to `max(1, max|g|)`; an evaluation
/// failure yields [`Parity::None`].
pub fn detect_parity(g: &Expr, tol: f64) -> Parity {
    classify(symmetric_points().map(|x| Some((g.eval(&Bindings::x(x)).ok()?, g.eval(&Bindings::x(-x)).ok()?))), tol)
}

/// Parity in `x` of a kernel `h_ω(x)`, required at every probe frequency.
pub fn detect_kernel_parity(h: &Expr, tol: f64) -> Parity {
    classify(
        KERNEL_PARITY_OMEGAS.iter().flat_map(|&w| {
            symmetric_points().map(move |x| {
                let at = |x: f64| h.eval(&Bindings::x(x).with_omega(w)).ok();
                Some((at(x)?, at(-x)?))
            })
        }),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, b: Bindings) -> f64 {
        parse(text).unwrap().eval(&b).unwrap()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(ev("0.5*x^2+0.25*x", Bindings::x(2.0)), 2.5);
        assert_eq!(ev("sin(x+1)", Bindings::x(-1.0)), 0.0);
        assert_eq!(ev("besselj(11, w*x)", Bindings::x(0.0).with_omega(3.0)), 0.0);
        assert_eq!(parse("sin("), Err(OscError::Syntax { offset: 4, message: "unexpected end of input".into() }));
    }

    #[test]
    fn eval_examples() {
        assert_eq!(ev("x^2", Bindings::x(-3.0)), 9.0);
        assert_eq!(ev("sqrt(x+1)", Bindings::x(-1.0)), 0.0);
        assert_eq!(ev("gamma(2)", Bindings::empty()), 1.0);
        assert!(matches!(parse("sqrt(x)").unwrap().eval(&Bindings::x(-1.0)), Err(OscError::Domain { offset: 0, .. })));
        assert!(matches!(parse("1/(x-1)").unwrap().eval(&Bindings::x(1.0)), Err(OscError::Domain { offset: 1, .. })));
        assert!(matches!(parse("gamma(x)").unwrap().eval(&Bindings::x(0.0)), Err(OscError::Domain { .. })));
        assert!(matches!(
            parse("x*w").unwrap().eval(&Bindings::x(1.0)),
            Err(OscError::UnboundVariable { offset: 2, .. })
        ));
        assert!(matches!(parse("x2").unwrap().eval(&Bindings::x(1.0)), Err(OscError::UnboundVariable { .. })));
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("-x^2", Bindings::x(3.0)), -9.0);
        assert_eq!(ev("2^3^2", Bindings::empty()), 512.0);
        assert_eq!(ev("2^-1", Bindings::empty()), 0.5);
        assert_eq!(ev("1-2-3", Bindings::empty()), -4.0);
        assert_eq!(ev("8/4/2", Bindings::empty()), 1.0);
        assert_eq!(ev("2*3+4*5", Bindings::empty()), 26.0);
        assert_eq!(ev("-2*-3", Bindings::empty()), 6.0);
        assert_eq!(ev("(1+2)*3", Bindings::empty()), 9.0);
        assert_eq!(ev("1e-3*1E3", Bindings::empty()), 1.0);
        assert_eq!(ev(".5+5.", Bindings::empty()), 5.5);
        assert!((ev("pi", Bindings::empty()) - PI).abs() < 1e-16);
        assert_eq!(ev("x1*x2+x3", Bindings::point(&[2.0, 3.0, 4.0])), 10.0);
        assert_eq!(ev("omega*ω*w", Bindings::empty().with_omega(2.0)), 8.0);
    }

    #[test]
    fn parse_errors_carry_offsets() {
        let cases = [
            ("", 0),
            ("x +", 3),
            ("(x", 2),
            ("x)", 1),
            ("2 $ 3", 2),
            ("sin x", 4),
            ("besselj(x, 1)", 8),
            ("besselj(1.5, x)", 8),
        ];
        for (text, offset) in cases {
            match parse(text) {
                Err(OscError::Syntax { offset: o, .. }) => assert_eq!(o, offset, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert_eq!(parse("foo(x)"), Err(OscError::UnknownIdentifier { name: "foo".into(), offset: 0 }));
        assert_eq!(parse("1 + y"), Err(OscError::UnknownIdentifier { name: "y".into(), offset: 4 }));
        assert!(matches!(parse("sin(x, x)"), Err(OscError::Arity { expected: 1, got: 2, .. })));
        assert!(matches!(parse("besselj(2)"), Err(OscError::Arity { expected: 2, got: 1, .. })));
    }

    #[test]
    fn canonical_round_trip() {
        for text in [
            "0.5*x^2+0.25*x",
            "sin(x)^2*sqrt(x+1)",
            "besselj(8, w*x^2)^2",
            "gamma(0.5*sin(w*x)+2)",
            "sin(x1)/sqrt(x1*x2+3)",
            "-x^-2 + e - pi",
            "1e-7*x - 1e300",
        ] {
            let a = parse(text).unwrap();
            let printed = a.canonical();
            let b = parse(&printed).unwrap();
            assert_eq!(a, b, "{text} -> {printed}");
            assert_eq!(printed, b.canonical());
        }
        assert_eq!(parse("x1+x2").unwrap().canonical(), "(x1 + x2)");
        assert_eq!(parse("x^2").unwrap().canonical(), "(x ^ 2.0)");
    }

    #[test]
    fn parity_examples() {
        assert_eq!(detect_parity(&parse("x^2").unwrap(), 1e-12), Parity::Even);
        assert_eq!(detect_parity(&parse("x").unwrap(), 1e-12), Parity::Odd);
        assert_eq!(detect_parity(&parse("0.5*x^2+0.25*x").unwrap(), 1e-12), Parity::None);
        assert_eq!(detect_parity(&parse("-x").unwrap(), 1e-12), Parity::Odd);
        assert_eq!(detect_parity(&parse("sqrt(x)").unwrap(), 1e-12), Parity::None);
        let k = OscillatorSpec::kernel("besselj(11, w*x)").unwrap();
        assert_eq!(k.parity(), Parity::Odd);
        let k = OscillatorSpec::kernel("cos(sin(w*x)+1)").unwrap();
        assert_eq!(k.parity(), Parity::None);
        let k = OscillatorSpec::kernel("besselj(8, w*x^2)^2").unwrap();
        assert_eq!(k.parity(), Parity::Even);
        let declared = OscillatorSpec::phase("x").unwrap().with_parity(Parity::None);
        assert_eq!(declared.parity(), Parity::None);
    }

    #[test]
    fn spec_validation() {
        assert!(matches!(OscillatorSpec::phase("w*x"), Err(OscError::InvalidSpec(_))));
        assert_eq!(OscillatorSpec::phase("x1+x2").unwrap().dimension, 2);
        assert!(OscillatorSpec::new(OscillatorKind::Phase, "x3", Some(2)).is_err());
        assert_eq!(OscillatorSpec::new(OscillatorKind::Phase, "x", Some(3)).unwrap().dimension, 3);
    }

    #[test]
    fn additive_split() {
        let e = parse("x1 - 2*x2 + 3 + x1^2").unwrap();
        let parts = e.additive_split(2).unwrap();
        let (a, b) = (1.7, -0.4);
        let whole = e.eval(&Bindings::point(&[a, b])).unwrap();
        let p0 = parts[0].eval(&Bindings::point(&[a])).unwrap();
        let p1 = parts[1].eval(&Bindings::point(&[0.0, b])).unwrap();
        assert!((whole - p0 - p1).abs() < 1e-15);
        assert!(parse("x1*x2").unwrap().additive_split(2).is_none());
        assert!(parse("sin(x1+x2)").unwrap().additive_split(2).is_none());
        let three = parse("x1+x2+x3").unwrap().additive_split(3).unwrap();
        assert_eq!(three.len(), 3);
    }

    #[test]
    fn special_function_examples() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(-1, 1.0), Err(SpecialError::NegativeOrder(-1)));
        assert_eq!(gamma_fn(1.0).unwrap(), 1.0);
        assert!((gamma_fn(2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_fn(1.5).unwrap() - PI.sqrt() / 2.0).abs() < 1e-15);
        assert!((gamma_fn(1.5).unwrap() - 0.886_226_925_5).abs() < 1e-10);
        assert!(gamma_fn(0.0).is_err() && gamma_fn(-2.5).is_err());
        // J_n(-x) = (-1)^n J_n(x).
        assert_eq!(bessel_j(3, -2.5).unwrap(), -bessel_j(3, 2.5).unwrap());
    }
}
