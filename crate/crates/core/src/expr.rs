//! Scalar expressions over chart coordinates.
//!
//! Grammar (EBNF). Whitespace is ignored between tokens.
//!
//! ```text
//! expr     = term { ("+" | "-") term } ;
//! term     = unary { ("*" | "/") unary } ;
//! unary    = "-" unary | power ;
//! power    = primary [ "^" exponent ] ;
//! exponent = [ "-" ] integer | "(" [ "-" ] integer ")" ;
//! primary  = number | identifier | call | "(" expr ")" ;
//! call     = function "(" expr { "," expr } ")" ;
//! function = "sqrt" | "exp" | "log" | "sin" | "cos" | "conj" | "re" | "im" | "atan2" ;
//! number   = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//! ```
//!
//! A minus sign directly in front of a number literal that is not raised to a
//! power produces a negative literal. `i` is the imaginary unit and `pi` is π.
//! Other identifiers must be coordinates or aliases of the chart.
//!
//! `log` and `sqrt` are real functions with guarded positive arguments. A
//! holomorphic logarithm is written as `log(sqrt(re(f)^2+im(f)^2)) + i*atan2(im(f), re(f))`.

use crate::error::{GeomError, Result};
use crate::jet::Jet;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

pub const EPS_GUARD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Conj,
    Re,
    Im,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Conj => "conj",
            Func::Re => "re",
            Func::Im => "im",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "conj" => Func::Conj,
            "re" => Func::Re,
            "im" => Func::Im,
            _ => return None,
        })
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Num(f64),
    I,
    Var(usize),
    Neg(Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Call(Func, Expr),
    Atan2(Expr, Expr),
}

/// Shared, immutable expression DAG.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr(Arc<Node>);

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }
    fn new(n: Node) -> Expr {
        Expr(Arc::new(n))
    }
    fn key(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn num(v: f64) -> Expr {
        Expr::new(Node::Num(v))
    }
    pub fn i() -> Expr {
        Expr::new(Node::I)
    }
    pub fn var(i: usize) -> Expr {
        Expr::new(Node::Var(i))
    }
    pub fn zero() -> Expr {
        Expr::num(0.0)
    }
    pub fn one() -> Expr {
        Expr::num(1.0)
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self.0 {
            Node::Num(v) => Some(v),
            _ => None,
        }
    }
    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn powi(&self, n: i32) -> Expr {
        match n {
            0 => Expr::one(),
            1 => self.clone(),
            _ => match self.as_num() {
                Some(v) => Expr::num(v.powi(n)),
                None => Expr::new(Node::Pow(self.clone(), n)),
            },
        }
    }
    pub fn call(f: Func, a: &Expr) -> Expr {
        Expr::new(Node::Call(f, a.clone()))
    }
    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }
    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self)
    }
    pub fn ln(&self) -> Expr {
        Expr::call(Func::Log, self)
    }
    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self)
    }
    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self)
    }
    pub fn conj(&self) -> Expr {
        Expr::call(Func::Conj, self)
    }
    pub fn re(&self) -> Expr {
        Expr::call(Func::Re, self)
    }
    pub fn im(&self) -> Expr {
        Expr::call(Func::Im, self)
    }
    pub fn atan2(y: &Expr, x: &Expr) -> Expr {
        Expr::new(Node::Atan2(y.clone(), x.clone()))
    }
    /// |f|² as re(f)² + im(f)².
    pub fn abs2(&self) -> Expr {
        self.re().powi(2) + self.im().powi(2)
    }

    /// Highest coordinate index that occurs, if any.
    pub fn max_var(&self) -> Option<usize> {
        let mut seen = HashMap::new();
        self.max_var_inner(&mut seen)
    }

    fn max_var_inner(&self, seen: &mut HashMap<usize, Option<usize>>) -> Option<usize> {
        if let Some(r) = seen.get(&self.key()) {
            return *r;
        }
        let r = match self.node() {
            Node::Num(_) | Node::I => None,
            Node::Var(i) => Some(*i),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => a.max_var_inner(seen),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Atan2(a, b) => {
                a.max_var_inner(seen).max(b.max_var_inner(seen))
            }
        };
        seen.insert(self.key(), r);
        r
    }

    /// Symbolic partial derivative with respect to coordinate `var`.
    pub fn diff(&self, var: usize) -> Expr {
        let mut memo = HashMap::new();
        self.diff_inner(var, &mut memo)
    }

    fn diff_inner(&self, var: usize, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.key()) {
            return d.clone();
        }
        let d = match self.node() {
            Node::Num(_) | Node::I => Expr::zero(),
            Node::Var(i) => {
                if *i == var {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Neg(a) => -a.diff_inner(var, memo),
            Node::Add(a, b) => a.diff_inner(var, memo) + b.diff_inner(var, memo),
            Node::Sub(a, b) => a.diff_inner(var, memo) - b.diff_inner(var, memo),
            Node::Mul(a, b) => {
                let (da, db) = (a.diff_inner(var, memo), b.diff_inner(var, memo));
                da * b.clone() + a.clone() * db
            }
            Node::Div(a, b) => {
                let (da, db) = (a.diff_inner(var, memo), b.diff_inner(var, memo));
                if db.is_zero() {
                    da / b.clone()
                } else {
                    (da * b.clone() - a.clone() * db) / b.powi(2)
                }
            }
            Node::Pow(a, n) => {
                let da = a.diff_inner(var, memo);
                Expr::num(*n as f64) * a.powi(n - 1) * da
            }
            Node::Call(f, a) => {
                let da = a.diff_inner(var, memo);
                if da.is_zero() {
                    Expr::zero()
                } else {
                    match f {
                        Func::Sqrt => da / (Expr::num(2.0) * self.clone()),
                        Func::Exp => self.clone() * da,
                        Func::Log => da / a.clone(),
                        Func::Sin => a.cos() * da,
                        Func::Cos => -(a.sin() * da),
                        Func::Conj => da.conj(),
                        Func::Re => da.re(),
                        Func::Im => da.im(),
                    }
                }
            }
            Node::Atan2(y, x) => {
                let (dy, dx) = (y.diff_inner(var, memo), x.diff_inner(var, memo));
                (x.clone() * dy - y.clone() * dx) / (x.powi(2) + y.powi(2))
            }
        };
        memo.insert(self.key(), d.clone());
        d
    }

    /// Replace coordinate `var` by `with` everywhere.
    pub fn subst(&self, var: usize, with: &Expr) -> Expr {
        let mut memo = HashMap::new();
        self.subst_inner(var, with, &mut memo)
    }

    fn subst_inner(&self, var: usize, with: &Expr, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.key()) {
            return d.clone();
        }
        let mut s = |e: &Expr| e.subst_inner(var, with, memo);
        let r = match self.node() {
            Node::Num(_) | Node::I => self.clone(),
            Node::Var(i) => {
                if *i == var {
                    with.clone()
                } else {
                    self.clone()
                }
            }
            Node::Neg(a) => Expr::new(Node::Neg(s(a))),
            Node::Add(a, b) => Expr::new(Node::Add(s(a), s(b))),
            Node::Sub(a, b) => Expr::new(Node::Sub(s(a), s(b))),
            Node::Mul(a, b) => Expr::new(Node::Mul(s(a), s(b))),
            Node::Div(a, b) => Expr::new(Node::Div(s(a), s(b))),
            Node::Pow(a, n) => Expr::new(Node::Pow(s(a), *n)),
            Node::Call(f, a) => Expr::new(Node::Call(*f, s(a))),
            Node::Atan2(a, b) => Expr::new(Node::Atan2(s(a), s(b))),
        };
        memo.insert(self.key(), r.clone());
        r
    }

    /// Text form in the documented grammar, using `names` for coordinates.
    pub fn to_text(&self, names: &[String]) -> String {
        let mut s = String::new();
        self.write(names, &mut s);
        s
    }

    fn prec(&self) -> u8 {
        match self.node() {
            Node::Add(..) | Node::Sub(..) => 1,
            Node::Mul(..) | Node::Div(..) => 2,
            Node::Neg(_) => 3,
            Node::Pow(..) => 4,
            _ => 5,
        }
    }

    fn write_min(&self, names: &[String], min: u8, out: &mut String) {
        if self.prec() < min {
            out.push('(');
            self.write(names, out);
            out.push(')');
        } else {
            self.write(names, out);
        }
    }

    fn write(&self, names: &[String], out: &mut String) {
        match self.node() {
            Node::Num(v) => {
                if v.is_sign_negative() {
                    let _ = write!(out, "({:?})", v);
                } else {
                    let _ = write!(out, "{:?}", v);
                }
            }
            Node::I => out.push('i'),
            Node::Var(i) => out.push_str(names.get(*i).map(String::as_str).unwrap_or("?")),
            Node::Neg(a) => {
                out.push('-');
                let bare_literal = matches!(a.node(), Node::Num(v) if !v.is_sign_negative());
                if bare_literal {
                    out.push('(');
                    a.write(names, out);
                    out.push(')');
                } else {
                    a.write_min(names, 3, out);
                }
            }
            Node::Add(a, b) | Node::Sub(a, b) => {
                a.write_min(names, 1, out);
                out.push(if matches!(self.node(), Node::Add(..)) { '+' } else { '-' });
                b.write_min(names, 2, out);
            }
            Node::Mul(a, b) | Node::Div(a, b) => {
                a.write_min(names, 2, out);
                out.push(if matches!(self.node(), Node::Mul(..)) { '*' } else { '/' });
                b.write_min(names, 3, out);
            }
            Node::Pow(a, n) => {
                a.write_min(names, 5, out);
                if *n < 0 {
                    let _ = write!(out, "^({})", n);
                } else {
                    let _ = write!(out, "^{}", n);
                }
            }
            Node::Call(f, a) => {
                out.push_str(f.name());
                out.push('(');
                a.write(names, out);
                out.push(')');
            }
            Node::Atan2(y, x) => {
                out.push_str("atan2(");
                y.write(names, out);
                out.push(',');
                x.write(names, out);
                out.push(')');
            }
        }
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, b: Expr) -> Expr {
        match (self.as_num(), b.as_num()) {
            (Some(0.0), _) => b,
            (_, Some(0.0)) => self,
            (Some(x), Some(y)) => Expr::num(x + y),
            _ => Expr::new(Node::Add(self, b)),
        }
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, b: Expr) -> Expr {
        match (self.as_num(), b.as_num()) {
            (_, Some(0.0)) => self,
            (Some(0.0), _) => -b,
            (Some(x), Some(y)) => Expr::num(x - y),
            _ => Expr::new(Node::Sub(self, b)),
        }
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, b: Expr) -> Expr {
        match (self.as_num(), b.as_num()) {
            (Some(0.0), _) | (_, Some(0.0)) => Expr::zero(),
            (Some(1.0), _) => b,
            (_, Some(1.0)) => self,
            (Some(x), Some(y)) => Expr::num(x * y),
            _ => Expr::new(Node::Mul(self, b)),
        }
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, b: Expr) -> Expr {
        match (self.as_num(), b.as_num()) {
            (Some(0.0), _) => Expr::zero(),
            (_, Some(1.0)) => self,
            (Some(x), Some(y)) if y != 0.0 => Expr::num(x / y),
            _ => Expr::new(Node::Div(self, b)),
        }
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.node() {
            Node::Num(v) => Expr::num(-v),
            Node::Neg(a) => a.clone(),
            _ => Expr::new(Node::Neg(self)),
        }
    }
}

impl std::ops::Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, b: Expr) -> Expr {
        Expr::num(self) * b
    }
}

// ---------------------------------------------------------------------------
// Parsing

/// Names visible to the parser: coordinates first, then aliases that expand to
/// previously built expressions.
#[derive(Clone, Debug, Default)]
pub struct Symbols {
    pub coords: Vec<String>,
    pub aliases: Vec<(String, Expr)>,
}

impl Symbols {
    pub fn new(coords: &[&str]) -> Symbols {
        Symbols { coords: coords.iter().map(|s| s.to_string()).collect(), aliases: Vec::new() }
    }

    pub fn with_alias(mut self, name: &str, e: Expr) -> Symbols {
        self.define(name, e);
        self
    }

    pub fn define(&mut self, name: &str, e: Expr) {
        self.aliases.retain(|(n, _)| n != name);
        self.aliases.push((name.to_string(), e));
    }

    /// Parse `text` and register the result under `name`.
    pub fn define_text(&mut self, name: &str, text: &str) -> Result<Expr> {
        let e = parse(text, self)?;
        self.define(name, e.clone());
        Ok(e)
    }

    fn lookup(&self, name: &str) -> Option<Expr> {
        if let Some(i) = self.coords.iter().position(|c| c == name) {
            return Some(Expr::var(i));
        }
        if let Some((_, e)) = self.aliases.iter().rev().find(|(n, _)| n == name) {
            return Some(e.clone());
        }
        match name {
            "i" => Some(Expr::i()),
            "pi" => Some(Expr::num(std::f64::consts::PI)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    toks: Vec<(Tok, usize)>,
}

impl<'a> Lexer<'a> {
    fn run(src: &'a str) -> Result<Vec<(Tok, usize)>> {
        let mut lx = Lexer { src, toks: Vec::new() };
        let bytes = src.as_bytes();
        let mut pos = 0;
        while pos < bytes.len() {
            let c = bytes[pos];
            if c.is_ascii_whitespace() {
                pos += 1;
            } else if c.is_ascii_digit() || (c == b'.' && pos + 1 < bytes.len() && bytes[pos + 1].is_ascii_digit()) {
                let start = pos;
                while pos < bytes.len() && (bytes[pos].is_ascii_digit() || bytes[pos] == b'.') {
                    pos += 1;
                }
                if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                    let mut q = pos + 1;
                    if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                        q += 1;
                    }
                    if q < bytes.len() && bytes[q].is_ascii_digit() {
                        pos = q;
                        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                            pos += 1;
                        }
                    }
                }
                let text = &lx.src[start..pos];
                let v: f64 = text.parse().map_err(|_| GeomError::Parse {
                    offset: start,
                    message: format!("malformed number '{}'", text),
                })?;
                lx.toks.push((Tok::Num(v), start));
            } else if c.is_ascii_alphabetic() || c == b'_' {
                let start = pos;
                while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                    pos += 1;
                }
                lx.toks.push((Tok::Ident(lx.src[start..pos].to_string()), start));
            } else if b"+-*/^(),".contains(&c) {
                lx.toks.push((Tok::Op(c as char), pos));
                pos += 1;
            } else {
                let ch = lx.src[pos..].chars().next().unwrap_or('?');
                return Err(GeomError::Parse { offset: pos, message: format!("unexpected character '{}'", ch) });
            }
        }
        lx.toks.push((Tok::End, src.len()));
        Ok(lx.toks)
    }
}

struct Parser<'s> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    syms: &'s Symbols,
}

fn perr<T>(offset: usize, message: impl Into<String>) -> Result<T> {
    Err(GeomError::Parse { offset, message: message.into() })
}

impl<'s> Parser<'s> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }
    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.pos + k).min(self.toks.len() - 1)].0
    }
    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }
    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }
    fn expect(&mut self, c: char) -> Result<()> {
        if *self.peek() == Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            perr(self.offset(), format!("expected '{}'", c))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Tok::Op('+') => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::new(Node::Add(lhs, rhs));
                }
                Tok::Op('-') => {
                    self.bump();
                    let rhs = self.term()?;
                    lhs = Expr::new(Node::Sub(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Tok::Op('*') => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::new(Node::Mul(lhs, rhs));
                }
                Tok::Op('/') => {
                    self.bump();
                    let rhs = self.unary()?;
                    lhs = Expr::new(Node::Div(lhs, rhs));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if *self.peek() == Tok::Op('-') {
            if let Tok::Num(v) = *self.peek_at(1) {
                if *self.peek_at(2) != Tok::Op('^') {
                    self.bump();
                    self.bump();
                    return Ok(Expr::num(-v));
                }
            }
            self.bump();
            let a = self.unary()?;
            return Ok(Expr::new(Node::Neg(a)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if *self.peek() != Tok::Op('^') {
            return Ok(base);
        }
        self.bump();
        let paren = *self.peek() == Tok::Op('(');
        if paren {
            self.bump();
        }
        let neg = *self.peek() == Tok::Op('-');
        if neg {
            self.bump();
        }
        let off = self.offset();
        let n = match self.bump() {
            Tok::Num(v) if v.fract() == 0.0 && v.abs() < 1e6 => v as i32,
            _ => return perr(off, "exponent must be an integer literal"),
        };
        if paren {
            self.expect(')')?;
        }
        Ok(Expr::new(Node::Pow(base, if neg { -n } else { n })))
    }

    fn primary(&mut self) -> Result<Expr> {
        let off = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::num(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if *self.peek() == Tok::Op('(') {
                    self.call(&name, off)
                } else {
                    self.syms
                        .lookup(&name)
                        .ok_or_else(|| GeomError::Parse { offset: off, message: format!("unknown symbol '{}'", name) })
                }
            }
            Tok::End => perr(off, "unexpected end of input"),
            Tok::Op(c) => perr(off, format!("unexpected '{}'", c)),
        }
    }

    fn call(&mut self, name: &str, off: usize) -> Result<Expr> {
        let arity = match name {
            "atan2" => 2,
            _ if Func::from_name(name).is_some() => 1,
            _ => return perr(off, format!("unknown function '{}'", name)),
        };
        self.expect('(')?;
        let mut args = vec![self.expr()?];
        while *self.peek() == Tok::Op(',') {
            self.bump();
            args.push(self.expr()?);
        }
        self.expect(')')?;
        if args.len() != arity {
            return perr(off, format!("{} takes {} argument(s), got {}", name, arity, args.len()));
        }
        Ok(match Func::from_name(name) {
            Some(f) => Expr::new(Node::Call(f, args.remove(0))),
            None => Expr::new(Node::Atan2(args[0].clone(), args[1].clone())),
        })
    }
}

pub fn parse(text: &str, syms: &Symbols) -> Result<Expr> {
    let toks = Lexer::run(text)?;
    let mut p = Parser { toks, pos: 0, syms };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        Tok::Op(')') => perr(p.offset(), "unbalanced ')'"),
        _ => perr(p.offset(), "unexpected trailing input"),
    }
}

// ---------------------------------------------------------------------------
// Evaluation

/// Complex jet as a (Re, Im) pair; `im == None` means exactly real.
#[derive(Clone, Copy, Debug)]
pub struct CJet {
    pub re: Jet,
    pub im: Option<Jet>,
}

impl CJet {
    fn real(re: Jet) -> CJet {
        CJet { re, im: None }
    }
    fn im_or_zero(&self) -> Jet {
        self.im.unwrap_or_else(|| Jet::constant(self.re.dim(), self.re.order(), 0.0))
    }
}

/// Evaluates expressions at one point, sharing work across calls.
pub struct Evaluator {
    point: Vec<f64>,
    order: u8,
    memo: HashMap<usize, CJet>,
    keep: Vec<Expr>,
}

impl Evaluator {
    pub fn new(point: &[f64], order: u8) -> Evaluator {
        Evaluator { point: point.to_vec(), order, memo: HashMap::new(), keep: Vec::new() }
    }

    pub fn order(&self) -> u8 {
        self.order
    }
    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Real-valued jet; rejects expressions with a non-negligible imaginary part.
    pub fn real(&mut self, e: &Expr) -> Result<Jet> {
        let c = self.complex(e)?;
        if let Some(im) = c.im {
            let tol = 1e-10 * (1.0 + c.re.max_abs());
            if im.max_abs() > tol {
                return Err(GeomError::NonReal(im.value()));
            }
        }
        Ok(c.re)
    }

    pub fn complex(&mut self, e: &Expr) -> Result<CJet> {
        if let Some(c) = self.memo.get(&e.key()) {
            return Ok(*c);
        }
        let c = self.eval_node(e)?;
        if !c.re.is_finite() || c.im.map(|j| !j.is_finite()).unwrap_or(false) {
            return Err(GeomError::NonFinite(format!("at {:?}", self.point)));
        }
        self.memo.insert(e.key(), c);
        // pin the node so its address cannot be reused while memoized
        self.keep.push(e.clone());
        Ok(c)
    }

    fn konst(&self, v: f64) -> Jet {
        Jet::constant(self.dim(), self.order, v)
    }

    fn eval_node(&mut self, e: &Expr) -> Result<CJet> {
        Ok(match e.node() {
            Node::Num(v) => CJet::real(self.konst(*v)),
            Node::I => CJet { re: self.konst(0.0), im: Some(self.konst(1.0)) },
            Node::Var(i) => {
                let v = *self
                    .point
                    .get(*i)
                    .ok_or_else(|| GeomError::Invalid(format!("coordinate index {} out of range", i)))?;
                CJet::real(Jet::variable(self.dim(), self.order, *i, v))
            }
            Node::Neg(a) => {
                let a = self.complex(a)?;
                CJet { re: -a.re, im: a.im.map(|j| -j) }
            }
            Node::Add(a, b) => {
                let (a, b) = (self.complex(a)?, self.complex(b)?);
                CJet { re: a.re + b.re, im: add_opt(a.im, b.im) }
            }
            Node::Sub(a, b) => {
                let (a, b) = (self.complex(a)?, self.complex(b)?);
                CJet { re: a.re - b.re, im: add_opt(a.im, b.im.map(|j| -j)) }
            }
            Node::Mul(a, b) => {
                let (a, b) = (self.complex(a)?, self.complex(b)?);
                cmul(a, b)
            }
            Node::Div(a, b) => {
                let (a, b) = (self.complex(a)?, self.complex(b)?);
                cmul(a, self.crecip(b)?)
            }
            Node::Pow(a, n) => {
                let a = self.complex(a)?;
                self.cpow(a, *n)?
            }
            Node::Call(f, a) => {
                let a = self.complex(a)?;
                self.call(*f, a)?
            }
            Node::Atan2(y, x) => {
                let y = self.real(y)?;
                let x = self.real(x)?;
                let (xv, yv) = (x.value(), y.value());
                if xv.hypot(yv) <= EPS_GUARD {
                    return Err(GeomError::Guard("atan2 at the origin".into()));
                }
                let mut j = if xv.abs() >= yv.abs() { (y / x).atan() } else { -(x / y).atan() };
                let shift = yv.atan2(xv) - j.value();
                j = j + shift;
                CJet::real(j)
            }
        })
    }

    fn crecip(&self, b: CJet) -> Result<CJet> {
        match b.im {
            None => {
                if b.re.value().abs() <= EPS_GUARD {
                    return Err(GeomError::Guard(format!("division by {:e}", b.re.value())));
                }
                Ok(CJet::real(b.re.recip()))
            }
            Some(bi) => {
                let m2 = b.re * b.re + bi * bi;
                if m2.value().sqrt() <= EPS_GUARD {
                    return Err(GeomError::Guard("division by a vanishing complex value".into()));
                }
                let inv = m2.recip();
                Ok(CJet { re: b.re * inv, im: Some(-(bi * inv)) })
            }
        }
    }

    fn cpow(&self, a: CJet, n: i32) -> Result<CJet> {
        if a.im.is_none() {
            if n < 0 && a.re.value().abs() <= EPS_GUARD {
                return Err(GeomError::Guard("negative power of a vanishing value".into()));
            }
            return Ok(CJet::real(a.re.powi(n)));
        }
        let base = if n < 0 { self.crecip(a)? } else { a };
        let mut acc = CJet::real(self.konst(1.0));
        let mut sq = base;
        let mut k = n.unsigned_abs();
        while k > 0 {
            if k & 1 == 1 {
                acc = cmul(acc, sq);
            }
            k >>= 1;
            if k > 0 {
                sq = cmul(sq, sq);
            }
        }
        Ok(acc)
    }

    fn call(&self, f: Func, a: CJet) -> Result<CJet> {
        let real_only = |name: &str| -> Result<Jet> {
            match a.im {
                Some(im) if im.max_abs() > 1e-12 * (1.0 + a.re.max_abs()) => {
                    Err(GeomError::Invalid(format!("{} of a complex argument", name)))
                }
                _ => Ok(a.re),
            }
        };
        Ok(match f {
            Func::Sqrt => {
                let x = real_only("sqrt")?;
                if x.value() <= EPS_GUARD * EPS_GUARD {
                    return Err(GeomError::Guard(format!("sqrt of {:e}", x.value())));
                }
                CJet::real(x.sqrt())
            }
            Func::Log => {
                let x = real_only("log")?;
                if x.value() <= EPS_GUARD {
                    return Err(GeomError::Guard(format!("log of {:e}", x.value())));
                }
                CJet::real(x.ln())
            }
            Func::Exp => match a.im {
                None => CJet::real(a.re.exp()),
                Some(b) => {
                    let e = a.re.exp();
                    CJet { re: e * b.cos(), im: Some(e * b.sin()) }
                }
            },
            Func::Sin => match a.im {
                None => CJet::real(a.re.sin()),
                Some(b) => {
                    let (ch, sh) = cosh_sinh(b);
                    CJet { re: a.re.sin() * ch, im: Some(a.re.cos() * sh) }
                }
            },
            Func::Cos => match a.im {
                None => CJet::real(a.re.cos()),
                Some(b) => {
                    let (ch, sh) = cosh_sinh(b);
                    CJet { re: a.re.cos() * ch, im: Some(-(a.re.sin() * sh)) }
                }
            },
            Func::Conj => CJet { re: a.re, im: a.im.map(|j| -j) },
            Func::Re => CJet::real(a.re),
            Func::Im => CJet::real(a.im_or_zero()),
        })
    }
}

fn cosh_sinh(b: Jet) -> (Jet, Jet) {
    let ep = b.exp();
    let em = (-b).exp();
    ((ep + em) * 0.5, (ep - em) * 0.5)
}

fn add_opt(a: Option<Jet>, b: Option<Jet>) -> Option<Jet> {
    match (a, b) {
        (None, None) => None,
        (Some(x), None) | (None, Some(x)) => Some(x),
        (Some(x), Some(y)) => Some(x + y),
    }
}

fn cmul(a: CJet, b: CJet) -> CJet {
    match (a.im, b.im) {
        (None, None) => CJet::real(a.re * b.re),
        (Some(ai), None) => CJet { re: a.re * b.re, im: Some(ai * b.re) },
        (None, Some(bi)) => CJet { re: a.re * b.re, im: Some(a.re * bi) },
        (Some(ai), Some(bi)) => CJet { re: a.re * b.re - ai * bi, im: Some(a.re * bi + ai * b.re) },
    }
}

/// Evaluate a single real expression.
pub fn eval_jet(e: &Expr, point: &[f64], order: u8) -> Result<Jet> {
    Evaluator::new(point, order).real(e)
}
