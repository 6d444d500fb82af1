//! Scalar field expressions over chart coordinates.
//!
//! Grammar (whitespace-insensitive, decimal literals only):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('+' | '-') unary | power
//! power   := primary ('^' unary)?
//! primary := number | 'pi' | symbol | func '(' expr ')' | 'pow' '(' expr ',' expr ')' | '(' expr ')'
//! func    := 'sin' | 'cos' | 'exp' | 'sqrt'
//! ```
//!
//! Evaluation is generic over [`Number`], so the same tree yields values, gradients
//! ([`Dual`]) or gradients and Hessians ([`Jet2`]) by forward-mode differentiation.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Div, Mul, Neg, Sub};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::MAX_DIM;

/// Arithmetic needed to evaluate an expression tree.
pub trait Number:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(&self) -> f64;
    /// Apply a scalar function given its value and first two derivatives at `self.value()`.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self;
}

impl Number for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn chain(self, f0: f64, _f1: f64, _f2: f64) -> Self {
        f0
    }
}

/// Value plus gradient with respect to up to [`MAX_DIM`] variables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub g: [f64; MAX_DIM],
}

impl Dual {
    pub fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; MAX_DIM];
        g[index] = 1.0;
        Dual { v: value, g }
    }
}

impl Add for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, o: Dual) -> Dual {
        let mut g = self.g;
        for (a, b) in g.iter_mut().zip(o.g) {
            *a += b;
        }
        Dual { v: self.v + o.v, g }
    }
}

impl Sub for Dual {
    type Output = Dual;
    #[inline]
    fn sub(self, o: Dual) -> Dual {
        let mut g = self.g;
        for (a, b) in g.iter_mut().zip(o.g) {
            *a -= b;
        }
        Dual { v: self.v - o.v, g }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        let mut g = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            g[i] = self.g[i] * o.v + self.v * o.g[i];
        }
        Dual { v: self.v * o.v, g }
    }
}

impl Div for Dual {
    type Output = Dual;
    #[inline]
    fn div(self, o: Dual) -> Dual {
        let inv = 1.0 / o.v;
        let q = self.v * inv;
        let mut g = [0.0; MAX_DIM];
        for i in 0..MAX_DIM {
            g[i] = (self.g[i] - q * o.g[i]) * inv;
        }
        Dual { v: q, g }
    }
}

impl Neg for Dual {
    type Output = Dual;
    #[inline]
    fn neg(self) -> Dual {
        let mut g = self.g;
        for a in g.iter_mut() {
            *a = -*a;
        }
        Dual { v: -self.v, g }
    }
}

impl Number for Dual {
    #[inline]
    fn constant(c: f64) -> Self {
        Dual { v: c, g: [0.0; MAX_DIM] }
    }
    #[inline]
    fn value(&self) -> f64 {
        self.v
    }
    #[inline]
    fn chain(self, f0: f64, f1: f64, _f2: f64) -> Self {
        let mut g = self.g;
        for a in g.iter_mut() {
            *a *= f1;
        }
        Dual { v: f0, g }
    }
}

/// Second-order jet: value, gradient and Hessian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; MAX_DIM],
    pub h: [[f64; MAX_DIM]; MAX_DIM],
}

impl Jet2 {
    pub fn variable(value: f64, index: usize) -> Self {
        let mut g = [0.0; MAX_DIM];
        g[index] = 1.0;
        Jet2 { v: value, g, h: [[0.0; MAX_DIM]; MAX_DIM] }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        let mut r = self;
        r.v += o.v;
        for i in 0..MAX_DIM {
            r.g[i] += o.g[i];
            for j in 0..MAX_DIM {
                r.h[i][j] += o.h[i][j];
            }
        }
        r
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        let mut r = self;
        r.v = -r.v;
        for i in 0..MAX_DIM {
            r.g[i] = -r.g[i];
            for j in 0..MAX_DIM {
                r.h[i][j] = -r.h[i][j];
            }
        }
        r
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        let mut r = Jet2 { v: self.v * o.v, g: [0.0; MAX_DIM], h: [[0.0; MAX_DIM]; MAX_DIM] };
        for i in 0..MAX_DIM {
            r.g[i] = self.g[i] * o.v + self.v * o.g[i];
            for j in 0..MAX_DIM {
                r.h[i][j] = self.h[i][j] * o.v + self.v * o.h[i][j] + self.g[i] * o.g[j] + self.g[j] * o.g[i];
            }
        }
        r
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let x = o.v;
        self * o.chain(1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x))
    }
}

impl Number for Jet2 {
    fn constant(c: f64) -> Self {
        Jet2 { v: c, g: [0.0; MAX_DIM], h: [[0.0; MAX_DIM]; MAX_DIM] }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut r = Jet2 { v: f0, g: [0.0; MAX_DIM], h: [[0.0; MAX_DIM]; MAX_DIM] };
        for i in 0..MAX_DIM {
            r.g[i] = f1 * self.g[i];
            for j in 0..MAX_DIM {
                r.h[i][j] = f1 * self.h[i][j] + f2 * self.g[i] * self.g[j];
            }
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply<N: Number>(self, a: N) -> N {
        let x = a.value();
        match self {
            Func::Sin => {
                let (s, c) = (x.sin(), x.cos());
                a.chain(s, c, -s)
            }
            Func::Cos => {
                let (s, c) = (x.sin(), x.cos());
                a.chain(c, -s, -c)
            }
            Func::Exp => {
                let e = x.exp();
                a.chain(e, e, e)
            }
            Func::Sqrt => {
                let s = x.sqrt();
                a.chain(s, 0.5 / s, -0.25 / (s * x))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var(usize),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Func(Func, Box<Node>),
}

impl Node {
    fn eval<N: Number>(&self, vars: &[N]) -> N {
        match self {
            Node::Const(c) => N::constant(*c),
            Node::Var(i) => vars[*i],
            Node::Neg(a) => -a.eval(vars),
            Node::Add(a, b) => a.eval(vars) + b.eval(vars),
            Node::Sub(a, b) => a.eval(vars) - b.eval(vars),
            Node::Mul(a, b) => a.eval(vars) * b.eval(vars),
            Node::Div(a, b) => a.eval(vars) / b.eval(vars),
            Node::Pow(a, b) => {
                let base = a.eval(vars);
                if let Node::Const(p) = **b {
                    pow_const(base, p)
                } else {
                    // a^b = exp(b ln a)
                    let x = base.value();
                    let ln = base.chain(x.ln(), 1.0 / x, -1.0 / (x * x));
                    Func::Exp.apply(b.eval(vars) * ln)
                }
            }
            Node::Func(f, a) => f.apply(a.eval(vars)),
        }
    }

    fn is_const(&self) -> Option<f64> {
        match self {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Collapse variable-free subtrees into constants.
    fn fold(self) -> Node {
        let folded = match self {
            Node::Neg(a) => Node::Neg(Box::new(a.fold())),
            Node::Add(a, b) => Node::Add(Box::new(a.fold()), Box::new(b.fold())),
            Node::Sub(a, b) => Node::Sub(Box::new(a.fold()), Box::new(b.fold())),
            Node::Mul(a, b) => Node::Mul(Box::new(a.fold()), Box::new(b.fold())),
            Node::Div(a, b) => Node::Div(Box::new(a.fold()), Box::new(b.fold())),
            Node::Pow(a, b) => Node::Pow(Box::new(a.fold()), Box::new(b.fold())),
            Node::Func(f, a) => Node::Func(f, Box::new(a.fold())),
            leaf => leaf,
        };
        let all_const = match &folded {
            Node::Neg(a) | Node::Func(_, a) => a.is_const().is_some(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.is_const().is_some() && b.is_const().is_some()
            }
            _ => false,
        };
        if all_const {
            Node::Const(folded.eval::<f64>(&[]))
        } else {
            folded
        }
    }

    fn uses_vars(&self) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Var(_) => true,
            Node::Neg(a) | Node::Func(_, a) => a.uses_vars(),
            Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                a.uses_vars() || b.uses_vars()
            }
        }
    }

    fn write(&self, f: &mut fmt::Formatter<'_>, names: &[String]) -> fmt::Result {
        match self {
            Node::Const(c) => write!(f, "{c:?}"),
            Node::Var(i) => f.write_str(&names[*i]),
            Node::Neg(a) => {
                f.write_str("(-")?;
                a.write(f, names)?;
                f.write_str(")")
            }
            Node::Add(a, b) => bin(f, names, a, "+", b),
            Node::Sub(a, b) => bin(f, names, a, "-", b),
            Node::Mul(a, b) => bin(f, names, a, "*", b),
            Node::Div(a, b) => bin(f, names, a, "/", b),
            Node::Pow(a, b) => bin(f, names, a, "^", b),
            Node::Func(func, a) => {
                write!(f, "{}(", func.name())?;
                a.write(f, names)?;
                f.write_str(")")
            }
        }
    }
}

fn bin(f: &mut fmt::Formatter<'_>, names: &[String], a: &Node, op: &str, b: &Node) -> fmt::Result {
    f.write_str("(")?;
    a.write(f, names)?;
    write!(f, " {op} ")?;
    b.write(f, names)?;
    f.write_str(")")
}

fn pow_const<N: Number>(a: N, p: f64) -> N {
    let x = a.value();
    if p == 0.0 {
        return N::constant(1.0);
    }
    if p == 1.0 {
        return a;
    }
    if p == 2.0 {
        return a * a;
    }
    let f0 = x.powf(p);
    let f1 = p * x.powf(p - 1.0);
    let f2 = p * (p - 1.0) * x.powf(p - 2.0);
    a.chain(f0, f1, f2)
}

/// A parsed scalar field over named chart coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldExpr {
    root: Node,
    names: Vec<String>,
}

impl ScalarFieldExpr {
    pub fn parse(source: &str, coords: &[&str]) -> Result<Self> {
        if coords.len() > MAX_DIM {
            return Err(Error::Parameter(format!("at most {MAX_DIM} coordinates are supported")));
        }
        let names: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
        let mut p = Parser { src: source.as_bytes(), pos: 0, names: &names };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(ScalarFieldExpr { root: root.fold(), names })
    }

    pub fn constant(c: f64, coords: &[&str]) -> Self {
        ScalarFieldExpr { root: Node::Const(c), names: coords.iter().map(|s| s.to_string()).collect() }
    }

    pub fn from_node(root: Node, coords: &[String]) -> Self {
        ScalarFieldExpr { root: root.fold(), names: coords.to_vec() }
    }

    pub fn node(&self) -> &Node {
        &self.root
    }

    pub fn coords(&self) -> &[String] {
        &self.names
    }

    pub fn is_constant(&self) -> bool {
        !self.root.uses_vars()
    }

    /// The constant value if the tree has no free coordinates.
    pub fn constant_value(&self) -> Option<f64> {
        self.root.is_const()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.root.eval(x)
    }

    pub fn eval_number<N: Number>(&self, x: &[N]) -> N {
        self.root.eval(x)
    }

    pub fn eval_dual(&self, x: &[f64]) -> Dual {
        if let Node::Const(c) = self.root {
            return Dual::constant(c);
        }
        let mut vars = [Dual::constant(0.0); MAX_DIM];
        for (i, xi) in x.iter().enumerate() {
            vars[i] = Dual::variable(*xi, i);
        }
        self.root.eval(&vars[..x.len()])
    }

    pub fn eval_jet(&self, x: &[f64]) -> Jet2 {
        let mut vars = [Jet2::constant(0.0); MAX_DIM];
        for (i, xi) in x.iter().enumerate() {
            vars[i] = Jet2::variable(*xi, i);
        }
        self.root.eval(&vars[..x.len()])
    }
}

impl fmt::Display for ScalarFieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.root.write(f, &self.names)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [String],
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Parse { column: self.pos + 1, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of expression")),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let mut seen_dot = false;
        let mut digits = 0;
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_digit() {
                digits += 1;
            } else if c == b'.' && !seen_dot {
                seen_dot = true;
            } else {
                break;
            }
            self.pos += 1;
        }
        if digits == 0 {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_alphabetic() || c == b'_' {
                return Err(self.error("only plain decimal literals are accepted"));
            }
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.error("bad utf-8"))?;
        text.parse::<f64>().map(Node::Const).map_err(|_| {
            let mut e = self.error("malformed number");
            if let Error::Parse { column, .. } = &mut e {
                *column = start + 1;
            }
            e
        })
    }

    fn identifier(&mut self) -> Result<Node> {
        let start = self.pos;
        while let Some(&c) = self.src.get(self.pos) {
            if c.is_ascii_alphanumeric() || c == b'_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).map_err(|_| self.error("bad utf-8"))?;
        if let Some(i) = self.names.iter().position(|n| n == name) {
            return Ok(Node::Var(i));
        }
        let func = match name {
            "pi" => return Ok(Node::Const(core::f64::consts::PI)),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "pow" => None,
            _ => {
                self.pos = start;
                return Err(self.error(&format!("unknown symbol `{name}`")));
            }
        };
        self.expect(b'(')?;
        let arg = self.expr()?;
        let node = match func {
            Some(f) => Node::Func(f, Box::new(arg)),
            None => {
                self.expect(b',')?;
                let exp = self.expr()?;
                Node::Pow(Box::new(arg), Box::new(exp))
            }
        };
        self.expect(b')')?;
        Ok(node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const XY: &[&str] = &["x", "y"];

    fn parse(s: &str) -> ScalarFieldExpr {
        ScalarFieldExpr::parse(s, XY).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("1 + 2 * 3").eval(&[0.0, 0.0]), 7.0);
        assert_eq!(parse("-2^2").eval(&[0.0, 0.0]), -4.0);
        assert_eq!(parse("2^3^2").eval(&[0.0, 0.0]), 512.0);
        assert_eq!(parse("(1 - 2) - 3").eval(&[0.0, 0.0]), -4.0);
        assert_eq!(parse("8 / 4 / 2").eval(&[0.0, 0.0]), 1.0);
        assert_eq!(parse("pow(x, 2) + y").eval(&[3.0, 1.0]), 10.0);
        assert!((parse("sin(pi / 2)").eval(&[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn whitespace_insensitive() {
        assert_eq!(parse("  x*  y+1 ").eval(&[2.0, 3.0]), parse("x*y+1").eval(&[2.0, 3.0]));
    }

    #[test]
    fn parse_errors_carry_column() {
        let err = ScalarFieldExpr::parse("x + * y", XY).unwrap_err();
        assert_eq!(err, Error::Parse { column: 5, message: "unexpected character".into() });
        let err = ScalarFieldExpr::parse("x + foo", XY).unwrap_err();
        assert!(matches!(err, Error::Parse { column: 5, .. }));
        assert!(ScalarFieldExpr::parse("1e3", XY).is_err());
        assert!(ScalarFieldExpr::parse("sin(x", XY).is_err());
        assert!(ScalarFieldExpr::parse("x y", XY).is_err());
    }

    #[test]
    fn constants_are_folded() {
        let e = parse("1 - 0.5 * 0.5");
        assert_eq!(e.constant_value(), Some(0.75));
        assert!(!parse("x - x").is_constant() || parse("x-x").eval(&[1.0, 0.0]) == 0.0);
    }

    #[test]
    fn dual_gradient_matches_hand_derivative() {
        let e = parse("x^2 * sin(y) + exp(x * y) / sqrt(1 + x^2)");
        let (x, y) = (0.7, -0.3);
        let d = e.eval_dual(&[x, y]);
        let s = (1.0f64 + x * x).sqrt();
        let gx = 2.0 * x * y.sin() + (y * (x * y).exp() * s - (x * y).exp() * x / s) / (s * s);
        let gy = x * x * y.cos() + x * (x * y).exp() / s;
        assert!((d.g[0] - gx).abs() < 1e-14);
        assert!((d.g[1] - gy).abs() < 1e-14);
    }

    #[test]
    fn variable_exponent() {
        let e = parse("x^y");
        let d = e.eval_dual(&[2.0, 3.0]);
        assert!((d.v - 8.0).abs() < 1e-14);
        assert!((d.g[0] - 12.0).abs() < 1e-13);
        assert!((d.g[1] - 8.0 * 2.0f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn jet_hessian_matches_finite_differences() {
        let e = parse("cos(x * y) + x^3 / (2 + y^2)");
        let p = [0.4, 1.1];
        let j = e.eval_jet(&p);
        let h = 1e-4;
        for a in 0..2 {
            for b in 0..2 {
                let f = |da: f64, db: f64| {
                    let mut q = p;
                    q[a] += da;
                    q[b] += db;
                    e.eval(&q)
                };
                let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                assert!((j.h[a][b] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "{a}{b}: {} vs {fd}", j.h[a][b]);
            }
        }
    }
}
