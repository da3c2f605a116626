//! Infix arithmetic expressions over one state variable and an optional
//! parameter `theta`.
//!
//! Precedence, tightest first: `^` (right-associative), unary `-`, `*` `/`,
//! `+` `-`. Functions: sin, cos, exp, log, abs, sqrt, tanh. Constants: pi, e.

use std::fmt;

use super::dual::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    /// The state variable (`x`, or `t` for time-indexed coefficients).
    State,
    Theta,
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
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
    Sqrt,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Abs,
        Func::Sqrt,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Func::ALL.iter().copied().find(|f| f.name() == name)
    }

    /// Evaluate the function on a scalar, with domain checks.
    pub fn apply<S: Scalar>(self, a: S) -> Result<S> {
        let v = a.re();
        let out = match self {
            Func::Sin => a.lift(v.sin(), || (v.cos(), -v.sin())),
            Func::Cos => a.lift(v.cos(), || (-v.sin(), -v.cos())),
            Func::Exp => {
                let e = v.exp();
                a.lift(e, || (e, e))
            }
            Func::Log => {
                if v <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive value {v}")));
                }
                a.lift(v.ln(), || (1.0 / v, -1.0 / (v * v)))
            }
            Func::Abs => a.lift(v.abs(), || (sign(v), 0.0)),
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(Error::Domain(format!("sqrt of negative value {v}")));
                }
                let s = v.sqrt();
                a.lift(s, || (0.5 / s, -0.25 / (s * v)))
            }
            Func::Tanh => {
                let t = v.tanh();
                a.lift(t, || {
                    let sech2 = 1.0 - t * t;
                    (sech2, -2.0 * t * sech2)
                })
            }
        };
        finite(out, self.name())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn finite<S: Scalar>(v: S, what: &str) -> Result<S> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("non-finite result in {what}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    /// Numeric literal; negative values become `Neg(Num)` so the tree matches
    /// what the parser would build from the printed form.
    pub fn num(c: f64) -> Expr {
        if c < 0.0 || (c == 0.0 && c.is_sign_negative()) {
            Expr::Neg(Box::new(Expr::Num(-c)))
        } else {
            Expr::Num(c)
        }
    }

    pub fn state() -> Expr {
        Expr::Var(Var::State)
    }

    pub fn theta() -> Expr {
        Expr::Var(Var::Theta)
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    pub fn call(f: Func, a: Expr) -> Expr {
        Expr::Call(f, Box::new(a))
    }

    pub fn references(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Call(_, a) => a.references(var),
            Expr::Bin(_, a, b) => a.references(var) || b.references(var),
        }
    }

    /// Replace every occurrence of the state variable by `with`.
    pub fn substitute_state(&self, with: &Expr) -> Expr {
        match self {
            Expr::Num(c) => Expr::Num(*c),
            Expr::Var(Var::State) => with.clone(),
            Expr::Var(Var::Theta) => Expr::theta(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute_state(with))),
            Expr::Call(f, a) => Expr::call(*f, a.substitute_state(with)),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.substitute_state(with), b.substitute_state(with)),
        }
    }

    /// Replace `theta` by a numeric literal.
    pub fn substitute_theta(&self, value: f64) -> Expr {
        match self {
            Expr::Num(c) => Expr::Num(*c),
            Expr::Var(Var::Theta) => Expr::num(value),
            Expr::Var(Var::State) => Expr::state(),
            Expr::Neg(a) => Expr::Neg(Box::new(a.substitute_theta(value))),
            Expr::Call(f, a) => Expr::call(*f, a.substitute_theta(value)),
            Expr::Bin(op, a, b) => Expr::bin(*op, a.substitute_theta(value), b.substitute_theta(value)),
        }
    }

    pub fn eval<S: Scalar>(&self, state: S, theta: Option<S>) -> Result<S> {
        match self {
            Expr::Num(c) => Ok(S::constant(*c)),
            Expr::Var(Var::State) => Ok(state),
            Expr::Var(Var::Theta) => theta.ok_or(Error::MissingTheta),
            Expr::Neg(a) => Ok(-a.eval(state, theta)?),
            Expr::Call(f, a) => f.apply(a.eval(state, theta)?),
            Expr::Bin(op, a, b) => {
                let l = a.eval(state, theta)?;
                let r = b.eval(state, theta)?;
                let out = match op {
                    BinOp::Add => l + r,
                    BinOp::Sub => l - r,
                    BinOp::Mul => l * r,
                    BinOp::Div => {
                        if r.re() == 0.0 {
                            return Err(Error::Domain("division by zero".into()));
                        }
                        l / r
                    }
                    BinOp::Pow => power(l, r)?,
                };
                finite(out, "arithmetic")
            }
        }
    }

    pub fn display<'a>(&'a self, var_name: &'a str) -> ExprDisplay<'a> {
        ExprDisplay { expr: self, var_name }
    }
}

fn power<S: Scalar>(base: S, exponent: S) -> Result<S> {
    let b = base.re();
    if exponent.is_real() {
        let p = exponent.re();
        if b < 0.0 && p.fract() != 0.0 {
            return Err(Error::Domain(format!("{b} raised to non-integer power {p}")));
        }
        if b == 0.0 && p < 0.0 {
            return Err(Error::Domain("division by zero in power".into()));
        }
        let v = if p.fract() == 0.0 && p.abs() < 64.0 {
            b.powi(p as i32)
        } else {
            b.powf(p)
        };
        Ok(base.lift(v, || {
            let d1 = if p == 0.0 { 0.0 } else { p * pow_real(b, p - 1.0) };
            let d2 = if p == 0.0 || p == 1.0 {
                0.0
            } else {
                p * (p - 1.0) * pow_real(b, p - 2.0)
            };
            (d1, d2)
        }))
    } else {
        if b <= 0.0 {
            return Err(Error::Domain(format!(
                "variable exponent needs a positive base, got {b}"
            )));
        }
        Func::Exp.apply(exponent * Func::Log.apply(base)?)
    }
}

fn pow_real(b: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < 64.0 {
        b.powi(p as i32)
    } else {
        b.powf(p)
    }
}

/// Fully parenthesised printer; its output parses back to the same tree.
pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    var_name: &'a str,
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(self.expr, self.var_name, f)
    }
}

fn write_expr(e: &Expr, var: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match e {
        Expr::Num(c) => write!(f, "{c:?}"),
        Expr::Var(Var::State) => f.write_str(var),
        Expr::Var(Var::Theta) => f.write_str("theta"),
        Expr::Neg(a) => {
            f.write_str("(-")?;
            write_expr(a, var, f)?;
            f.write_str(")")
        }
        Expr::Call(func, a) => {
            write!(f, "{}(", func.name())?;
            write_expr(a, var, f)?;
            f.write_str(")")
        }
        Expr::Bin(op, a, b) => {
            f.write_str("(")?;
            write_expr(a, var, f)?;
            write!(f, " {} ", op.symbol())?;
            write_expr(b, var, f)?;
            f.write_str(")")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == b'.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lit = &text[start..i];
            let v: f64 = lit.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("bad number `{lit}`"),
            })?;
            out.push((Tok::Num(v), start));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(text[start..i].to_string()), start));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                b',' => Tok::Comma,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or('?');
                    return Err(Error::Syntax {
                        offset: start,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            out.push((tok, start));
            i += 1;
        }
    }
    out.push((Tok::End, text.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    var_name: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expected(&self, what: &str) -> Error {
        let found = match self.peek() {
            Tok::End => "end of input".to_string(),
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Op(c) => format!("`{c}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
        };
        Error::Syntax {
            offset: self.offset(),
            message: format!("expected {what}, found {found}"),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if let Tok::Op('^') = self.peek() {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.expected("`)`"));
                }
                self.bump();
                Ok(e)
            }
            Tok::Ident(name) => {
                let (_, offset) = self.bump();
                if *self.peek() == Tok::LParen {
                    self.bump();
                    let mut args = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            args.push(self.expr()?);
                            if *self.peek() == Tok::Comma {
                                self.bump();
                                continue;
                            }
                            break;
                        }
                    }
                    if *self.peek() != Tok::RParen {
                        return Err(self.expected("`)` or `,`"));
                    }
                    self.bump();
                    let func = Func::from_name(&name)
                        .ok_or(Error::UnknownIdentifier { name: name.clone(), offset })?;
                    if args.len() != 1 {
                        return Err(Error::Arity {
                            name,
                            expected: 1,
                            found: args.len(),
                            offset,
                        });
                    }
                    return Ok(Expr::call(func, args.pop().unwrap()));
                }
                if name == self.var_name {
                    Ok(Expr::state())
                } else if name == "theta" {
                    Ok(Expr::theta())
                } else if name == "pi" {
                    Ok(Expr::Num(std::f64::consts::PI))
                } else if name == "e" {
                    Ok(Expr::Num(std::f64::consts::E))
                } else if Func::from_name(&name).is_some() {
                    Err(Error::Syntax {
                        offset: self.offset(),
                        message: format!("function `{name}` needs an argument list"),
                    })
                } else {
                    Err(Error::UnknownIdentifier { name, offset })
                }
            }
            _ => Err(self.expected("a number, variable, function or `(`")),
        }
    }
}

/// Parse `text` with `var_name` as the state variable.
pub fn parse(text: &str, var_name: &str) -> Result<Expr> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        var_name,
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.expected("operator or end of input"));
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(text: &str, x: f64) -> Result<f64> {
        parse(text, "x")?.eval(x, None)
    }

    #[test]
    fn precedence() {
        assert_eq!(ev("1 + x^2", 2.0).unwrap(), 5.0);
        assert_eq!(ev("-2^2", 0.0).unwrap(), -4.0);
        assert_eq!(ev("2^3^2", 0.0).unwrap(), 512.0);
        assert_eq!(ev("2*-x", 3.0).unwrap(), -6.0);
        assert_eq!(ev("2^-1", 0.0).unwrap(), 0.5);
        assert_eq!(ev("8/4/2", 0.0).unwrap(), 1.0);
        assert_eq!(ev("1-2-3", 0.0).unwrap(), -4.0);
        assert_eq!(ev("(1+2)*3", 0.0).unwrap(), 9.0);
        assert_eq!(ev("1.5e2 + 2E-1", 0.0).unwrap(), 150.2);
    }

    #[test]
    fn trailing_operator_offset() {
        match parse("x +", "x") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(parse("foo(x)", "x"), Err(Error::UnknownIdentifier { .. })));
        assert!(matches!(parse("y + 1", "x"), Err(Error::UnknownIdentifier { offset: 0, .. })));
        assert!(matches!(
            parse("sin(x, 1)", "x"),
            Err(Error::Arity { found: 2, .. })
        ));
        assert!(matches!(parse("sin()", "x"), Err(Error::Arity { found: 0, .. })));
        assert!(matches!(parse("(x", "x"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse("x $ 1", "x"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse("", "x"), Err(Error::Syntax { offset: 0, .. })));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(ev("1/x", 0.0), Err(Error::Domain(_))));
        assert!(matches!(ev("log(x)", 0.0), Err(Error::Domain(_))));
        assert!(matches!(ev("log(x)", -1.0), Err(Error::Domain(_))));
        assert!(matches!(ev("sqrt(x)", -1.0), Err(Error::Domain(_))));
        assert!(matches!(ev("x^0.5", -1.0), Err(Error::Domain(_))));
        assert!(matches!(ev("exp(x)", 1000.0), Err(Error::Domain(_))));
        assert_eq!(ev("x^3", -2.0).unwrap(), -8.0);
    }

    #[test]
    fn time_variable() {
        let e = parse("2*t", "t").unwrap();
        assert_eq!(e.eval(1.5, None).unwrap(), 3.0);
        assert!(parse("2*x", "t").is_err());
    }

    #[test]
    fn printed_form_reparses_identically() {
        for text in ["1 + x^2", "-x^-2", "sin(x)*cos(theta) - 3/x", "2^3^2", "-(1-x)", "1e-5*x"] {
            let a = parse(text, "x").unwrap();
            let printed = a.display("x").to_string();
            let b = parse(&printed, "x").unwrap();
            assert_eq!(a, b, "{text} -> {printed}");
        }
    }
}
