//! Coefficient functions and model declarations.

pub mod dual;
pub mod expr;
mod model;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use dual::{HyperDual, Scalar};
use expr::{BinOp, Expr, Func, Var};

pub use model::{validate_model, validate_model_with_margin, ModelSpec, ValidationReport};

/// A scalar function of the state variable and, optionally, of `theta`.
///
/// Cloning is cheap; the tree is shared.
#[derive(Clone)]
pub struct CoefficientFn {
    expr: Arc<Expr>,
    var_name: Arc<str>,
}

impl CoefficientFn {
    /// Parse an expression in `x`, or a builtin shortcut (`const:c`,
    /// `linear:a,b` meaning `a + b*x`).
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_in(text, "x")
    }

    /// Like [`parse`](Self::parse) but with a different state variable name
    /// (the linear-system coefficients use `t`).
    pub fn parse_in(text: &str, var_name: &str) -> Result<Self> {
        let trimmed = text.trim();
        if let Some(rest) = trimmed.strip_prefix("const:") {
            let c = parse_number(rest, "const:")?;
            return Ok(Self::from_expr(Expr::num(c), var_name));
        }
        if let Some(rest) = trimmed.strip_prefix("linear:") {
            let parts: Vec<&str> = rest.split(',').collect();
            if parts.len() != 2 {
                return Err(Error::Syntax {
                    offset: 7,
                    message: "linear: needs two comma-separated numbers".into(),
                });
            }
            let a = parse_number(parts[0], "linear:")?;
            let b = parse_number(parts[1], "linear:")?;
            let e = Expr::bin(
                BinOp::Add,
                Expr::num(a),
                Expr::bin(BinOp::Mul, Expr::num(b), Expr::state()),
            );
            return Ok(Self::from_expr(e, var_name));
        }
        Ok(Self::from_expr(expr::parse(text, var_name)?, var_name))
    }

    pub fn from_expr(expr: Expr, var_name: &str) -> Self {
        Self {
            expr: Arc::new(expr),
            var_name: Arc::from(var_name),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_expr(Expr::num(c), "x")
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn var_name(&self) -> &str {
        &self.var_name
    }

    pub fn uses_theta(&self) -> bool {
        self.expr.references(Var::Theta)
    }

    pub fn uses_state(&self) -> bool {
        self.expr.references(Var::State)
    }

    /// Value at `x`. Errors if the expression needs `theta`.
    #[inline]
    pub fn value(&self, x: f64) -> Result<f64> {
        self.expr.eval(x, None)
    }

    pub fn eval(&self, x: f64, theta: Option<f64>) -> Result<f64> {
        self.expr.eval(x, theta)
    }

    /// Forward-mode first derivative in the state variable.
    pub fn d_dx(&self, x: f64, theta: Option<f64>) -> Result<f64> {
        let v = self.expr.eval(
            HyperDual::new(x, 1.0, 0.0, 0.0),
            theta.map(HyperDual::constant),
        )?;
        Ok(v.e1)
    }

    /// Forward-mode second derivative in the state variable.
    pub fn d2_dx2(&self, x: f64, theta: Option<f64>) -> Result<f64> {
        let v = self.expr.eval(
            HyperDual::new(x, 1.0, 1.0, 0.0),
            theta.map(HyperDual::constant),
        )?;
        Ok(v.e12)
    }

    /// Forward-mode derivative in `theta`.
    pub fn d_dtheta(&self, x: f64, theta: f64) -> Result<f64> {
        let v = self.expr.eval(
            HyperDual::constant(x),
            Some(HyperDual::new(theta, 1.0, 0.0, 0.0)),
        )?;
        Ok(v.e1)
    }

    /// All of `f`, `∂f/∂x`, `∂f/∂θ` and `∂²f/∂x∂θ` in one pass.
    pub fn jet(&self, x: f64, theta: f64) -> Result<Jet> {
        let v = self.expr.eval(
            HyperDual::new(x, 1.0, 0.0, 0.0),
            Some(HyperDual::new(theta, 0.0, 1.0, 0.0)),
        )?;
        Ok(Jet {
            value: v.re,
            d_dx: v.e1,
            d_dtheta: v.e2,
            d2_dx_dtheta: v.e12,
        })
    }

    /// Central finite difference in the state variable with step
    /// `1e-5·(1+|x|)`; used as a cross-check for [`d_dx`](Self::d_dx).
    pub fn num_d_dx(&self, x: f64, theta: Option<f64>) -> Result<f64> {
        let h = 1e-5 * (1.0 + x.abs());
        Ok((self.eval(x + h, theta)? - self.eval(x - h, theta)?) / (2.0 * h))
    }

    /// `self ∘ inner`: substitute `inner` for the state variable.
    pub fn compose(&self, inner: &Expr) -> CoefficientFn {
        Self::from_expr(self.expr.substitute_state(inner), &self.var_name)
    }

    /// Fix `theta` at `value`.
    pub fn with_theta(&self, value: f64) -> CoefficientFn {
        Self::from_expr(self.expr.substitute_theta(value), &self.var_name)
    }

    /// `k · self`
    pub fn scaled(&self, k: f64) -> CoefficientFn {
        Self::from_expr(Expr::bin(BinOp::Mul, Expr::num(k), (*self.expr).clone()), &self.var_name)
    }

    /// Short canonical text that parses back to the same tree.
    pub fn canonical(&self) -> String {
        self.expr.display(&self.var_name).to_string()
    }
}

/// Value and first/mixed derivatives of a coefficient at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub d_dx: f64,
    pub d_dtheta: f64,
    pub d2_dx_dtheta: f64,
}

fn parse_number(s: &str, ctx: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Syntax {
        offset: ctx.len(),
        message: format!("`{}` is not a number", s.trim()),
    })
}

impl fmt::Debug for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefficientFn({})", self.canonical())
    }
}

impl fmt::Display for CoefficientFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl PartialEq for CoefficientFn {
    fn eq(&self, other: &Self) -> bool {
        self.var_name == other.var_name && self.expr == other.expr
    }
}

impl Serialize for CoefficientFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.canonical())
    }
}

impl<'de> Deserialize<'de> for CoefficientFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        CoefficientFn::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Deserialize a coefficient written in the time variable `t`.
pub fn deserialize_time_fn<'de, D: Deserializer<'de>>(
    d: D,
) -> std::result::Result<CoefficientFn, D::Error> {
    let text = String::deserialize(d)?;
    CoefficientFn::parse_in(&text, "t").map_err(serde::de::Error::custom)
}

/// Builds `c · (trend² / diffusion²) · cos(n·(x − x0))`.
pub(crate) fn oscillating_signal(
    trend: &CoefficientFn,
    diffusion: &CoefficientFn,
    c: f64,
    n: f64,
    x0: f64,
) -> CoefficientFn {
    let sq = |e: &Expr| Expr::bin(BinOp::Pow, e.clone(), Expr::Num(2.0));
    let ratio = Expr::bin(BinOp::Div, sq(trend.expr()), sq(diffusion.expr()));
    let phase = Expr::bin(
        BinOp::Mul,
        Expr::num(n),
        Expr::bin(BinOp::Sub, Expr::state(), Expr::num(x0)),
    );
    let e = Expr::bin(
        BinOp::Mul,
        Expr::num(c),
        Expr::bin(BinOp::Mul, ratio, Expr::call(Func::Cos, phase)),
    );
    CoefficientFn::from_expr(e, "x")
}
