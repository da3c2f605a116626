//! Scalars the expression evaluator runs over: plain `f64` and a hyper-dual
//! number carrying two first-order directions and their mixed second
//! derivative.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(c: f64) -> Self;
    fn re(&self) -> f64;
    /// True when all derivative parts vanish.
    fn is_real(&self) -> bool;
    fn is_finite(&self) -> bool;
    /// Apply a scalar function with value `f` at `self.re()`; `derivs` yields
    /// `(f'(re), f''(re))` and is only called when derivative parts exist.
    fn lift(self, f: f64, derivs: impl FnOnce() -> (f64, f64)) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn constant(c: f64) -> Self {
        c
    }
    #[inline]
    fn re(&self) -> f64 {
        *self
    }
    #[inline]
    fn is_real(&self) -> bool {
        true
    }
    #[inline]
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
    #[inline]
    fn lift(self, f: f64, _derivs: impl FnOnce() -> (f64, f64)) -> Self {
        f
    }
}

/// `re + e1·ε₁ + e2·ε₂ + e12·ε₁ε₂` with `ε₁² = ε₂² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        Self { re, e1, e2, e12 }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.e1 + o.e1, self.e2 + o.e2, self.e12 + o.e12)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.e1 - o.e1, self.e2 - o.e2, self.e12 - o.e12)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re,
            self.re * o.e1 + self.e1 * o.re,
            self.re * o.e2 + self.e2 * o.re,
            self.re * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.re,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = o.lift(1.0 / o.re, || {
            let r = o.re;
            (-1.0 / (r * r), 2.0 / (r * r * r))
        });
        self * inv
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl Scalar for HyperDual {
    fn constant(c: f64) -> Self {
        Self::new(c, 0.0, 0.0, 0.0)
    }
    fn re(&self) -> f64 {
        self.re
    }
    fn is_real(&self) -> bool {
        self.e1 == 0.0 && self.e2 == 0.0 && self.e12 == 0.0
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.e1.is_finite() && self.e2.is_finite() && self.e12.is_finite()
    }
    fn lift(self, f: f64, derivs: impl FnOnce() -> (f64, f64)) -> Self {
        if self.is_real() {
            return Self::constant(f);
        }
        let (d1, d2) = derivs();
        Self::new(
            f,
            d1 * self.e1,
            d1 * self.e2,
            d1 * self.e12 + d2 * self.e1 * self.e2,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_mixed_part() {
        // f(x, y) = x·y at (2, 3): fx = 3, fy = 2, fxy = 1
        let x = HyperDual::new(2.0, 1.0, 0.0, 0.0);
        let y = HyperDual::new(3.0, 0.0, 1.0, 0.0);
        let p = x * y;
        assert_eq!(p, HyperDual::new(6.0, 3.0, 2.0, 1.0));
    }

    #[test]
    fn second_derivative_of_reciprocal() {
        // 1/x at x = 2 seeded in both directions: f'' = 2/x³ = 0.25
        let x = HyperDual::new(2.0, 1.0, 1.0, 0.0);
        let r = HyperDual::constant(1.0) / x;
        assert!((r.re - 0.5).abs() < 1e-15);
        assert!((r.e1 + 0.25).abs() < 1e-15);
        assert!((r.e12 - 0.25).abs() < 1e-15);
    }
}
