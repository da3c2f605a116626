//! Quadrature, interpolation and one-dimensional optimisation helpers.

use crate::error::{invalid, Result};

/// Trapezoid rule for samples on a uniform grid with spacing `dt`.
pub fn trapezoid(values: &[f64], dt: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            dt * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral; `out[0] = 0`.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    if !values.is_empty() {
        out.push(0.0);
    }
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Trapezoid rule on an arbitrary increasing abscissa.
pub fn trapezoid_xy(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Composite Simpson rule for `∫_a^b f` with `intervals` (rounded up to even)
/// sub-intervals. Works for `b < a` too.
pub fn simpson<F>(f: F, a: f64, b: f64, intervals: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let n = intervals.max(2).div_ceil(2) * 2;
    let h = (b - a) / n as f64;
    if h == 0.0 {
        return Ok(0.0);
    }
    let mut acc = f(a)? + f(b)?;
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * k as f64)?;
    }
    Ok(acc * h / 3.0)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimiser of a unimodal `f` on `[a, b]`.
/// Returns `(x, f(x))`.
pub fn golden_section<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    /// The grid scan put the minimum on an end point of the interval.
    pub at_boundary: bool,
}

/// Scan `grid_points` equally spaced nodes of `[lo, hi]`, then refine around
/// the best node by golden-section search.
pub fn grid_then_golden<F>(mut f: F, lo: f64, hi: f64, grid_points: usize, tol: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || grid_points < 3 {
        return Err(invalid("grid search needs lo < hi and at least 3 nodes"));
    }
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut best = (0usize, f64::INFINITY);
    for k in 0..grid_points {
        let v = f(lo + step * k as f64)?;
        if v < best.1 {
            best = (k, v);
        }
    }
    let k = best.0;
    let a = lo + step * k.saturating_sub(1) as f64;
    let b = lo + step * (k + 1).min(grid_points - 1) as f64;
    let (x, value) = golden_section(&mut f, a, b, tol)?;
    let (x, value) = if value <= best.1 {
        (x, value)
    } else {
        (lo + step * k as f64, best.1)
    };
    let edge = step.max(tol);
    Ok(Minimum {
        x,
        value,
        at_boundary: x - lo < edge * 0.5 || hi - x < edge * 0.5,
    })
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(invalid("pchip needs at least two points of matching length"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("pchip abscissae must be strictly increasing"));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { x, y, slopes })
    }

    /// Value at `t`; clamps outside the data range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= t) - 1;
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.slopes[k] + h01 * self.y[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}
