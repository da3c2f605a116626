//! Paths of the diffusion, its deterministic limit, the first-order Gaussian
//! correction and drift-perturbed alternatives.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientFn, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::rng::{tag, NoiseStream, StreamKey};

pub const DEFAULT_STEPS: usize = 10_000;

/// Uniform grid `t_i = i·T/n`, `i = 0..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("grid horizon must be positive, got {horizon}")));
        }
        if n_steps < 2 {
            return Err(invalid("a time grid needs at least 2 steps"));
        }
        Ok(Self { horizon, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.horizon * i as f64 / self.n_steps as f64
    }

    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.t(i)).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub model_hash: Option<String>,
}

/// Observed values `X_{t_i}` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "trajectory has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            meta: TrajectoryMeta::default(),
        })
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// CSV with header `t,x` and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x")?;
        for (i, x) in self.values.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e}", self.grid.t(i), x)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Parse a `t,x` CSV; the time column must start at 0 and be uniform.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut lines = BufReader::new(input).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty trajectory file".into()))??;
        if header.trim().replace(' ', "") != "t,x" {
            return Err(Error::Format(format!("expected header `t,x`, found `{header}`")));
        }
        let mut ts = Vec::new();
        let mut xs = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                let field = parts
                    .next()
                    .ok_or_else(|| Error::Format(format!("line {}: missing {name}", lineno + 2)))?;
                field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad {name} `{field}`", lineno + 2)))
            };
            ts.push(next("t")?);
            xs.push(next("x")?);
        }
        if ts.len() < 3 {
            return Err(Error::Format("a trajectory needs at least 3 rows".into()));
        }
        let n = ts.len() - 1;
        let grid = TimeGrid::new(ts[n], n)?;
        let tol = 1e-9 * grid.horizon.max(1.0);
        for (i, t) in ts.iter().enumerate() {
            if (t - grid.t(i)).abs() > tol {
                return Err(Error::Format(format!("row {}: time grid is not uniform from 0", i + 2)));
            }
        }
        Trajectory::new(grid, xs)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Solution `x_{t_i}` of the limit ODE on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitPath {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl LimitPath {
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Classical RK4 for `y' = f(t, y)` on the grid nodes.
pub fn rk4_system<const N: usize, F>(mut f: F, y0: [f64; N], grid: &TimeGrid) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, [f64; N]) -> Result<[f64; N]>,
{
    let h = grid.dt();
    let axpy = |y: [f64; N], a: f64, k: [f64; N]| -> [f64; N] {
        let mut out = y;
        for j in 0..N {
            out[j] += a * k[j];
        }
        out
    };
    // overflow inside a stage is a blow-up at that stage's time
    let mut f = |t: f64, y: [f64; N]| {
        f(t, y).map_err(|e| match e {
            Error::Domain(m) if m.starts_with("non-finite") => Error::NonFinite { t },
            e => e,
        })
    };
    let mut out = Vec::with_capacity(grid.len());
    let mut y = y0;
    out.push(y);
    for i in 0..grid.n_steps {
        let t = grid.t(i);
        let k1 = f(t, y)?;
        let k2 = f(t + 0.5 * h, axpy(y, 0.5 * h, k1))?;
        let k3 = f(t + 0.5 * h, axpy(y, 0.5 * h, k2))?;
        let k4 = f(t + h, axpy(y, h, k3))?;
        for j in 0..N {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: grid.t(i + 1) });
        }
        out.push(y);
    }
    Ok(out)
}

/// RK4 for an autonomous scalar ODE `x' = f(x)`.
pub fn rk4_autonomous<F>(f: F, x0: f64, grid: &TimeGrid) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let path = rk4_system(|_, [x]| Ok([f(x)?]), [x0], grid)?;
    Ok(path.into_iter().map(|[x]| x).collect())
}

pub fn solve_limit_ode(spec: &ModelSpec, grid: &TimeGrid) -> Result<LimitPath> {
    let values = rk4_autonomous(|x| spec.trend.value(x), spec.x0, grid)?;
    Ok(LimitPath { grid: *grid, values })
}

/// How a signal `h` perturbs the null drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `S₀ + ε h σ² / S₀`
    Eq7,
    /// `S₀ + ε h σ`
    Chisq,
    /// `S₀ + h`
    FixedDrift,
}

impl Scaling {
    #[inline]
    fn perturb(self, s0: f64, sigma: f64, h: f64, eps: f64) -> f64 {
        match self {
            Scaling::Eq7 => s0 + eps * h * sigma * sigma / s0,
            Scaling::Chisq => s0 + eps * h * sigma,
            Scaling::FixedDrift => s0 + h,
        }
    }
}

fn euler_maruyama<F>(spec: &ModelSpec, grid: &TimeGrid, key: StreamKey, drift: F) -> Result<Trajectory>
where
    F: Fn(f64, f64) -> Result<f64>,
{
    if !(spec.epsilon >= 0.0 && spec.epsilon.is_finite()) {
        return Err(invalid("epsilon must be non-negative"));
    }
    let dt = grid.dt();
    let scale = spec.epsilon * dt.sqrt();
    let mut noise = NoiseStream::new(key, tag::DIFFUSION);
    let mut values = Vec::with_capacity(grid.len());
    let mut x = spec.x0;
    values.push(x);
    for i in 0..grid.n_steps {
        let sigma = spec.diffusion.value(x)?;
        let b = drift(x, sigma)?;
        x = x + b * dt + scale * sigma * noise.normal();
        if !x.is_finite() {
            return Err(Error::NonFinite { t: grid.t(i + 1) });
        }
        values.push(x);
    }
    Ok(Trajectory {
        grid: *grid,
        values,
        meta: TrajectoryMeta {
            seed: Some(key.seed),
            stream: Some(key.index),
            model_hash: Some(spec.content_hash()),
        },
    })
}

/// Euler–Maruyama path of the null model; stream `(seed, 0)`.
pub fn simulate_sde(spec: &ModelSpec, grid: &TimeGrid, seed: u64) -> Result<Trajectory> {
    simulate_sde_stream(spec, grid, StreamKey::from(seed))
}

pub fn simulate_sde_stream(spec: &ModelSpec, grid: &TimeGrid, key: StreamKey) -> Result<Trajectory> {
    euler_maruyama(spec, grid, key, |x, _| spec.trend.value(x))
}

/// Euler scheme for `dx¹ = S₀'(x_t) x¹ dt + σ(x_t) dW`, `x¹₀ = 0`, driven by
/// the same Gaussian increments as [`simulate_sde_stream`] with this key.
pub fn simulate_first_order(spec: &ModelSpec, grid: &TimeGrid, key: StreamKey) -> Result<Vec<f64>> {
    let limit = solve_limit_ode(spec, grid)?;
    let dt = grid.dt();
    let sq = dt.sqrt();
    let mut noise = NoiseStream::new(key, tag::DIFFUSION);
    let mut out = Vec::with_capacity(grid.len());
    let mut y = 0.0;
    out.push(y);
    for i in 0..grid.n_steps {
        let x = limit.values[i];
        let ds = spec.trend.d_dx(x, None)?;
        let sigma = spec.diffusion.value(x)?;
        y = y + ds * y * dt + sigma * sq * noise.normal();
        if !y.is_finite() {
            return Err(Error::NonFinite { t: grid.t(i + 1) });
        }
        out.push(y);
    }
    Ok(out)
}

/// `S₀(x_t) ∫₀ᵗ σ(x_s)/S₀(x_s) dW_s` with the same increments as
/// [`simulate_first_order`].
pub fn first_order_explicit(spec: &ModelSpec, grid: &TimeGrid, key: StreamKey) -> Result<Vec<f64>> {
    let limit = solve_limit_ode(spec, grid)?;
    let sq = grid.dt().sqrt();
    let mut noise = NoiseStream::new(key, tag::DIFFUSION);
    let mut out = Vec::with_capacity(grid.len());
    let mut integral = 0.0;
    out.push(0.0);
    for i in 0..grid.n_steps {
        let x = limit.values[i];
        integral += spec.diffusion.value(x)? / spec.trend.value(x)? * sq * noise.normal();
        out.push(spec.trend.value(limit.values[i + 1])? * integral);
    }
    Ok(out)
}

/// Euler–Maruyama under the drift perturbed by `h` according to `scaling`.
pub fn simulate_alternative(
    spec: &ModelSpec,
    h: &CoefficientFn,
    grid: &TimeGrid,
    key: StreamKey,
    scaling: Scaling,
) -> Result<Trajectory> {
    let eps = spec.epsilon;
    euler_maruyama(spec, grid, key, |x, sigma| {
        Ok(scaling.perturb(spec.trend.value(x)?, sigma, h.value(x)?, eps))
    })
}

/// RK4 for `dxʰ/dt = S₀(xʰ) + ε σ(xʰ)² h(xʰ) / S₀(xʰ)`.
pub fn limit_ode_alternative(spec: &ModelSpec, h: &CoefficientFn, grid: &TimeGrid) -> Result<LimitPath> {
    let eps = spec.epsilon;
    let values = rk4_autonomous(
        |x| {
            let sigma = spec.diffusion.value(x)?;
            Ok(Scaling::Eq7.perturb(spec.trend.value(x)?, sigma, h.value(x)?, eps))
        },
        spec.x0,
        grid,
    )?;
    Ok(LimitPath { grid: *grid, values })
}
