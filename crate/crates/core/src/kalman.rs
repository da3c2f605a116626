//! Partially observed linear system, its Kalman–Bucy filter and the
//! innovation C-vM statistic.
//!
//! Signal `dY = A_t Y dt + ε B_t dV`, `Y₀ = y₀`; observation
//! `dX = C_t Y dt + ε σ_t dW`, `X₀ = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff::{deserialize_time_fn, CoefficientFn};
use crate::error::{invalid, Error, Result};
use crate::quad::{cumulative_trapezoid, trapezoid};
use crate::rng::{tag, NoiseStream, StreamKey};
use crate::simulate::{rk4_system, TimeGrid, Trajectory, TrajectoryMeta};

/// Riccati values above this count as a blow-up.
const RICCATI_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystemSpec {
    #[serde(rename = "A", deserialize_with = "deserialize_time_fn")]
    pub a: CoefficientFn,
    #[serde(rename = "B", deserialize_with = "deserialize_time_fn")]
    pub b: CoefficientFn,
    #[serde(rename = "C", deserialize_with = "deserialize_time_fn")]
    pub c: CoefficientFn,
    #[serde(deserialize_with = "deserialize_time_fn")]
    pub sigma: CoefficientFn,
    pub y0: f64,
    pub epsilon: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl LinearSystemSpec {
    /// Coefficients are DSL expressions in `t`.
    pub fn from_strs(a: &str, b: &str, c: &str, sigma: &str, y0: f64, epsilon: f64, horizon: f64) -> Result<Self> {
        let spec = Self {
            a: CoefficientFn::parse_in(a, "t")?,
            b: CoefficientFn::parse_in(b, "t")?,
            c: CoefficientFn::parse_in(c, "t")?,
            sigma: CoefficientFn::parse_in(sigma, "t")?,
            y0,
            epsilon,
            horizon,
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon must be non-negative"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("T must be positive"));
        }
        for (name, f) in [("A", &self.a), ("B", &self.b), ("C", &self.c), ("sigma", &self.sigma)] {
            if f.uses_theta() {
                return Err(invalid(format!("{name} may not reference theta")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }
}

#[derive(Debug, Clone, Copy)]
struct Coefs {
    a: f64,
    b: f64,
    c: f64,
    sigma: f64,
}

fn coefs_at(spec: &LinearSystemSpec, t: f64) -> Result<Coefs> {
    Ok(Coefs {
        a: spec.a.value(t)?,
        b: spec.b.value(t)?,
        c: spec.c.value(t)?,
        sigma: spec.sigma.value(t)?,
    })
}

/// Coefficient curves tabulated on a grid, plus the Riccati solution, so
/// Monte Carlo loops evaluate them once.
#[derive(Debug, Clone)]
pub struct KalmanSetup {
    pub spec: LinearSystemSpec,
    pub grid: TimeGrid,
    nodes: Vec<Coefs>,
    pub gamma: Vec<f64>,
}

impl KalmanSetup {
    pub fn new(spec: &LinearSystemSpec, grid: &TimeGrid) -> Result<Self> {
        spec.check()?;
        if (grid.horizon - spec.horizon).abs() > 1e-12 * spec.horizon {
            return Err(invalid("grid horizon differs from the system horizon"));
        }
        let nodes = (0..grid.len())
            .map(|i| coefs_at(spec, grid.t(i)))
            .collect::<Result<Vec<_>>>()?;
        for (i, c) in nodes.iter().enumerate() {
            if c.sigma == 0.0 {
                return Err(invalid(format!("sigma_t vanishes at t = {}", grid.t(i))));
            }
        }
        let gamma = solve_riccati(spec, grid)?;
        Ok(Self {
            spec: spec.clone(),
            grid: *grid,
            nodes,
            gamma,
        })
    }

    /// Joint Euler–Maruyama for `(X, Y)`; `V` and `W` come from separate
    /// sub-streams of `key`.
    pub fn simulate(&self, key: StreamKey) -> Result<(Trajectory, Trajectory)> {
        let dt = self.grid.dt();
        let scale = self.spec.epsilon * dt.sqrt();
        let mut v_noise = NoiseStream::new(key, tag::SIGNAL);
        let mut w_noise = NoiseStream::new(key, tag::OBSERVATION);
        let mut xs = Vec::with_capacity(self.grid.len());
        let mut ys = Vec::with_capacity(self.grid.len());
        let (mut x, mut y) = (0.0, self.spec.y0);
        xs.push(x);
        ys.push(y);
        for i in 0..self.grid.n_steps {
            let c = self.nodes[i];
            let ny = y + c.a * y * dt + scale * c.b * v_noise.normal();
            let nx = x + c.c * y * dt + scale * c.sigma * w_noise.normal();
            if !nx.is_finite() || !ny.is_finite() {
                return Err(Error::NonFinite { t: self.grid.t(i + 1) });
            }
            x = nx;
            y = ny;
            xs.push(x);
            ys.push(y);
        }
        let meta = TrajectoryMeta {
            seed: Some(key.seed),
            stream: Some(key.index),
            model_hash: None,
        };
        Ok((
            Trajectory {
                grid: self.grid,
                values: xs,
                meta: meta.clone(),
            },
            Trajectory {
                grid: self.grid,
                values: ys,
                meta,
            },
        ))
    }

    /// `dM = A M dt + (C Γ/σ²)(dX − C M dt)`, Euler with Itô increments.
    pub fn filter(&self, x: &Trajectory) -> Result<FilterPath> {
        if x.grid != self.grid {
            return Err(invalid("observation grid differs from the filter grid"));
        }
        let dt = self.grid.dt();
        let mut m = Vec::with_capacity(self.grid.len());
        let mut cur = self.spec.y0;
        m.push(cur);
        for i in 0..self.grid.n_steps {
            let c = self.nodes[i];
            let gain = c.c * self.gamma[i] / (c.sigma * c.sigma);
            let dx = x.values[i + 1] - x.values[i];
            cur = cur + c.a * cur * dt + gain * (dx - c.c * cur * dt);
            if !cur.is_finite() {
                return Err(Error::NonFinite { t: self.grid.t(i + 1) });
            }
            m.push(cur);
        }
        Ok(FilterPath {
            grid: self.grid,
            m,
            gamma: self.gamma.clone(),
        })
    }

    /// `(ε ∫σ²)⁻² ∫ σ² [X_t − ∫₀ᵗ C M ds]² dt`
    pub fn statistic(&self, x: &Trajectory, fp: &FilterPath) -> Result<f64> {
        let dt = self.grid.dt();
        let cm: Vec<f64> = self.nodes.iter().zip(&fp.m).map(|(c, m)| c.c * m).collect();
        let icm = cumulative_trapezoid(&cm, dt);
        let sig2: Vec<f64> = self.nodes.iter().map(|c| c.sigma * c.sigma).collect();
        let f: Vec<f64> = (0..sig2.len())
            .map(|i| sig2[i] * (x.values[i] - icm[i]).powi(2))
            .collect();
        let norm = self.spec.epsilon * trapezoid(&sig2, dt);
        if norm == 0.0 {
            return Err(invalid("statistic needs epsilon > 0"));
        }
        Ok(trapezoid(&f, dt) / (norm * norm))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterPath {
    pub grid: TimeGrid,
    /// Conditional mean `M_t`.
    pub m: Vec<f64>,
    /// Normalised error variance `Γ_t = γ(t)/ε²`.
    pub gamma: Vec<f64>,
}

/// `Γ' = 2AΓ − C²Γ²/σ² + B²`, `Γ₀ = 0`, by RK4.
pub fn solve_riccati(spec: &LinearSystemSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
    let path = rk4_system(
        |t, [g]| {
            let c = coefs_at(spec, t)?;
            let d = 2.0 * c.a * g - c.c * c.c * g * g / (c.sigma * c.sigma) + c.b * c.b;
            if g.abs() > RICCATI_LIMIT {
                return Err(Error::RiccatiBlowup { t });
            }
            Ok([d])
        },
        [0.0],
        grid,
    )
    .map_err(|e| match e {
        Error::NonFinite { t } => Error::RiccatiBlowup { t },
        other => other,
    })?;
    Ok(path.into_iter().map(|[g]| g).collect())
}

pub fn simulate_linear_system(spec: &LinearSystemSpec, grid: &TimeGrid, key: StreamKey) -> Result<(Trajectory, Trajectory)> {
    KalmanSetup::new(spec, grid)?.simulate(key)
}

pub fn kalman_filter(x: &Trajectory, spec: &LinearSystemSpec) -> Result<FilterPath> {
    KalmanSetup::new(spec, &x.grid)?.filter(x)
}

pub fn stat_kalman(x: &Trajectory, fp: &FilterPath, spec: &LinearSystemSpec) -> Result<f64> {
    KalmanSetup::new(spec, &x.grid)?.statistic(x, fp)
}
