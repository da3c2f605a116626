//! Local time of the observed path and the local-time C-vM statistic.

use serde::{Deserialize, Serialize};

use crate::coeff::ModelSpec;
use crate::error::{invalid, Error, Result};
use crate::simulate::{LimitPath, Trajectory};

pub const DEFAULT_BINS: usize = 200;

/// `n_bins` equal cells on `[lo, hi]`, evaluated at their midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_bins: usize,
}

impl SpaceGrid {
    pub fn new(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(invalid(format!("space grid needs lo < hi, got [{lo}, {hi}]")));
        }
        if n_bins < 2 {
            return Err(invalid("space grid needs at least 2 bins"));
        }
        Ok(Self { lo, hi, n_bins })
    }

    /// Grid spanning `[x₀, x_T]` of a limit path.
    pub fn spanning(limit: &LimitPath, n_bins: usize) -> Result<Self> {
        let a = limit.values[0];
        let b = limit.terminal();
        Self::new(a.min(b), a.max(b), n_bins)
    }

    #[inline]
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n_bins as f64
    }

    #[inline]
    pub fn midpoint(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.midpoint(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalTimeCurve {
    pub grid: SpaceGrid,
    pub lambda: Vec<f64>,
    /// Kernel half-width; zero for the Tanaka estimator.
    pub bandwidth: f64,
}

impl LocalTimeCurve {
    /// CSV with header `x,lambda`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,lambda\n");
        for (k, l) in self.lambda.iter().enumerate() {
            s.push_str(&format!("{:.16e},{:.16e}\n", self.grid.midpoint(k), l));
        }
        s
    }
}

/// Default half-width: twice the typical one-step increment, but never
/// narrower than one bin.
pub fn default_bandwidth(traj: &Trajectory, grid: &SpaceGrid) -> f64 {
    let n = traj.values.len() - 1;
    let mean_sq = traj.values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / n as f64;
    (2.0 * mean_sq.sqrt()).max(grid.width())
}

/// `Λ_T(x) ≈ (ε²/2ν) ∫₀ᵀ 1{|X_t − x| ≤ ν} σ(X_t)² dt` at every midpoint.
/// Each time node adds its trapezoid weight to the contiguous run of bins it
/// covers, via a difference array.
pub fn local_time_occupation(traj: &Trajectory, spec: &ModelSpec, grid: &SpaceGrid, nu: f64) -> Result<LocalTimeCurve> {
    if !(nu > 0.0) {
        return Err(invalid("bandwidth nu must be positive"));
    }
    let dt = traj.grid.dt();
    let n = traj.values.len();
    let h = grid.width();
    let mut diff = vec![0.0; grid.n_bins + 1];
    for (i, &x) in traj.values.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 * dt } else { dt };
        let sigma = spec.diffusion.value(x)?;
        // bins k with |x − midpoint(k)| ≤ ν
        let first = ((x - nu - grid.lo) / h - 0.5).ceil().max(0.0);
        let last = ((x + nu - grid.lo) / h - 0.5).floor().min(grid.n_bins as f64 - 1.0);
        if first > last {
            continue;
        }
        let v = w * sigma * sigma;
        diff[first as usize] += v;
        diff[last as usize + 1] -= v;
    }
    let scale = spec.epsilon * spec.epsilon / (2.0 * nu);
    let mut acc = 0.0;
    let lambda = diff[..grid.n_bins]
        .iter()
        .map(|d| {
            acc += d;
            (acc * scale).max(0.0)
        })
        .collect();
    Ok(LocalTimeCurve {
        grid: *grid,
        lambda,
        bandwidth: nu,
    })
}

/// Tanaka–Meyer: `Λ_T(x) = |X_T − x| − |x₀ − x| − Σ sgn(X_i − x) ΔX_i`, with
/// `sgn(0) = 0`. Sorting the nodes by level turns each evaluation into two
/// prefix-sum lookups.
pub fn local_time_tanaka(traj: &Trajectory, grid: &SpaceGrid) -> LocalTimeCurve {
    let v = &traj.values;
    let mut steps: Vec<(f64, f64)> = v.windows(2).map(|w| (w[0], w[1] - w[0])).collect();
    steps.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prefix = Vec::with_capacity(steps.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for (_, d) in &steps {
        acc += d;
        prefix.push(acc);
    }
    let total = acc;
    let x0 = v[0];
    let xt = v[v.len() - 1];
    let lambda = grid
        .midpoints()
        .into_iter()
        .map(|x| {
            let below = steps.partition_point(|s| s.0 < x);
            let not_above = steps.partition_point(|s| s.0 <= x);
            let neg = prefix[below];
            let pos = total - prefix[not_above];
            ((xt - x).abs() - (x0 - x).abs() - (pos - neg)).max(0.0)
        })
        .collect();
    LocalTimeCurve {
        grid: *grid,
        lambda,
        bandwidth: 0.0,
    }
}

/// `η_ε` at the right edge of every bin whose midpoint lies in `[x₀, x_T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaProcess {
    /// Abscissae, starting with `x₀` where `η = 0`.
    pub x: Vec<f64>,
    pub eta: Vec<f64>,
    /// Weight `σ²/S₀³` at each abscissa.
    pub weight: Vec<f64>,
}

/// `η_ε(x) = ε⁻¹ ∫_{x₀}^{x} (1/S₀(y) − Λ_T(y)/(ε² σ(y)²)) dy`, midpoint rule
/// on the bins inside `[x₀, x_T]`.
pub fn eta_process(lt: &LocalTimeCurve, spec: &ModelSpec, limit: &LimitPath) -> Result<EtaProcess> {
    let x0 = spec.x0;
    let xt = limit.terminal();
    let (a, b) = (x0.min(xt), x0.max(xt));
    let h = lt.grid.width();
    let eps = spec.epsilon;
    let mut out = EtaProcess {
        x: vec![x0],
        eta: vec![0.0],
        weight: vec![weight_at(spec, x0)?],
    };
    let mut acc = 0.0;
    for (k, l) in lt.lambda.iter().enumerate() {
        let y = lt.grid.midpoint(k);
        if y < a || y > b {
            continue;
        }
        let s = spec.trend.value(y)?;
        let sigma = spec.diffusion.value(y)?;
        if s <= 0.0 || sigma == 0.0 {
            return Err(Error::Positivity {
                what: if s <= 0.0 { "trend S0".into() } else { "diffusion sigma^2".into() },
                x: y,
                value: if s <= 0.0 { s } else { 0.0 },
            });
        }
        acc += h * (1.0 / s - l / (eps * eps * sigma * sigma));
        let edge = (y + 0.5 * h).min(b);
        out.x.push(edge);
        out.eta.push(acc / eps);
        out.weight.push(weight_at(spec, edge)?);
    }
    Ok(out)
}

fn weight_at(spec: &ModelSpec, x: f64) -> Result<f64> {
    let s = spec.trend.value(x)?;
    let g = spec.diffusion.value(x)?;
    Ok(g * g / (s * s * s))
}

/// `g(x) = ∫_{x₀}^{x} σ²/S₀³ dy` by Simpson's rule.
pub fn g_function(spec: &ModelSpec, x: f64) -> Result<f64> {
    crate::quad::simpson(|y| weight_at(spec, y), spec.x0, x, 2000)
}

/// `g_T⁻² ∫ (σ²/S₀³) η² dx` over `[x₀, x_T]`, asymptotically `∫₀¹ w²`.
pub fn stat_localtime(lt: &LocalTimeCurve, spec: &ModelSpec, limit: &LimitPath) -> Result<f64> {
    let eta = eta_process(lt, spec, limit)?;
    if eta.x.len() < 2 {
        return Err(invalid("no space bins inside [x0, xT]"));
    }
    let g_t = g_function(spec, limit.terminal())?;
    let f: Vec<f64> = eta.eta.iter().zip(&eta.weight).map(|(e, w)| w * e * e).collect();
    Ok(crate::quad::trapezoid_xy(&eta.x, &f) / (g_t * g_t))
}
