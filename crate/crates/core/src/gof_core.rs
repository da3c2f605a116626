//! Cramér–von Mises and Kolmogorov–Smirnov type statistics built from the
//! normalised deviation `(X_t − x_t)/ε`, and the test decision.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coeff::ModelSpec;
use crate::error::{invalid, Error, Result};
use crate::quad::{cumulative_trapezoid, trapezoid};
use crate::refdist::{Distribution, QuantileTable};
use crate::simulate::{solve_limit_ode, TimeGrid, Trajectory};

/// Every statistic the crate can compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    Cvm,
    Ks,
    CvmPlugin,
    KsPlugin,
    CvmIntegral,
    Degenerate,
    Chisq,
    ChisqWeighted,
    Localtime,
    Kalman,
    Adf,
}

impl Statistic {
    pub const ALL: [Statistic; 11] = [
        Statistic::Cvm,
        Statistic::Ks,
        Statistic::CvmPlugin,
        Statistic::KsPlugin,
        Statistic::CvmIntegral,
        Statistic::Degenerate,
        Statistic::Chisq,
        Statistic::ChisqWeighted,
        Statistic::Localtime,
        Statistic::Kalman,
        Statistic::Adf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Cvm => "cvm",
            Statistic::Ks => "ks",
            Statistic::CvmPlugin => "cvm-plugin",
            Statistic::KsPlugin => "ks-plugin",
            Statistic::CvmIntegral => "cvm-integral",
            Statistic::Degenerate => "degenerate",
            Statistic::Chisq => "chisq",
            Statistic::ChisqWeighted => "chisq-weighted",
            Statistic::Localtime => "localtime",
            Statistic::Kalman => "kalman",
            Statistic::Adf => "adf",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| invalid(format!("unknown statistic `{name}`")))
    }

    /// The law the statistic converges to under the null.
    pub fn limit_law(self) -> Distribution {
        match self {
            Statistic::Ks | Statistic::KsPlugin => Distribution::SupAbsWiener,
            Statistic::Chisq | Statistic::ChisqWeighted => Distribution::StdNormal,
            _ => Distribution::IntSquaredWiener,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic_name: String,
    pub value: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub reject: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl TestReport {
    pub fn new(name: &str, value: f64, threshold: f64, alpha: f64) -> Self {
        Self {
            statistic_name: name.to_string(),
            value,
            threshold,
            alpha,
            reject: value > threshold,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// Reject iff `value > c_α`; equality accepts.
pub fn decide(value: f64, table: &QuantileTable, alpha: f64, name: &str) -> Result<TestReport> {
    let threshold = table.critical_value(alpha)?;
    Ok(TestReport::new(name, value, threshold, alpha))
}

/// Everything about the null limit path the simple-hypothesis statistics
/// need, tabulated once on a grid.
#[derive(Debug, Clone)]
pub struct NullPath {
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub x: Vec<f64>,
    pub trend: Vec<f64>,
    pub diffusion: Vec<f64>,
    /// `u_T = ∫₀ᵀ σ(x_t)²/S₀(x_t)² dt`
    pub u_t: f64,
    /// `∫₀ᵀ σ(x_t)² dt`
    pub tau_limit: f64,
}

impl NullPath {
    pub fn new(spec: &ModelSpec, grid: &TimeGrid) -> Result<Self> {
        let limit = solve_limit_ode(spec, grid)?;
        let mut trend = Vec::with_capacity(grid.len());
        let mut diffusion = Vec::with_capacity(grid.len());
        for &x in &limit.values {
            let s = spec.trend.value(x)?;
            if s <= 0.0 {
                return Err(Error::Positivity {
                    what: "trend S0".into(),
                    x,
                    value: s,
                });
            }
            trend.push(s);
            diffusion.push(spec.diffusion.value(x)?);
        }
        let ratio: Vec<f64> = trend
            .iter()
            .zip(&diffusion)
            .map(|(s, g)| g * g / (s * s))
            .collect();
        let sig2: Vec<f64> = diffusion.iter().map(|g| g * g).collect();
        Ok(Self {
            spec: spec.clone(),
            grid: *grid,
            u_t: trapezoid(&ratio, grid.dt()),
            tau_limit: trapezoid(&sig2, grid.dt()),
            x: limit.values,
            trend,
            diffusion,
        })
    }

    fn check(&self, traj: &Trajectory) -> Result<()> {
        if traj.grid != self.grid {
            return Err(invalid("trajectory grid differs from the null path grid"));
        }
        Ok(())
    }

    /// `δ_ε = u_T⁻² ∫ ((X−x)/(ε S₀(x)²))² σ(x)² dt`
    pub fn cvm(&self, traj: &Trajectory) -> Result<f64> {
        self.check(traj)?;
        let eps = self.spec.epsilon;
        let f: Vec<f64> = (0..traj.values.len())
            .map(|i| {
                let s = self.trend[i];
                let r = (traj.values[i] - self.x[i]) / (eps * s * s);
                r * r * self.diffusion[i] * self.diffusion[i]
            })
            .collect();
        Ok(trapezoid(&f, self.grid.dt()) / (self.u_t * self.u_t))
    }

    /// `γ_ε = u_T^{-1/2} sup |(X−x)/(ε S₀(x))|`
    pub fn ks(&self, traj: &Trajectory) -> Result<f64> {
        self.check(traj)?;
        let eps = self.spec.epsilon;
        let sup = (0..traj.values.len())
            .map(|i| ((traj.values[i] - self.x[i]) / (eps * self.trend[i])).abs())
            .fold(0.0, f64::max);
        Ok(sup / self.u_t.sqrt())
    }

    fn along_path(&self, traj: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut s = Vec::with_capacity(traj.values.len());
        let mut g = Vec::with_capacity(traj.values.len());
        for &x in &traj.values {
            let v = self.spec.trend.value(x)?;
            if v <= 0.0 {
                return Err(Error::Positivity {
                    what: "trend S0".into(),
                    x,
                    value: v,
                });
            }
            s.push(v);
            g.push(self.spec.diffusion.value(x)?);
        }
        Ok((s, g))
    }

    /// Plug-in C-vM: `S₀`, `σ` evaluated along `X`, numerator still `X − x`.
    pub fn cvm_plugin(&self, traj: &Trajectory) -> Result<f64> {
        self.check(traj)?;
        let eps = self.spec.epsilon;
        let (s, g) = self.along_path(traj)?;
        let ratio: Vec<f64> = s.iter().zip(&g).map(|(s, g)| g * g / (s * s)).collect();
        let u = trapezoid(&ratio, self.grid.dt());
        let f: Vec<f64> = (0..s.len())
            .map(|i| {
                let r = (traj.values[i] - self.x[i]) / (eps * s[i] * s[i]);
                r * r * g[i] * g[i]
            })
            .collect();
        Ok(trapezoid(&f, self.grid.dt()) / (u * u))
    }

    pub fn ks_plugin(&self, traj: &Trajectory) -> Result<f64> {
        self.check(traj)?;
        let eps = self.spec.epsilon;
        let (s, g) = self.along_path(traj)?;
        let ratio: Vec<f64> = s.iter().zip(&g).map(|(s, g)| g * g / (s * s)).collect();
        let u = trapezoid(&ratio, self.grid.dt());
        let sup = (0..s.len())
            .map(|i| ((traj.values[i] - self.x[i]) / (eps * s[i])).abs())
            .fold(0.0, f64::max);
        Ok(sup / u.sqrt())
    }

    /// Integral variant against `X̂_t = x₀ + ∫₀ᵗ S₀(X_s) ds`; also returns
    /// `τ_T = ∫ σ(X)² dt`.
    pub fn cvm_integral(&self, traj: &Trajectory) -> Result<(f64, f64)> {
        self.check(traj)?;
        stat_cvm_integral_parts(traj, &self.spec)
    }

    pub fn degenerate_start(&self, traj: &Trajectory) -> Result<f64> {
        self.check(traj)?;
        stat_degenerate_start(traj, &self.spec)
    }
}

pub fn stat_cvm(traj: &Trajectory, spec: &ModelSpec) -> Result<f64> {
    NullPath::new(spec, &traj.grid)?.cvm(traj)
}

pub fn stat_ks(traj: &Trajectory, spec: &ModelSpec) -> Result<f64> {
    NullPath::new(spec, &traj.grid)?.ks(traj)
}

pub fn stat_cvm_plugin(traj: &Trajectory, spec: &ModelSpec) -> Result<f64> {
    NullPath::new(spec, &traj.grid)?.cvm_plugin(traj)
}

pub fn stat_ks_plugin(traj: &Trajectory, spec: &ModelSpec) -> Result<f64> {
    NullPath::new(spec, &traj.grid)?.ks_plugin(traj)
}

fn stat_cvm_integral_parts(traj: &Trajectory, spec: &ModelSpec) -> Result<(f64, f64)> {
    let dt = traj.grid.dt();
    let eps = spec.epsilon;
    let mut drift = Vec::with_capacity(traj.values.len());
    let mut sig2 = Vec::with_capacity(traj.values.len());
    for &x in &traj.values {
        drift.push(spec.trend.value(x)?);
        let g = spec.diffusion.value(x)?;
        sig2.push(g * g);
    }
    let hat = cumulative_trapezoid(&drift, dt);
    let x0 = traj.values[0];
    let f: Vec<f64> = (0..sig2.len())
        .map(|i| {
            let r = (traj.values[i] - x0 - hat[i]) / eps;
            sig2[i] * r * r
        })
        .collect();
    let tau = trapezoid(&sig2, dt);
    if tau <= 0.0 {
        return Err(Error::Positivity {
            what: "diffusion sigma^2".into(),
            x: x0,
            value: tau,
        });
    }
    Ok((trapezoid(&f, dt) / (tau * tau), tau))
}

/// `δ̂_ε = τ_T⁻² ∫ σ(X)² ((X − X̂)/ε)² dt`
pub fn stat_cvm_integral(traj: &Trajectory, spec: &ModelSpec) -> Result<f64> {
    Ok(stat_cvm_integral_parts(traj, spec)?.0)
}

/// `∫₀ᵀ ((X_t − x₀)/(T ε σ(x₀)))² dt`, for a null with `S₀(x₀) = 0`.
pub fn stat_degenerate_start(traj: &Trajectory, spec: &ModelSpec) -> Result<f64> {
    let sigma0 = spec.diffusion.value(spec.x0)?;
    if sigma0 == 0.0 {
        return Err(Error::Positivity {
            what: "diffusion sigma^2".into(),
            x: spec.x0,
            value: 0.0,
        });
    }
    let scale = traj.grid.horizon * spec.epsilon * sigma0;
    let f: Vec<f64> = traj
        .values
        .iter()
        .map(|x| {
            let r = (x - spec.x0) / scale;
            r * r
        })
        .collect();
    Ok(trapezoid(&f, traj.grid.dt()))
}
