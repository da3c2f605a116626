use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CoefficientFn;
use crate::error::{invalid, Error, Result};
use crate::simulate::{solve_limit_ode, TimeGrid};

/// `dX = S₀(X) dt + ε σ(X) dW`, `X₀ = x0`, on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub trend: CoefficientFn,
    pub diffusion: CoefficientFn,
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub epsilon: f64,
}

impl ModelSpec {
    pub fn new(
        trend: CoefficientFn,
        diffusion: CoefficientFn,
        x0: f64,
        horizon: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let spec = Self {
            trend,
            diffusion,
            x0,
            horizon,
            epsilon,
        };
        spec.check_scalars()?;
        Ok(spec)
    }

    /// Convenience constructor from DSL strings.
    pub fn from_strs(trend: &str, diffusion: &str, x0: f64, horizon: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            CoefficientFn::parse(trend)?,
            CoefficientFn::parse(diffusion)?,
            x0,
            horizon,
            epsilon,
        )
    }

    fn check_scalars(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(format!("T must be positive, got {}", self.horizon)));
        }
        if !self.x0.is_finite() {
            return Err(invalid("x0 must be finite"));
        }
        if self.trend.uses_theta() || self.diffusion.uses_theta() {
            return Err(invalid("a simple-hypothesis model may not reference theta"));
        }
        Ok(())
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        let mut s = self.clone();
        s.epsilon = epsilon;
        s.check_scalars()?;
        Ok(s)
    }

    pub fn with_trend(&self, trend: CoefficientFn) -> Self {
        let mut s = self.clone();
        s.trend = trend;
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        spec.check_scalars()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    /// Short content hash identifying the model in trajectory metadata.
    pub fn content_hash(&self) -> String {
        let text = format!(
            "{}|{}|{:?}|{:?}|{:?}",
            self.trend.canonical(),
            self.diffusion.canonical(),
            self.x0,
            self.horizon,
            self.epsilon
        );
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Sampled range `[min, max]` of the limit path.
    pub range: (f64, f64),
    pub min_trend: f64,
    pub argmin_trend: f64,
    pub min_diffusion_sq: f64,
    pub argmin_diffusion_sq: f64,
    /// Finite-difference estimate of `L` in `|ΔS₀| + |Δσ| ≤ L |Δx|`.
    pub lipschitz: f64,
    pub warnings: Vec<String>,
}

/// Lipschitz estimates with `L·T` above this draw a warning.
const LIPSCHITZ_WARN: f64 = 50.0;
/// `σ²` at or below this counts as vanishing.
const DIFFUSION_FLOOR: f64 = 1e-20;

pub fn validate_model(spec: &ModelSpec, grid_points: usize) -> Result<ValidationReport> {
    validate_model_with_margin(spec, grid_points, 0.0)
}

/// Solve the limit ODE, sample `[x₀, x_T]` widened by `margin` on both sides,
/// and check positivity of `S₀` and `σ²`.
pub fn validate_model_with_margin(
    spec: &ModelSpec,
    grid_points: usize,
    margin: f64,
) -> Result<ValidationReport> {
    if grid_points < 2 {
        return Err(invalid("validate_model needs at least 2 grid points"));
    }
    if margin < 0.0 {
        return Err(invalid("margin must be non-negative"));
    }
    let path = solve_limit_ode(spec, &TimeGrid::new(spec.horizon, 10_000)?)?;
    let x_t = *path.values.last().unwrap();
    let lo = spec.x0.min(x_t) - margin;
    let hi = spec.x0.max(x_t) + margin;

    let mut report = ValidationReport {
        range: (lo, hi),
        min_trend: f64::INFINITY,
        argmin_trend: lo,
        min_diffusion_sq: f64::INFINITY,
        argmin_diffusion_sq: lo,
        lipschitz: 0.0,
        warnings: Vec::new(),
    };
    let step = (hi - lo) / (grid_points - 1) as f64;
    let mut prev: Option<(f64, f64, f64)> = None;
    for k in 0..grid_points {
        let x = lo + step * k as f64;
        let s = spec.trend.value(x)?;
        let sig = spec.diffusion.value(x)?;
        if s < report.min_trend {
            report.min_trend = s;
            report.argmin_trend = x;
        }
        if sig * sig < report.min_diffusion_sq {
            report.min_diffusion_sq = sig * sig;
            report.argmin_diffusion_sq = x;
        }
        if let Some((px, ps, psig)) = prev {
            if x > px {
                let l = ((s - ps).abs() + (sig - psig).abs()) / (x - px);
                report.lipschitz = report.lipschitz.max(l);
            }
        }
        prev = Some((x, s, sig));
    }

    if report.min_trend <= 0.0 {
        return Err(Error::Positivity {
            what: "trend S0".into(),
            x: report.argmin_trend,
            value: report.min_trend,
        });
    }
    if report.min_diffusion_sq <= DIFFUSION_FLOOR {
        return Err(Error::Positivity {
            what: "diffusion sigma^2".into(),
            x: report.argmin_diffusion_sq,
            value: report.min_diffusion_sq,
        });
    }
    if report.lipschitz * spec.horizon > LIPSCHITZ_WARN {
        report.warnings.push(format!(
            "Lipschitz estimate {:.3} is large for T = {}",
            report.lipschitz, spec.horizon
        ));
    }
    Ok(report)
}
