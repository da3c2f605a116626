//! Composite null `S(θ, ·)`, `θ ∈ (β, γ)`: maximum likelihood, Fisher
//! information, the compensator `H_ε(θ)` and the ADF statistic built from
//! the compensated process.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coeff::{CoefficientFn, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::quad::{grid_then_golden, simpson, trapezoid};
use crate::simulate::{rk4_autonomous, rk4_system, TimeGrid, Trajectory};

pub const MLE_GRID_POINTS: usize = 41;
pub const MLE_TOL: f64 = 1e-9;
/// Estimator-process entries before `t = ε^μ` are flagged unreliable.
pub const RELIABILITY_EXPONENT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricModel {
    /// `S(θ, x)`, written with `theta` and `x`.
    pub trend: CoefficientFn,
    pub diffusion: CoefficientFn,
    pub theta_min: f64,
    pub theta_max: f64,
    pub x0: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub epsilon: f64,
}

impl ParametricModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_strs(
        trend: &str,
        diffusion: &str,
        theta_min: f64,
        theta_max: f64,
        x0: f64,
        horizon: f64,
        epsilon: f64,
    ) -> Result<Self> {
        let pm = Self {
            trend: CoefficientFn::parse(trend)?,
            diffusion: CoefficientFn::parse(diffusion)?,
            theta_min,
            theta_max,
            x0,
            horizon,
            epsilon,
        };
        pm.check()?;
        Ok(pm)
    }

    fn check(&self) -> Result<()> {
        if !(self.theta_min < self.theta_max) {
            return Err(invalid("theta range must satisfy theta_min < theta_max"));
        }
        if !(self.epsilon > 0.0) || !(self.horizon > 0.0) {
            return Err(invalid("epsilon and T must be positive"));
        }
        if self.diffusion.uses_theta() {
            return Err(invalid("the diffusion may not depend on theta"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let pm: Self = serde_json::from_str(text)?;
        pm.check()?;
        Ok(pm)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The simple model with `θ` fixed.
    pub fn at(&self, theta: f64) -> Result<ModelSpec> {
        ModelSpec::new(
            self.trend.with_theta(theta),
            self.diffusion.clone(),
            self.x0,
            self.horizon,
            self.epsilon,
        )
    }

    fn contains(&self, theta: f64) -> bool {
        theta >= self.theta_min && theta <= self.theta_max
    }
}

/// Per-trajectory quantities reused across likelihood evaluations.
struct Increments<'a> {
    x: &'a [f64],
    dx: Vec<f64>,
    inv_sig2: Vec<f64>,
    dt: f64,
}

impl<'a> Increments<'a> {
    fn new(traj: &'a Trajectory, pm: &ParametricModel) -> Result<Self> {
        let n = traj.values.len() - 1;
        let x = &traj.values[..n];
        let dx = traj.values.windows(2).map(|w| w[1] - w[0]).collect();
        let inv_sig2 = x
            .iter()
            .map(|&v| {
                let g = pm.diffusion.value(v)?;
                if g == 0.0 {
                    return Err(Error::Positivity {
                        what: "diffusion sigma^2".into(),
                        x: v,
                        value: 0.0,
                    });
                }
                Ok(1.0 / (g * g))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            x,
            dx,
            inv_sig2,
            dt: traj.grid.dt(),
        })
    }

    fn loglik(&self, pm: &ParametricModel, theta: f64) -> Result<f64> {
        let mut acc = 0.0;
        for i in 0..self.x.len() {
            let s = pm.trend.eval(self.x[i], Some(theta))?;
            acc += s * self.inv_sig2[i] * (self.dx[i] - 0.5 * s * self.dt);
        }
        Ok(acc / (pm.epsilon * pm.epsilon))
    }
}

/// Discretised Girsanov log-likelihood
/// `Σ S/(ε²σ²) ΔX − ½ Σ S²/(ε²σ²) Δ`, left end points.
pub fn loglik(traj: &Trajectory, pm: &ParametricModel, theta: f64) -> Result<f64> {
    if !pm.contains(theta) {
        return Err(invalid(format!("theta = {theta} outside [{}, {}]", pm.theta_min, pm.theta_max)));
    }
    Increments::new(traj, pm)?.loglik(pm, theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: f64,
    pub loglik: f64,
    /// `I_T(θ̂)`
    pub fisher: f64,
    pub at_boundary: bool,
    pub trace: Option<Vec<f64>>,
}

/// Grid scan over `Θ` then golden-section refinement to `refine_tol`.
pub fn mle(traj: &Trajectory, pm: &ParametricModel, grid_points: usize, refine_tol: f64) -> Result<MleResult> {
    let inc = Increments::new(traj, pm)?;
    let best = grid_then_golden(
        |th| Ok(-inc.loglik(pm, th)?),
        pm.theta_min,
        pm.theta_max,
        grid_points,
        refine_tol,
    )?;
    Ok(MleResult {
        theta_hat: best.x,
        loglik: -best.value,
        fisher: fisher_info(pm, best.x, &traj.grid)?,
        at_boundary: best.at_boundary,
        trace: None,
    })
}

/// Checks `S(θ, x) = θ h(x)` at a few points and returns `h = ∂S/∂θ`.
fn linear_signal(pm: &ParametricModel) -> Result<CoefficientFn> {
    let mid = 0.5 * (pm.theta_min + pm.theta_max);
    let h = CoefficientFn::from_expr(pm.trend.expr().substitute_theta(1.0), "x");
    for x in [pm.x0, pm.x0 + 0.37, pm.x0 - 0.21, pm.x0 + 1.3] {
        let Ok(hx) = h.value(x) else { continue };
        for th in [pm.theta_min, mid, pm.theta_max] {
            let s = pm.trend.eval(x, Some(th))?;
            if (s - th * hx).abs() > 1e-10 * (1.0 + s.abs()) {
                return Err(invalid("trend is not of the form theta * h(x)"));
            }
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleProcess {
    /// `θ̂_{t_i}`; NaN where the denominator vanishes.
    pub theta: Vec<f64>,
    /// False before `t = ε^μ` or where the estimate is undefined.
    pub reliable: Vec<bool>,
}

/// Running closed-form estimator for `S = θ h(x)`:
/// `θ̂_t = Σ_{t_i<t} h/σ² ΔX / Σ_{t_i<t} h²/σ² Δ`.
pub fn mle_process_linear(traj: &Trajectory, pm: &ParametricModel) -> Result<MleProcess> {
    let h = linear_signal(pm)?;
    let inc = Increments::new(traj, pm)?;
    let start = pm.epsilon.powf(RELIABILITY_EXPONENT);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut theta = vec![f64::NAN];
    let mut reliable = vec![false];
    for i in 0..inc.x.len() {
        let hv = h.value(inc.x[i])?;
        num += hv * inc.inv_sig2[i] * inc.dx[i];
        den += hv * hv * inc.inv_sig2[i] * inc.dt;
        let ok = den != 0.0;
        theta.push(if ok { num / den } else { f64::NAN });
        reliable.push(ok && traj.grid.t(i + 1) >= start);
    }
    Ok(MleProcess { theta, reliable })
}

/// Limit path `x_t(θ)` and its sensitivity `ẋ_t(θ) = ∂x_t/∂θ`, from
/// `ẋ' = S'(θ, x) ẋ + Ṡ(θ, x)`, `ẋ₀ = 0`, integrated jointly by RK4.
pub fn limit_with_sensitivity(pm: &ParametricModel, theta: f64, grid: &TimeGrid) -> Result<(Vec<f64>, Vec<f64>)> {
    let path = rk4_system(
        |_, [x, dx]| {
            let j = pm.trend.jet(x, theta)?;
            Ok([j.value, j.d_dx * dx + j.d_dtheta])
        },
        [pm.x0, 0.0],
        grid,
    )?;
    Ok(path.into_iter().map(|[x, d]| (x, d)).unzip())
}

/// Central finite difference of `x_t(θ)` in `θ`, step `1e-4·(1+|θ|)`.
pub fn sensitivity_fd(pm: &ParametricModel, theta: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    let h = 1e-4 * (1.0 + theta.abs());
    let path = |th: f64| rk4_autonomous(|x| pm.trend.eval(x, Some(th)), pm.x0, grid);
    let up = path(theta + h)?;
    let down = path(theta - h)?;
    Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// `I_T(θ) = ∫₀ᵀ (Ṡ(θ, x_t(θ))/σ(x_t(θ)))² dt`
pub fn fisher_info(pm: &ParametricModel, theta: f64, grid: &TimeGrid) -> Result<f64> {
    let x = rk4_autonomous(|x| pm.trend.eval(x, Some(theta)), pm.x0, grid)?;
    let f = x
        .iter()
        .map(|&v| {
            let ds = pm.trend.d_dtheta(v, theta)?;
            let g = pm.diffusion.value(v)?;
            Ok((ds / g).powi(2))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(&f, grid.dt()))
}

/// `H_ε(θ)` without a stochastic integral:
/// `∫_{x₀}^{X_T} Ṡ/σ² dy − ε² ∫ (Ṡ'σ − 2Ṡσ')/(2σ) dt − ∫ Ṡ S/σ² dt`.
pub fn h_compensator(traj: &Trajectory, pm: &ParametricModel, theta: f64) -> Result<f64> {
    let x0 = traj.values[0];
    let xt = traj.terminal();
    let span = (xt - x0).abs();
    let intervals = ((span / 1e-3).ceil() as usize).clamp(64, 20_000);
    let space = simpson(
        |y| {
            let g = pm.diffusion.value(y)?;
            Ok(pm.trend.d_dtheta(y, theta)? / (g * g))
        },
        x0,
        xt,
        intervals,
    )?;
    let mut ito = Vec::with_capacity(traj.values.len());
    let mut drift = Vec::with_capacity(traj.values.len());
    for &x in &traj.values {
        let j = pm.trend.jet(x, theta)?;
        let g = pm.diffusion.value(x)?;
        let dg = pm.diffusion.d_dx(x, None)?;
        ito.push((j.d2_dx_dtheta * g - 2.0 * j.d_dtheta * dg) / (2.0 * g));
        drift.push(j.d_dtheta * j.value / (g * g));
    }
    let dt = traj.grid.dt();
    Ok(space - pm.epsilon * pm.epsilon * trapezoid(&ito, dt) - trapezoid(&drift, dt))
}

/// The same quantity as an Itô sum `Σ Ṡ/σ² (ΔX − S Δ)`.
pub fn h_compensator_ito_sum(traj: &Trajectory, pm: &ParametricModel, theta: f64) -> Result<f64> {
    let dt = traj.grid.dt();
    let mut acc = 0.0;
    for w in traj.values.windows(2) {
        let j = pm.trend.jet(w[0], theta)?;
        let g = pm.diffusion.value(w[0])?;
        acc += j.d_dtheta / (g * g) * (w[1] - w[0] - j.value * dt);
    }
    Ok(acc)
}

/// `Y_ε(t, θ) = (X_t − x_t(θ))/ε + I_T(θ)⁻¹ ẋ_t(θ) H`.
pub fn compensated_process_with(
    traj: &Trajectory,
    pm: &ParametricModel,
    theta: f64,
    fisher: f64,
    compensator: f64,
) -> Result<Vec<f64>> {
    let (x, dx) = limit_with_sensitivity(pm, theta, &traj.grid)?;
    let k = if fisher > 0.0 { compensator / fisher } else { 0.0 };
    Ok((0..x.len())
        .map(|i| (traj.values[i] - x[i]) / pm.epsilon + dx[i] * k)
        .collect())
}

pub fn compensated_process(traj: &Trajectory, pm: &ParametricModel, mle_res: &MleResult) -> Result<Vec<f64>> {
    let h = h_compensator(traj, pm, mle_res.theta_hat)?;
    compensated_process_with(traj, pm, mle_res.theta_hat, mle_res.fisher, h)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdfResult {
    pub value: f64,
    pub theta_hat: f64,
    pub fisher: f64,
    pub compensator: f64,
    pub at_boundary: bool,
}

/// `[∫ σ(X)²/S(θ̂,X)² dt]⁻² ∫ Y_ε(t, θ̂)² σ(X)²/S(θ̂,X)⁴ dt`
pub fn adf_statistic_for(traj: &Trajectory, pm: &ParametricModel, y: &[f64], theta: f64) -> Result<f64> {
    let mut norm = Vec::with_capacity(y.len());
    let mut body = Vec::with_capacity(y.len());
    for (i, &x) in traj.values.iter().enumerate() {
        let s = pm.trend.eval(x, Some(theta))?;
        if s <= 0.0 {
            return Err(Error::Positivity {
                what: "trend S(theta_hat, x)".into(),
                x,
                value: s,
            });
        }
        let g2 = pm.diffusion.value(x)?.powi(2);
        let r = g2 / (s * s);
        norm.push(r);
        body.push(y[i] * y[i] * r / (s * s));
    }
    let dt = traj.grid.dt();
    let u = trapezoid(&norm, dt);
    Ok(trapezoid(&body, dt) / (u * u))
}

pub fn adf_details(traj: &Trajectory, pm: &ParametricModel) -> Result<AdfResult> {
    let fit = mle(traj, pm, MLE_GRID_POINTS, MLE_TOL)?;
    let h = h_compensator(traj, pm, fit.theta_hat)?;
    let y = compensated_process_with(traj, pm, fit.theta_hat, fit.fisher, h)?;
    Ok(AdfResult {
        value: adf_statistic_for(traj, pm, &y, fit.theta_hat)?,
        theta_hat: fit.theta_hat,
        fisher: fit.fisher,
        compensator: h,
        at_boundary: fit.at_boundary,
    })
}

pub fn stat_adf(traj: &Trajectory, pm: &ParametricModel) -> Result<f64> {
    Ok(adf_details(traj, pm)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlProjection {
    pub theta_star: f64,
    /// `∫ ((S(θ*, x_t) − S(x_t))/σ(x_t))² dt` along the true limit path.
    pub distance: f64,
    pub at_boundary: bool,
}

/// `θ* = argmin_θ ∫₀ᵀ ((S(θ, x_t) − S_true(x_t))/σ(x_t))² dt` where `x_t`
/// solves `ẋ = S_true(x)`.
pub fn kl_projection(pm: &ParametricModel, s_true: &CoefficientFn, grid: &TimeGrid) -> Result<KlProjection> {
    let x = rk4_autonomous(|v| s_true.value(v), pm.x0, grid)?;
    let truth = x.iter().map(|&v| s_true.value(v)).collect::<Result<Vec<_>>>()?;
    let sig = x.iter().map(|&v| pm.diffusion.value(v)).collect::<Result<Vec<_>>>()?;
    let dt = grid.dt();
    let objective = |th: f64| -> Result<f64> {
        let f = (0..x.len())
            .map(|i| Ok(((pm.trend.eval(x[i], Some(th))? - truth[i]) / sig[i]).powi(2)))
            .collect::<Result<Vec<_>>>()?;
        Ok(trapezoid(&f, dt))
    };
    let best = grid_then_golden(objective, pm.theta_min, pm.theta_max, MLE_GRID_POINTS, MLE_TOL)?;
    Ok(KlProjection {
        theta_star: best.x,
        distance: best.value,
        at_boundary: best.at_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::simulate::simulate_sde_stream;
    use approx::assert_relative_eq;

    fn constant_family() -> ParametricModel {
        ParametricModel::from_strs("theta", "1", 0.0, 3.0, 0.0, 1.0, 0.1).unwrap()
    }

    #[test]
    fn quadratic_loglik_argmax() {
        let pm = constant_family();
        let grid = TimeGrid::new(1.0, 500).unwrap();
        let tr = simulate_sde_stream(&pm.at(1.2).unwrap(), &grid, StreamKey::new(1, 0)).unwrap();
        let fit = mle(&tr, &pm, 31, 1e-12).unwrap();
        assert!((fit.theta_hat - (tr.terminal() - tr.x0()) / 1.0).abs() < 1e-6);
        assert!(!fit.at_boundary);
        assert_relative_eq!(fit.fisher, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flat_path_prefers_small_drift() {
        let pm = ParametricModel::from_strs("theta", "1", 0.5, 2.0, 0.0, 1.0, 0.1).unwrap();
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let tr = Trajectory::new(grid, vec![0.0; 11]).unwrap();
        let fit = mle(&tr, &pm, 11, 1e-10).unwrap();
        assert!(fit.at_boundary);
        assert!((fit.theta_hat - 0.5).abs() < 1e-8);
        assert_relative_eq!(fit.loglik, -0.5 * 0.25 / 0.01, max_relative = 1e-8);
    }

    #[test]
    fn epsilon_scales_loglik() {
        let pm = constant_family();
        let mut pm2 = pm.clone();
        pm2.epsilon = 0.2;
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let tr = simulate_sde_stream(&pm.at(1.0).unwrap(), &grid, StreamKey::new(2, 0)).unwrap();
        let a = loglik(&tr, &pm, 1.3).unwrap();
        let b = loglik(&tr, &pm2, 1.3).unwrap();
        assert_relative_eq!(a, 4.0 * b, max_relative = 1e-12);
    }

    #[test]
    fn fisher_closed_forms() {
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        let pm = ParametricModel::from_strs("theta*x", "1", 0.5, 2.0, 1.0, 1.0, 0.1).unwrap();
        let th: f64 = 1.3;
        let want = ((2.0 * th).exp() - 1.0) / (2.0 * th);
        assert_relative_eq!(fisher_info(&pm, th, &grid).unwrap(), want, max_relative = 1e-6);
        let pm2 = ParametricModel::from_strs("theta*x", "2", 0.5, 2.0, 1.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(fisher_info(&pm2, th, &grid).unwrap(), want / 4.0, max_relative = 1e-6);
    }

    #[test]
    fn sensitivity_two_ways() {
        let pm = ParametricModel::from_strs("theta*(1+0.3*sin(x))+0.5", "1", 0.5, 2.0, 0.2, 1.0, 0.1).unwrap();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let (_, ode) = limit_with_sensitivity(&pm, 1.1, &grid).unwrap();
        let fd = sensitivity_fd(&pm, 1.1, &grid).unwrap();
        for (a, b) in ode.iter().zip(&fd).skip(1) {
            assert!((a - b).abs() <= 1e-5 * b.abs(), "{a} {b}");
        }
    }

    #[test]
    fn compensator_constant_drift() {
        // S = θ, σ = 1: H = X_T − x₀ − θT
        let pm = constant_family();
        let grid = TimeGrid::new(1.0, 200).unwrap();
        let tr = simulate_sde_stream(&pm.at(1.0).unwrap(), &grid, StreamKey::new(3, 0)).unwrap();
        let h = h_compensator(&tr, &pm, 0.8).unwrap();
        assert_relative_eq!(h, tr.terminal() - tr.x0() - 0.8, epsilon = 1e-10);
        assert_relative_eq!(h, h_compensator_ito_sum(&tr, &pm, 0.8).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn switch_off_compensator() {
        let pm = ParametricModel::from_strs("theta*x", "1", 0.5, 2.0, 1.0, 1.0, 0.05).unwrap();
        let grid = TimeGrid::new(1.0, 300).unwrap();
        let tr = simulate_sde_stream(&pm.at(1.0).unwrap(), &grid, StreamKey::new(4, 0)).unwrap();
        let y = compensated_process_with(&tr, &pm, 1.0, 1.0, 0.0).unwrap();
        let (x, _) = limit_with_sensitivity(&pm, 1.0, &grid).unwrap();
        for i in 0..y.len() {
            assert_relative_eq!(y[i], (tr.values[i] - x[i]) / 0.05, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_process_endpoint_matches_mle() {
        let pm = ParametricModel::from_strs("theta*x", "1", 0.5, 2.0, 1.0, 1.0, 0.05).unwrap();
        let grid = TimeGrid::new(1.0, 400).unwrap();
        let tr = simulate_sde_stream(&pm.at(1.0).unwrap(), &grid, StreamKey::new(5, 0)).unwrap();
        let proc_ = mle_process_linear(&tr, &pm).unwrap();
        let fit = mle(&tr, &pm, 41, 1e-12).unwrap();
        assert!((proc_.theta[400] - fit.theta_hat).abs() < 1e-6);
        assert!(proc_.theta[0].is_nan());
        assert!(!proc_.reliable[10]);
        assert!(proc_.reliable[400]);
        let nonlinear = ParametricModel::from_strs("theta^2*x", "1", 0.5, 2.0, 1.0, 1.0, 0.05).unwrap();
        assert!(mle_process_linear(&tr, &nonlinear).is_err());
    }

    #[test]
    fn constant_signal_process() {
        let pm = constant_family();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let tr = simulate_sde_stream(&pm.at(1.0).unwrap(), &grid, StreamKey::new(6, 0)).unwrap();
        let p = mle_process_linear(&tr, &pm).unwrap();
        for i in 1..=100 {
            assert_relative_eq!(p.theta[i], (tr.values[i] - tr.x0()) / grid.t(i), max_relative = 1e-10);
        }
    }

    #[test]
    fn kl_projection_cases() {
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        let pm = ParametricModel::from_strs("theta*x", "1", 0.5, 2.0, 1.0, 1.0, 0.05).unwrap();
        let inside = kl_projection(&pm, &CoefficientFn::parse("1.3*x").unwrap(), &grid).unwrap();
        assert!((inside.theta_star - 1.3).abs() < 1e-6);
        assert!(inside.distance < 1e-12);
        let pm = ParametricModel::from_strs("theta", "1", 0.5, 3.0, 1.0, 1.0, 0.05).unwrap();
        let p = kl_projection(&pm, &CoefficientFn::parse("x").unwrap(), &grid).unwrap();
        // least squares fit of a constant to e^t on [0, 1]
        assert!((p.theta_star - (std::f64::consts::E - 1.0)).abs() < 1e-6);
        assert!(!p.at_boundary);
    }

    #[test]
    fn zero_compensated_process_gives_zero() {
        let pm = ParametricModel::from_strs("theta*x", "1", 0.5, 2.0, 1.0, 1.0, 0.05).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let tr = Trajectory::new(grid, (0..=50).map(|i| grid.t(i).exp()).collect()).unwrap();
        assert_eq!(adf_statistic_for(&tr, &pm, &[0.0; 51], 1.0).unwrap(), 0.0);
    }
}
