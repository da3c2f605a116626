//! Monte Carlo power under the alternative families, the limit power of the
//! C-vM test and the oscillating degenerate family.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chisq::{chisq_threshold, fourier_coeffs, stat_chisq, stat_chisq_weighted, BasisSpec};
use crate::coeff::{oscillating_signal, CoefficientFn, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::gof_core::{stat_degenerate_start, NullPath, Statistic};
use crate::localtime::{local_time_occupation, stat_localtime, SpaceGrid};
use crate::mc::try_replicate;
use crate::quad::{simpson, trapezoid, Pchip};
use crate::refdist::{Distribution, QuantileTable};
use crate::rng::{tag, NoiseStream};
use crate::simulate::{simulate_alternative, solve_limit_ode, LimitPath, Scaling, TimeGrid, Trajectory};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeSpec {
    pub h: CoefficientFn,
    pub scaling: Scaling,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl AlternativeSpec {
    pub fn new(h: CoefficientFn, scaling: Scaling) -> Self {
        Self {
            h,
            scaling,
            contrast: None,
            rho: None,
        }
    }

    pub fn null() -> Self {
        Self::new(CoefficientFn::constant(0.0), Scaling::Eq7)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("alternative serializes")
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            h: self.h.scaled(k),
            ..self.clone()
        }
    }
}

/// Discretisation choices shared by every simple-null statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSettings {
    pub n_steps: usize,
    /// Number of Fourier coefficients is `2m − 1`.
    pub chisq_m: usize,
    pub chisq_k: u32,
    pub localtime_bins: usize,
}

impl Default for TestSettings {
    fn default() -> Self {
        Self {
            n_steps: 2000,
            chisq_m: 5,
            chisq_k: 2,
            localtime_bins: 500,
        }
    }
}

/// A simple-null statistic with everything that depends only on the null
/// model precomputed.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub statistic: Statistic,
    pub spec: ModelSpec,
    pub grid: TimeGrid,
    pub settings: TestSettings,
    null: Option<NullPath>,
    limit: Option<LimitPath>,
    space: Option<SpaceGrid>,
    basis: Option<BasisSpec>,
}

impl Evaluator {
    pub fn new(statistic: Statistic, spec: &ModelSpec, settings: TestSettings) -> Result<Self> {
        let grid = TimeGrid::new(spec.horizon, settings.n_steps)?;
        let mut ev = Self {
            statistic,
            spec: spec.clone(),
            grid,
            settings,
            null: None,
            limit: None,
            space: None,
            basis: None,
        };
        match statistic {
            Statistic::Cvm | Statistic::Ks | Statistic::CvmPlugin | Statistic::KsPlugin => {
                ev.null = Some(NullPath::new(spec, &grid)?);
            }
            Statistic::CvmIntegral | Statistic::Degenerate => {}
            Statistic::Chisq | Statistic::ChisqWeighted => {
                ev.basis = Some(BasisSpec::new(settings.chisq_m, spec.horizon)?);
            }
            Statistic::Localtime => {
                let limit = solve_limit_ode(spec, &grid)?;
                ev.space = Some(SpaceGrid::spanning(&limit, settings.localtime_bins)?);
                ev.limit = Some(limit);
            }
            Statistic::Kalman | Statistic::Adf => {
                return Err(invalid(format!(
                    "`{}` has its own null model and is not a simple-null statistic",
                    statistic.name()
                )))
            }
        }
        Ok(ev)
    }

    pub fn eval(&self, traj: &Trajectory) -> Result<f64> {
        if traj.grid != self.grid {
            return Err(invalid("trajectory grid differs from the evaluator grid"));
        }
        let null = || self.null.as_ref().expect("null path");
        match self.statistic {
            Statistic::Cvm => null().cvm(traj),
            Statistic::Ks => null().ks(traj),
            Statistic::CvmPlugin => null().cvm_plugin(traj),
            Statistic::KsPlugin => null().ks_plugin(traj),
            Statistic::CvmIntegral => crate::gof_core::stat_cvm_integral(traj, &self.spec),
            Statistic::Degenerate => stat_degenerate_start(traj, &self.spec),
            Statistic::Chisq => Ok(stat_chisq(&fourier_coeffs(traj, &self.spec, self.basis.as_ref().unwrap())?)),
            Statistic::ChisqWeighted => stat_chisq_weighted(
                &fourier_coeffs(traj, &self.spec, self.basis.as_ref().unwrap())?,
                self.settings.chisq_k,
            ),
            Statistic::Localtime => {
                let space = self.space.as_ref().unwrap();
                let lt = local_time_occupation(traj, &self.spec, space, 0.5 * space.width())?;
                stat_localtime(&lt, &self.spec, self.limit.as_ref().unwrap())
            }
            Statistic::Kalman | Statistic::Adf => unreachable!("rejected in new"),
        }
    }

    /// Rejection threshold at level `alpha`. The table must be for the
    /// statistic's limit law; the unweighted chi-square statistic uses the
    /// exact `χ²` quantile while `m ≤ 100`.
    pub fn threshold(&self, table: &QuantileTable, alpha: f64) -> Result<f64> {
        check_table(self.statistic, table)?;
        match self.statistic {
            Statistic::Chisq => chisq_threshold(self.settings.chisq_m, alpha),
            _ => table.critical_value(alpha),
        }
    }
}

pub fn check_table(statistic: Statistic, table: &QuantileTable) -> Result<()> {
    let want = statistic.limit_law();
    if table.distribution != want {
        return Err(Error::TableMismatch {
            expected: want.name().into(),
            found: table.distribution.name().into(),
        });
    }
    Ok(())
}

/// Statistic values on `reps` paths of the alternative, replication `k` on
/// stream `(seed, k)`.
pub fn statistic_samples(ev: &Evaluator, alt: &AlternativeSpec, reps: usize, seed: u64) -> Result<Vec<f64>> {
    try_replicate(reps, seed, |key| {
        let traj = simulate_alternative(&ev.spec, &alt.h, &ev.grid, key, alt.scaling)?;
        ev.eval(&traj)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub power: f64,
    pub se: f64,
    pub reps: usize,
}

pub fn rejection_rate(values: &[f64], threshold: f64) -> PowerEstimate {
    let hits = values.iter().filter(|&&v| v > threshold).count();
    let (power, se) = stats::proportion(hits, values.len());
    PowerEstimate {
        power,
        se,
        reps: values.len(),
    }
}

/// One rate per threshold, all from the same sample.
pub fn rejection_rates(values: &[f64], thresholds: &[f64]) -> Vec<PowerEstimate> {
    thresholds.iter().map(|&c| rejection_rate(values, c)).collect()
}

pub fn estimate_power(
    test: Statistic,
    null_spec: &ModelSpec,
    alt: &AlternativeSpec,
    table: &QuantileTable,
    alpha: f64,
    reps: usize,
    seed: u64,
    settings: TestSettings,
) -> Result<PowerEstimate> {
    check_table(test, table)?;
    let ev = Evaluator::new(test, null_spec, settings)?;
    let c = ev.threshold(table, alpha)?;
    Ok(rejection_rate(&statistic_samples(&ev, alt, reps, seed)?, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub test_name: String,
    pub x_axis: Vec<f64>,
    pub power: Vec<f64>,
    pub se: Vec<f64>,
    pub reps: usize,
}

impl PowerCurve {
    fn from_points(test: Statistic, x: &[f64], points: Vec<PowerEstimate>, reps: usize) -> Self {
        Self {
            test_name: test.name().into(),
            x_axis: x.to_vec(),
            power: points.iter().map(|p| p.power).collect(),
            se: points.iter().map(|p| p.se).collect(),
            reps,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,power,se\n");
        for i in 0..self.x_axis.len() {
            s.push_str(&format!("{},{},{}\n", self.x_axis[i], self.power[i], self.se[i]));
        }
        s
    }
}

/// Consistency view: fixed alternative, varying `ε`.
#[allow(clippy::too_many_arguments)]
pub fn power_curve_eps(
    test: Statistic,
    null_spec: &ModelSpec,
    alt: &AlternativeSpec,
    table: &QuantileTable,
    alpha: f64,
    eps_grid: &[f64],
    reps: usize,
    seed: u64,
    settings: TestSettings,
) -> Result<PowerCurve> {
    let points = eps_grid
        .iter()
        .map(|&e| estimate_power(test, &null_spec.with_epsilon(e)?, alt, table, alpha, reps, seed, settings))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerCurve::from_points(test, eps_grid, points, reps))
}

/// Local view: fixed `ε`, signal `k·h` for each `k` in `scales`.
#[allow(clippy::too_many_arguments)]
pub fn power_curve_scale(
    test: Statistic,
    null_spec: &ModelSpec,
    alt: &AlternativeSpec,
    table: &QuantileTable,
    alpha: f64,
    scales: &[f64],
    reps: usize,
    seed: u64,
    settings: TestSettings,
) -> Result<PowerCurve> {
    let ev = Evaluator::new(test, null_spec, settings)?;
    let c = ev.threshold(table, alpha)?;
    let points = scales
        .iter()
        .map(|&k| Ok(rejection_rate(&statistic_samples(&ev, &alt.scaled(k), reps, seed)?, c)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PowerCurve::from_points(test, scales, points, reps))
}

/// `u(x) = ∫_{x₀}^{x} σ²/S₀³ dy`, tabulated on `[x₀, x_T]`, and the limit
/// signal `h_*(s) = u_T^{1/2} h(x(u_T s))` on `[0, 1]`, with the inverse
/// `x(u)` by monotone cubic interpolation.
#[derive(Debug, Clone)]
pub struct HStar {
    pub u_t: f64,
    inverse: Pchip,
    h: CoefficientFn,
}

impl HStar {
    pub fn new(spec: &ModelSpec, h: &CoefficientFn, grid: &TimeGrid) -> Result<Self> {
        let limit = solve_limit_ode(spec, grid)?;
        let (a, b) = (spec.x0, limit.terminal());
        if !(b > a) {
            return Err(invalid("the limit path must increase for the time change"));
        }
        const NODES: usize = 400;
        let xs: Vec<f64> = (0..=NODES).map(|k| a + (b - a) * k as f64 / NODES as f64).collect();
        let mut us = vec![0.0];
        for w in xs.windows(2) {
            let piece = simpson(|y| time_change_density(spec, y), w[0], w[1], 8)?;
            us.push(us.last().unwrap() + piece);
        }
        Ok(Self {
            u_t: *us.last().unwrap(),
            inverse: Pchip::new(us, xs)?,
            h: h.clone(),
        })
    }

    /// `x(u)`
    pub fn state_at(&self, u: f64) -> f64 {
        self.inverse.eval(u)
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        Ok(self.u_t.sqrt() * self.h.value(self.state_at(self.u_t * s))?)
    }

    /// `∫₀¹ h_*(s)² ds` by Simpson on 2000 intervals.
    pub fn norm_sq(&self) -> Result<f64> {
        simpson(|s| Ok(self.eval(s)?.powi(2)), 0.0, 1.0, 2000)
    }
}

fn time_change_density(spec: &ModelSpec, y: f64) -> Result<f64> {
    let s = spec.trend.value(y)?;
    if s <= 0.0 {
        return Err(Error::Positivity {
            what: "trend S0".into(),
            x: y,
            value: s,
        });
    }
    Ok(spec.diffusion.value(y)?.powi(2) / (s * s * s))
}

/// `∫_{x₀}^{x_T} h² σ²/S₀³ dx`
pub fn signal_norm_sq(spec: &ModelSpec, h: &CoefficientFn, grid: &TimeGrid) -> Result<f64> {
    let xt = solve_limit_ode(spec, grid)?.terminal();
    simpson(
        |y| Ok(h.value(y)?.powi(2) * time_change_density(spec, y)?),
        spec.x0,
        xt,
        4000,
    )
}

/// `P{∫₀¹ (∫₀ᵛ h_*(s) ds + w_v)² dv > c}`, Brownian paths on `n_steps`
/// steps from stream `(seed, k)`.
pub fn limit_power_cvm<F>(h_star: F, critical_value: f64, reps: usize, n_steps: usize, seed: u64) -> Result<PowerEstimate>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if n_steps == 0 {
        return Err(invalid("n_steps must be positive"));
    }
    let dv = 1.0 / n_steps as f64;
    let hv = (0..=n_steps).map(|k| h_star(k as f64 * dv)).collect::<Result<Vec<_>>>()?;
    let drift = crate::quad::cumulative_trapezoid(&hv, dv);
    let values = try_replicate(reps, seed, |key| {
        let mut noise = NoiseStream::new(key, tag::SIGNAL);
        let sd = dv.sqrt();
        let mut w = 0.0;
        let mut f = Vec::with_capacity(n_steps + 1);
        f.push(drift[0] * drift[0]);
        for k in 1..=n_steps {
            w += sd * noise.normal();
            let y = drift[k] + w;
            f.push(y * y);
        }
        Ok(trapezoid(&f, dv))
    })?;
    Ok(rejection_rate(&values, critical_value))
}

/// `c` fixing the contrast at `r`: `c = 2r / (ε √∫_{x₀}^{x_T} S₀/σ² dx)`.
pub fn contrast_c(spec: &ModelSpec, r: f64, grid: &TimeGrid) -> Result<f64> {
    let xt = solve_limit_ode(spec, grid)?.terminal();
    let k = simpson(
        |y| Ok(spec.trend.value(y)? / spec.diffusion.value(y)?.powi(2)),
        spec.x0,
        xt,
        4000,
    )?;
    if !(k > 0.0) {
        return Err(invalid("contrast integral must be positive"));
    }
    Ok(2.0 * r / (spec.epsilon * k.sqrt()))
}

/// `h_n(x) = c (S₀²/σ²) cos(n (x − x₀))` under the `eq7` scaling, so the
/// drift becomes `S₀ + ε c S₀ cos(n (x − x₀))`.
pub fn degenerate_family(spec: &ModelSpec, n: u32, c: f64) -> Result<AlternativeSpec> {
    if !(c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    Ok(AlternativeSpec {
        h: oscillating_signal(&spec.trend, &spec.diffusion, c, n as f64, spec.x0),
        scaling: Scaling::Eq7,
        contrast: Some(0.5 * c * spec.epsilon),
        rho: None,
    })
}

/// Table check helper for callers holding a distribution rather than a
/// statistic.
pub fn table_for(statistic: Statistic) -> Distribution {
    statistic.limit_law()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit() -> ModelSpec {
        ModelSpec::from_strs("1", "1", 0.0, 1.0, 0.05).unwrap()
    }

    #[test]
    fn hstar_identity_and_norms() {
        let spec = ModelSpec::from_strs("2+sin(x)", "0.5+0.1*x^2", 0.0, 1.0, 0.05).unwrap();
        let grid = TimeGrid::new(1.0, 2000).unwrap();
        let h = CoefficientFn::parse("1+x").unwrap();
        let hs = HStar::new(&spec, &h, &grid).unwrap();
        let direct = signal_norm_sq(&spec, &h, &grid).unwrap();
        assert_relative_eq!(hs.norm_sq().unwrap(), direct, max_relative = 1e-4);
        assert_relative_eq!(hs.state_at(0.0), 0.0, epsilon = 1e-12);
        let xt = solve_limit_ode(&spec, &grid).unwrap().terminal();
        assert_relative_eq!(hs.state_at(hs.u_t), xt, epsilon = 1e-9);
    }

    #[test]
    fn unit_model_hstar_is_h() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let hs = HStar::new(&unit(), &CoefficientFn::parse("x").unwrap(), &grid).unwrap();
        assert_relative_eq!(hs.u_t, 1.0, epsilon = 1e-10);
        assert_relative_eq!(hs.eval(0.3).unwrap(), 0.3, epsilon = 1e-8);
    }

    #[test]
    fn degenerate_norm_stabilises() {
        let spec = unit();
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        let c = 3.0;
        let want = 0.5 * c * c;
        let a = degenerate_family(&spec, 100, c).unwrap();
        let got = signal_norm_sq(&spec, &a.h, &grid).unwrap();
        assert!((got - want).abs() / want < 0.05, "{got}");
        let flat = degenerate_family(&spec, 0, c).unwrap();
        assert_relative_eq!(signal_norm_sq(&spec, &flat.h, &grid).unwrap(), c * c, max_relative = 1e-9);
    }

    #[test]
    fn contrast_constant_model() {
        let grid = TimeGrid::new(1.0, 1000).unwrap();
        assert_relative_eq!(contrast_c(&unit(), 0.1, &grid).unwrap(), 4.0, max_relative = 1e-9);
    }

    #[test]
    fn table_mismatch_is_an_error() {
        let t = QuantileTable::from_values(Distribution::SupAbsWiener, vec![0.05], vec![2.24]).unwrap();
        let r = estimate_power(
            Statistic::Cvm,
            &unit(),
            &AlternativeSpec::null(),
            &t,
            0.05,
            10,
            1,
            TestSettings::default(),
        );
        assert!(matches!(r, Err(Error::TableMismatch { .. })));
    }

    #[test]
    fn non_simple_statistics_rejected() {
        assert!(Evaluator::new(Statistic::Kalman, &unit(), TestSettings::default()).is_err());
        assert!(Evaluator::new(Statistic::Adf, &unit(), TestSettings::default()).is_err());
    }

    #[test]
    fn threshold_monotone_per_sample() {
        let ev = Evaluator::new(
            Statistic::Cvm,
            &unit(),
            TestSettings {
                n_steps: 200,
                ..Default::default()
            },
        )
        .unwrap();
        let v = statistic_samples(&ev, &AlternativeSpec::new(CoefficientFn::constant(1.0), Scaling::Eq7), 200, 3)
            .unwrap();
        let r = rejection_rates(&v, &[1.0, 0.5, 0.3]);
        assert!(r[0].power <= r[1].power && r[1].power <= r[2].power);
    }

    #[test]
    fn zero_signal_limit_power_is_size() {
        let crit = 0.0;
        let p = limit_power_cvm(|_| Ok(0.0), crit, 50, 100, 1).unwrap();
        assert_eq!(p.power, 1.0);
        let p = limit_power_cvm(|_| Ok(0.0), f64::INFINITY, 50, 100, 1).unwrap();
        assert_eq!(p.power, 0.0);
    }

    #[test]
    fn power_curve_csv() {
        let pc = PowerCurve {
            test_name: "cvm".into(),
            x_axis: vec![0.1, 0.05],
            power: vec![0.5, 0.75],
            se: vec![0.01, 0.02],
            reps: 100,
        };
        assert_eq!(pc.to_csv(), "x,power,se\n0.1,0.5,0.01\n0.05,0.75,0.02\n");
    }

    #[test]
    fn alternative_json() {
        let a = AlternativeSpec::from_json(r#"{"h": "1 + x", "scaling": "fixed_drift", "contrast": 0.5}"#).unwrap();
        assert_eq!(a.scaling, Scaling::FixedDrift);
        assert_eq!(a.contrast, Some(0.5));
        assert_eq!(AlternativeSpec::from_json(&a.to_json()).unwrap(), a);
    }
}
