//! Chi-square type test on the Fourier coefficients of the normalised
//! innovation `(dX − S₀(X) dt)/(ε σ(X))`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coeff::ModelSpec;
use crate::error::{invalid, Error, Result};
use crate::quad::trapezoid;
use crate::simulate::{TimeGrid, Trajectory};
use crate::stats;

/// Trigonometric orthonormal system on `[0, T]` with indices `|j| < m`:
/// `φ₀ = 1/√T`, `φ_j = √(2/T) cos(2πjt/T)` for `j > 0` and
/// `√(2/T) sin(2π|j|t/T)` for `j < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl BasisSpec {
    pub fn new(m: usize, horizon: f64) -> Result<Self> {
        if m < 1 {
            return Err(invalid("the basis needs m >= 1"));
        }
        if !(horizon > 0.0) {
            return Err(invalid("basis horizon must be positive"));
        }
        Ok(Self { m, horizon })
    }

    pub fn indices(&self) -> impl Iterator<Item = i64> {
        let m = self.m as i64;
        -(m - 1)..m
    }

    pub fn phi(&self, j: i64, t: f64) -> f64 {
        let tt = self.horizon;
        let arg = 2.0 * PI * j.unsigned_abs() as f64 * t / tt;
        match j.cmp(&0) {
            std::cmp::Ordering::Equal => 1.0 / tt.sqrt(),
            std::cmp::Ordering::Greater => (2.0 / tt).sqrt() * arg.cos(),
            std::cmp::Ordering::Less => (2.0 / tt).sqrt() * arg.sin(),
        }
    }

    /// `∫ φ_j φ_k dt` by the trapezoid rule on `grid`, rows and columns
    /// ordered `j = −(m−1)..=(m−1)`.
    pub fn gram_matrix(&self, grid: &TimeGrid) -> Vec<Vec<f64>> {
        let nodes = grid.nodes();
        let tab: Vec<Vec<f64>> = self
            .indices()
            .map(|j| nodes.iter().map(|&t| self.phi(j, t)).collect())
            .collect();
        tab.iter()
            .map(|a| {
                tab.iter()
                    .map(|b| {
                        let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
                        trapezoid(&prod, grid.dt())
                    })
                    .collect()
            })
            .collect()
    }
}

/// `y_j` for `j = −(m−1)..=(m−1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierCoeffs {
    pub m: usize,
    pub values: Vec<f64>,
}

impl FourierCoeffs {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 == 0 {
            return Err(invalid("coefficient vector must have odd length 2m-1"));
        }
        Ok(Self {
            m: values.len().div_ceil(2),
            values,
        })
    }

    pub fn get(&self, j: i64) -> f64 {
        self.values[(j + self.m as i64 - 1) as usize]
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|y| y * y).sum()
    }

    /// CSV with header `j,y`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("j,y\n");
        let m = self.m as i64;
        for (k, y) in self.values.iter().enumerate() {
            s.push_str(&format!("{},{:.16e}\n", k as i64 - (m - 1), y));
        }
        s
    }
}

/// Normalised innovation increments `(ΔX_i − S₀(X_i)Δ)/(ε σ(X_i))`, left
/// end point evaluation.
pub fn innovation_increments(traj: &Trajectory, spec: &ModelSpec) -> Result<Vec<f64>> {
    let dt = traj.grid.dt();
    let eps = spec.epsilon;
    traj.values
        .windows(2)
        .map(|w| {
            let sigma = spec.diffusion.value(w[0])?;
            if sigma == 0.0 {
                return Err(Error::Positivity {
                    what: "diffusion sigma^2".into(),
                    x: w[0],
                    value: 0.0,
                });
            }
            Ok((w[1] - w[0] - spec.trend.value(w[0])? * dt) / (eps * sigma))
        })
        .collect()
}

/// `y_j = Σ_i φ_j(t_i) r_i` with the normalised increments `r_i`, all `j`
/// at once through one FFT of length `n_steps`.
pub fn fourier_coeffs(traj: &Trajectory, spec: &ModelSpec, basis: &BasisSpec) -> Result<FourierCoeffs> {
    if (basis.horizon - traj.grid.horizon).abs() > 1e-12 * basis.horizon {
        return Err(invalid("basis horizon differs from the trajectory horizon"));
    }
    let r = innovation_increments(traj, spec)?;
    Ok(coeffs_from_increments(&r, basis))
}

pub fn coeffs_from_increments(r: &[f64], basis: &BasisSpec) -> FourierCoeffs {
    let n = r.len();
    let mut buf: Vec<Complex<f64>> = r.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let tt = basis.horizon;
    let c0 = 1.0 / tt.sqrt();
    let c = (2.0 / tt).sqrt();
    // t_i = iT/n, so Σ r_i e^{−2πi j t_i / T} is the j-th DFT bin
    let values = basis
        .indices()
        .map(|j| {
            let z = buf[j.unsigned_abs() as usize % n];
            match j.cmp(&0) {
                std::cmp::Ordering::Equal => c0 * z.re,
                std::cmp::Ordering::Greater => c * z.re,
                std::cmp::Ordering::Less => -c * z.im,
            }
        })
        .collect();
    FourierCoeffs { m: basis.m, values }
}

/// `δ* = (4m)^{-1/2} Σ_{|j|<m} (y_j² − 1)`
pub fn stat_chisq(coeffs: &FourierCoeffs) -> f64 {
    coeffs.values.iter().map(|y| y * y - 1.0).sum::<f64>() / (4.0 * coeffs.m as f64).sqrt()
}

/// `w_i = z² (1 − |i/m|^{2k})`, `z = (2 Σ_{i=−m}^{m} (1 − |i/m|^{2k})²)^{−1/4}`,
/// for `i = −(m−1)..=(m−1)`.
pub fn chisq_weights(m: usize, k: u32) -> Vec<f64> {
    let mf = m as f64;
    let shape = |i: i64| 1.0 - (i.unsigned_abs() as f64 / mf).powi(2 * k as i32);
    let mi = m as i64;
    let total: f64 = (-mi..=mi).map(|i| shape(i).powi(2)).sum();
    let z2 = (2.0 * total).powf(-0.5);
    (-(mi - 1)..mi).map(|i| z2 * shape(i)).collect()
}

/// `Σ_{|j|<m} w_j (y_j² − 1)`
pub fn stat_chisq_weighted(coeffs: &FourierCoeffs, k: u32) -> Result<f64> {
    if k < 1 {
        return Err(invalid("smoothness k must be at least 1"));
    }
    let w = chisq_weights(coeffs.m, k);
    Ok(coeffs.values.iter().zip(&w).map(|(y, w)| w * (y * y - 1.0)).sum())
}

/// Finite-`m` threshold on the `δ*` scale from the `χ²_{2m−1}` law of
/// `Σ y_j²`.
pub fn chisq_exact_threshold(m: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let dof = (2 * m - 1) as f64;
    Ok((stats::chi_squared_quantile(dof, 1.0 - alpha)? - dof) / (4.0 * m as f64).sqrt())
}

/// Exact threshold up to `m = 100`, the normal quantile beyond.
pub fn chisq_threshold(m: usize, alpha: f64) -> Result<f64> {
    if m <= 100 {
        chisq_exact_threshold(m, alpha)
    } else {
        stats::normal_quantile(1.0 - alpha)
    }
}

/// Limit power `Φ(u − z_α)`.
pub fn chisq_power_limit(u: f64, alpha: f64) -> Result<f64> {
    if u < 0.0 {
        return Err(invalid("signal level u must be non-negative"));
    }
    Ok(stats::normal_cdf(u - stats::normal_quantile(1.0 - alpha)?))
}

/// `m = ⌈r⁴ / (4 ε⁴)⌉`
pub fn select_m(contrast: f64, epsilon: f64) -> usize {
    (contrast.powi(4) / (4.0 * epsilon.powi(4))).ceil().max(1.0) as usize
}
