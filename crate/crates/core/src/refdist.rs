//! Limit laws of the test statistics and their Monte Carlo critical values.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::mc;
use crate::rng::{tag, NoiseStream};
use crate::stats;

pub const DEFAULT_STEPS: usize = 2048;
pub const DEFAULT_ALPHAS: [f64; 5] = [0.01, 0.025, 0.05, 0.1, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Distribution {
    /// `∫₀¹ w_v² dv`
    IntSquaredWiener,
    /// `sup₀≤v≤1 |w_v|`
    SupAbsWiener,
    StdNormal,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::IntSquaredWiener => "int-sq-wiener",
            Distribution::SupAbsWiener => "sup-abs-wiener",
            Distribution::StdNormal => "std-normal",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "int-sq-wiener" => Ok(Distribution::IntSquaredWiener),
            "sup-abs-wiener" => Ok(Distribution::SupAbsWiener),
            "std-normal" => Ok(Distribution::StdNormal),
            other => Err(invalid(format!("unknown distribution `{other}`"))),
        }
    }
}

/// Draw one value of the functional from a Wiener path with `n_steps`
/// increments on `[0, 1]`. The integral uses the trapezoid rule and the
/// supremum is taken over grid nodes, the same conventions the statistics
/// use.
pub fn wiener_functional(dist: Distribution, noise: &mut NoiseStream, n_steps: usize) -> f64 {
    if dist == Distribution::StdNormal {
        return noise.normal();
    }
    let sd = (1.0 / n_steps as f64).sqrt();
    let mut w = 0.0;
    let mut acc = 0.0;
    for _ in 0..n_steps {
        let prev = w;
        w += sd * noise.normal();
        acc = match dist {
            Distribution::IntSquaredWiener => acc + 0.5 * (prev * prev + w * w),
            _ => acc.max(w.abs()),
        };
    }
    match dist {
        Distribution::IntSquaredWiener => acc / n_steps as f64,
        _ => acc,
    }
}

/// `reps` independent draws; replication `k` uses stream `(seed, k)`.
pub fn sample_functional(dist: Distribution, replications: usize, n_steps: usize, seed: u64) -> Vec<f64> {
    mc::replicate(replications, seed, |key| {
        wiener_functional(dist, &mut NoiseStream::new(key, tag::REFERENCE), n_steps)
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Empirical `(1 − α)`-quantile of the functional; the normal law uses the
/// exact inverse CDF.
pub fn mc_critical_value(
    dist: Distribution,
    alpha: f64,
    replications: usize,
    n_steps: usize,
    seed: u64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if dist == Distribution::StdNormal {
        return stats::normal_quantile(1.0 - alpha);
    }
    if replications < 100 {
        return Err(invalid("at least 100 replications are needed"));
    }
    let mut v = sample_functional(dist, replications, n_steps, seed);
    v.sort_by(f64::total_cmp);
    Ok(stats::quantile_sorted(&v, 1.0 - alpha))
}

/// `P{sup₀≤v≤1 |w_v| > b}` from the reflection series.
pub fn sup_abs_wiener_tail(b: f64) -> f64 {
    if b <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 0..10_000u32 {
        let m = (2 * k + 1) as f64;
        let term = (-PI * PI * m * m / (8.0 * b * b)).exp() / m;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-14 {
            break;
        }
    }
    (1.0 - 4.0 / PI * sum).clamp(0.0, 1.0)
}

/// Critical value `b_α` solving `sup_abs_wiener_tail(b) = α` by bisection.
pub fn sup_abs_wiener_critical(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let (mut lo, mut hi) = (0.05, 20.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sup_abs_wiener_tail(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo mean and variance of `∫₀¹ w²`.
pub fn int_sq_wiener_moments(replications: usize, n_steps: usize, seed: u64) -> (f64, f64) {
    let v = sample_functional(Distribution::IntSquaredWiener, replications, n_steps, seed);
    (stats::mean(&v), stats::variance(&v))
}

/// Critical values of one limit law at several levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub distribution: Distribution,
    pub alphas: Vec<f64>,
    pub critical_values: Vec<f64>,
    pub replications: usize,
    pub n_steps: usize,
    pub seed: u64,
}

impl QuantileTable {
    /// One Monte Carlo sample, many quantiles. `alphas` is sorted ascending.
    pub fn build(dist: Distribution, alphas: &[f64], replications: usize, n_steps: usize, seed: u64) -> Result<Self> {
        if alphas.is_empty() {
            return Err(invalid("a quantile table needs at least one alpha"));
        }
        let mut alphas = alphas.to_vec();
        for a in &alphas {
            check_alpha(*a)?;
        }
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let critical_values = if dist == Distribution::StdNormal {
            alphas
                .iter()
                .map(|a| stats::normal_quantile(1.0 - a))
                .collect::<Result<Vec<_>>>()?
        } else {
            if replications < 100 {
                return Err(invalid("at least 100 replications are needed"));
            }
            let mut v = sample_functional(dist, replications, n_steps, seed);
            v.sort_by(f64::total_cmp);
            alphas.iter().map(|a| stats::quantile_sorted(&v, 1.0 - a)).collect()
        };
        Ok(Self {
            distribution: dist,
            alphas,
            critical_values,
            replications,
            n_steps,
            seed,
        })
    }

    /// Table from known critical values, e.g. the series values for the
    /// supremum law.
    pub fn from_values(dist: Distribution, alphas: Vec<f64>, critical_values: Vec<f64>) -> Result<Self> {
        if alphas.len() != critical_values.len() || alphas.is_empty() {
            return Err(invalid("alphas and critical values must have equal, non-zero length"));
        }
        Ok(Self {
            distribution: dist,
            alphas,
            critical_values,
            replications: 0,
            n_steps: 0,
            seed: 0,
        })
    }

    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        self.alphas
            .iter()
            .position(|a| (a - alpha).abs() <= 1e-12)
            .map(|k| self.critical_values[k])
            .ok_or(Error::AlphaMissing(alpha))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Cache file name for a calibration key.
    pub fn cache_file_name(dist: Distribution, replications: usize, n_steps: usize, seed: u64) -> String {
        let key = format!("{}|{}|{}|{}", dist.name(), replications, n_steps, seed);
        let digest = Sha256::digest(key.as_bytes());
        format!("{}-{}.json", dist.name(), hex::encode(&digest[..8]))
    }

    /// Load the table for this key from `dir`, or build and store it. A cached
    /// table missing some requested level is rebuilt with the union of levels.
    pub fn cached(
        dir: &Path,
        dist: Distribution,
        alphas: &[f64],
        replications: usize,
        n_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let path: PathBuf = dir.join(Self::cache_file_name(dist, replications, n_steps, seed));
        let mut wanted = alphas.to_vec();
        if let Ok(table) = Self::load(&path) {
            if alphas.iter().all(|a| table.critical_value(*a).is_ok()) {
                return Ok(table);
            }
            wanted.extend(table.alphas.iter().copied());
        }
        let table = Self::build(dist, &wanted, replications, n_steps, seed)?;
        std::fs::create_dir_all(dir)?;
        table.save(&path)?;
        Ok(table)
    }
}
