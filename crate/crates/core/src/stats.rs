//! Sample summaries, empirical quantiles and Kolmogorov–Smirnov distances.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{invalid, Result};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Type-7 (linear interpolation) quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a − F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov distance against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability {p} outside (0, 1)")));
    }
    Ok(std_normal().inverse_cdf(p))
}

pub fn chi_squared_cdf(dof: f64, x: f64) -> Result<f64> {
    let d = ChiSquared::new(dof).map_err(|e| invalid(e.to_string()))?;
    Ok(d.cdf(x))
}

pub fn chi_squared_quantile(dof: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability {p} outside (0, 1)")));
    }
    let d = ChiSquared::new(dof).map_err(|e| invalid(e.to_string()))?;
    Ok(d.inverse_cdf(p))
}

/// Rejection frequency and its binomial standard error.
pub fn proportion(hits: usize, total: usize) -> (f64, f64) {
    let p = hits as f64 / total as f64;
    (p, (p * (1.0 - p) / total as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_relative_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_relative_eq!(quantile_sorted(&v, 0.9), 3.7, epsilon = 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&a, &[10.0, 11.0]), 1.0);
        assert_relative_eq!(ks_two_sample(&[1.0, 2.0], &[1.5]), 0.5);
    }

    #[test]
    fn ks_one_sample_uniform() {
        let v: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert_relative_eq!(ks_one_sample(&v, |x| x), 0.005, epsilon = 1e-12);
    }

    #[test]
    fn normal_oracles() {
        assert!((normal_quantile(0.95).unwrap() - 1.644_853_6).abs() < 1e-6);
        assert!((normal_cdf(-0.6449) - 0.2595).abs() < 1e-4);
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn chi_squared_oracle() {
        assert!((chi_squared_quantile(1.0, 0.95).unwrap() - 3.841_458_8).abs() < 1e-6);
        assert!((chi_squared_cdf(2.0, 2.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn ks_is_symmetric_and_bounded(
            a in prop::collection::vec(-10.0f64..10.0, 1..40),
            b in prop::collection::vec(-10.0f64..10.0, 1..40),
        ) {
            let d = ks_two_sample(&a, &b);
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert_eq!(d, ks_two_sample(&b, &a));
        }

        #[test]
        fn quantile_is_monotone(mut v in prop::collection::vec(-5.0f64..5.0, 2..50), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            v.sort_by(f64::total_cmp);
            let (lo, hi) = if p < q { (p, q) } else { (q, p) };
            prop_assert!(quantile_sorted(&v, lo) <= quantile_sorted(&v, hi));
        }
    }
}
