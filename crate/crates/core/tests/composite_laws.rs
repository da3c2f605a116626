use smallnoise::composite::{
    compensated_process_with, fisher_info, h_compensator, mle, mle_process_linear, ParametricModel,
};
use smallnoise::mc::try_replicate;
use smallnoise::simulate::{simulate_first_order, simulate_sde_stream, TimeGrid};
use smallnoise::stats;

fn exponential_family(eps: f64) -> ParametricModel {
    ParametricModel::from_strs("theta*x", "1", 0.5, 2.0, 1.0, 1.0, eps).unwrap()
}

#[test]
fn mle_is_consistent() {
    let pm = exponential_family(0.01);
    let spec = pm.at(1.0).unwrap();
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let err = try_replicate(500, 31, |key| {
        Ok((mle(&simulate_sde_stream(&spec, &grid, key)?, &pm, 41, 1e-10)?.theta_hat - 1.0).abs())
    })
    .unwrap();
    let med = stats::median(&err);
    assert!(med < 0.01, "median error {med}");
}

#[test]
fn running_estimator_settles() {
    let pm = exponential_family(0.01);
    let spec = pm.at(1.0).unwrap();
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let sup = try_replicate(500, 32, |key| {
        let p = mle_process_linear(&simulate_sde_stream(&spec, &grid, key)?, &pm)?;
        Ok(p.theta[grid.n_steps / 2..]
            .iter()
            .map(|t| (t - 1.0).abs())
            .fold(0.0, f64::max))
    })
    .unwrap();
    let med = stats::median(&sup);
    assert!(med < 0.02, "median sup error {med}");
}

#[test]
fn compensator_at_true_value_is_gaussian() {
    // S = θ: H = X_T − x₀ − θT = ε W_T
    let eps = 0.05;
    let horizon = 2.0;
    let pm = ParametricModel::from_strs("theta", "1", 0.5, 2.0, 0.0, horizon, eps).unwrap();
    let spec = pm.at(1.0).unwrap();
    let grid = TimeGrid::new(horizon, 1000).unwrap();
    let z = try_replicate(1000, 33, |key| {
        Ok(h_compensator(&simulate_sde_stream(&spec, &grid, key)?, &pm, 1.0)? / (eps * horizon.sqrt()))
    })
    .unwrap();
    let ks = stats::ks_one_sample(&z, stats::normal_cdf);
    assert!(ks < 0.05, "KS {ks}");
}

#[test]
fn compensated_process_at_true_value_tends_to_first_order_term() {
    let pm = ParametricModel::from_strs("theta*(2+sin(x))", "1", 0.5, 2.0, 0.0, 1.0, 0.01).unwrap();
    let spec = pm.at(1.0).unwrap();
    let grid = TimeGrid::new(1.0, 2048).unwrap();
    let fisher = fisher_info(&pm, 1.0, &grid).unwrap();
    let y = try_replicate(1000, 34, |key| {
        let tr = simulate_sde_stream(&spec, &grid, key)?;
        let h = h_compensator(&tr, &pm, 1.0)?;
        Ok(*compensated_process_with(&tr, &pm, 1.0, fisher, h)?.last().unwrap())
    })
    .unwrap();
    let first = try_replicate(1000, 35, |key| Ok(*simulate_first_order(&spec, &grid, key)?.last().unwrap())).unwrap();
    let ks = stats::ks_two_sample(&y, &first);
    assert!(ks < 0.06, "KS {ks}");
}
