//! `smallnoise` command-line front end.
//!
//! Exit status: 0 on success, 1 when `--fail-on-reject` is given and some
//! test rejected, 2 on any input or runtime error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use smallnoise::chisq::{fourier_coeffs, select_m, BasisSpec};
use smallnoise::composite::{adf_details, kl_projection, mle, mle_process_linear, ParametricModel, MLE_GRID_POINTS, MLE_TOL};
use smallnoise::gof_core::{Statistic, TestReport};
use smallnoise::kalman::{KalmanSetup, LinearSystemSpec};
use smallnoise::localtime::{default_bandwidth, local_time_occupation, stat_localtime, SpaceGrid, DEFAULT_BINS};
use smallnoise::power::{power_curve_eps, power_curve_scale, AlternativeSpec, Evaluator, TestSettings};
use smallnoise::refdist::{Distribution, QuantileTable};
use smallnoise::rng::StreamKey;
use smallnoise::simulate::{simulate_alternative, simulate_sde_stream, solve_limit_ode, TimeGrid, Trajectory};
use smallnoise::{validate_model, CoefficientFn, ModelSpec};

const DEFAULT_CACHE_DIR: &str = ".smallnoise-cache";

#[derive(Parser)]
#[command(name = "smallnoise", version, about = "Goodness-of-fit tests for diffusions with small noise")]
struct Cli {
    /// Worker threads for Monte Carlo loops (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build (or load from cache) a quantile table of a limit law.
    Calibrate(CalibrateArgs),
    /// Simulate a trajectory of the null model or of an alternative.
    Simulate(SimulateArgs),
    /// Run one test on an observed trajectory.
    Test(TestArgs),
    /// Monte Carlo power curve.
    Power(PowerArgs),
    /// Partially observed linear system: filter and innovation statistic.
    Kalman(KalmanArgs),
    /// Local time of a trajectory and the local-time statistic.
    Localtime(LocaltimeArgs),
    /// Parametric null: MLE, Fisher information and the ADF statistic.
    Composite(CompositeArgs),
}

#[derive(Args, Clone)]
struct TableArgs {
    /// Replications behind cached quantile tables.
    #[arg(long, default_value_t = 200_000)]
    table_reps: usize,
    /// Time steps of the reference Brownian paths.
    #[arg(long, default_value_t = 2048)]
    table_steps: usize,
    #[arg(long, default_value_t = 20_240_601)]
    table_seed: u64,
    /// Ignore cached tables and recompute.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_parser = parse_dist)]
    dist: Distribution,
    /// Comma-separated levels.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.025, 0.05, 0.1, 0.2])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 200_000)]
    reps: usize,
    #[arg(long, default_value_t = 2048)]
    steps: usize,
    #[arg(long, default_value_t = 20_240_601)]
    seed: u64,
    #[arg(long)]
    no_cache: bool,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Simulate under this alternative instead of the null.
    #[arg(long)]
    alt: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Write the limit path `x_t` instead of a random path.
    #[arg(long)]
    limit: bool,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    /// Model JSON: simple model, linear system (`kalman`) or parametric
    /// model (`adf`).
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    #[arg(long, value_parser = parse_stat)]
    stat: Statistic,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    chisq: ChisqArgs,
    /// Space bins of the local-time statistic.
    #[arg(long, default_value_t = 500)]
    bins: usize,
    #[command(flatten)]
    table: TableArgs,
    /// Exit with status 1 when the test rejects.
    #[arg(long)]
    fail_on_reject: bool,
    /// Report JSON; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct ChisqArgs {
    /// Fourier block size: coefficients `|j| < m`.
    #[arg(long)]
    m: Option<usize>,
    /// Pick `m = ⌈r⁴/(4ε⁴)⌉` from a target contrast `r`.
    #[arg(long)]
    contrast_r: Option<f64>,
    /// Smoothness of the weighted statistic.
    #[arg(long, default_value_t = 2)]
    k_smooth: u32,
    /// Also write the coefficients `y_j` as CSV.
    #[arg(long)]
    coeffs_out: Option<PathBuf>,
}

impl ChisqArgs {
    fn block(&self, eps: f64) -> usize {
        match (self.m, self.contrast_r) {
            (Some(m), _) => m,
            (None, Some(r)) => select_m(r, eps),
            (None, None) => 5,
        }
    }
}

#[derive(Args)]
struct PowerArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    alt: PathBuf,
    #[arg(long, value_parser = parse_stat, default_value = "cvm")]
    stat: Statistic,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Sweep ε at a fixed alternative.
    #[arg(long, value_delimiter = ',', conflicts_with = "scales")]
    eps_grid: Vec<f64>,
    /// Sweep the signal scale at the model's ε.
    #[arg(long, value_delimiter = ',')]
    scales: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[command(flatten)]
    chisq: ChisqArgs,
    #[arg(long, default_value_t = 500)]
    bins: usize,
    #[command(flatten)]
    table: TableArgs,
    /// PowerCurve CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KalmanArgs {
    /// Linear system JSON.
    #[arg(long)]
    model: PathBuf,
    /// Observed `X`; simulated from `--seed` when absent.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    fail_on_reject: bool,
    /// Output directory for `report.json` and `filter.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct LocaltimeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    steps: usize,
    /// Kernel half-width; the default rule when absent.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    /// Space bins of the statistic.
    #[arg(long, default_value_t = 500)]
    stat_bins: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    fail_on_reject: bool,
    /// Output directory for `localtime.csv` and `report.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CompositeArgs {
    /// Parametric model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Parameter used to simulate when no trajectory is given.
    #[arg(long)]
    theta0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    /// True drift for the Kullback-Leibler projection onto the family.
    #[arg(long)]
    kl_trend: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    table: TableArgs,
    #[arg(long)]
    fail_on_reject: bool,
    /// Output directory for `mle.json`, `report.json` and, for families
    /// linear in theta, `mle_process.csv`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn parse_dist(s: &str) -> std::result::Result<Distribution, String> {
    Distribution::from_name(s).map_err(|e| e.to_string())
}

fn parse_stat(s: &str) -> std::result::Result<Statistic, String> {
    Statistic::from_name(s).map_err(|e| e.to_string())
}

fn cache_dir() -> PathBuf {
    std::env::var_os("SMALLNOISE_CACHE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
}

fn load_table(dist: Distribution, alphas: &[f64], t: &TableArgs) -> Result<QuantileTable> {
    if t.no_cache {
        let table = QuantileTable::build(dist, alphas, t.table_reps, t.table_steps, t.table_seed)?;
        let dir = cache_dir();
        fs::create_dir_all(&dir)?;
        table.save(&dir.join(QuantileTable::cache_file_name(dist, t.table_reps, t.table_steps, t.table_seed)))?;
        return Ok(table);
    }
    Ok(QuantileTable::cached(&cache_dir(), dist, alphas, t.table_reps, t.table_steps, t.table_seed)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelSpec> {
    ModelSpec::from_json(&read(path)?).with_context(|| format!("model {}", path.display()))
}

fn load_trajectory(path: &Path) -> Result<Trajectory> {
    Trajectory::load_csv(path).with_context(|| format!("trajectory {}", path.display()))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("--alpha must lie in (0, 1), got {alpha}");
    }
    Ok(())
}

fn check_horizon(traj: &Trajectory, horizon: f64) -> Result<()> {
    if (traj.grid.horizon - horizon).abs() > 1e-9 * horizon {
        bail!(
            "trajectory horizon {} differs from the model's T = {}",
            traj.grid.horizon,
            horizon
        );
    }
    Ok(())
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text).with_context(|| format!("cannot write {}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn report_json(r: &TestReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes") + "\n"
}

fn summary(r: &TestReport) {
    eprintln!(
        "{}: value={:.6} threshold={:.6} alpha={} reject={}",
        r.statistic_name, r.value, r.threshold, r.alpha, r.reject
    );
}

fn calibrate(a: CalibrateArgs) -> Result<bool> {
    for &x in &a.alpha {
        check_alpha(x)?;
    }
    let t = TableArgs {
        table_reps: a.reps,
        table_steps: a.steps,
        table_seed: a.seed,
        no_cache: a.no_cache,
    };
    let table = load_table(a.dist, &a.alpha, &t)?;
    let path = cache_dir().join(QuantileTable::cache_file_name(a.dist, a.reps, a.steps, a.seed));
    if let Some(out) = &a.out {
        write_text(Some(out), &(table.to_json() + "\n"))?;
    }
    for alpha in &a.alpha {
        println!("{} alpha={} critical={:.6}", a.dist.name(), alpha, table.critical_value(*alpha)?);
    }
    eprintln!("table cached at {}", path.display());
    Ok(false)
}

fn simulate(a: SimulateArgs) -> Result<bool> {
    let spec = load_model(&a.model)?;
    let grid = TimeGrid::new(spec.horizon, a.steps)?;
    let traj = if a.limit {
        Trajectory::new(grid, solve_limit_ode(&spec, &grid)?.values)?
    } else if let Some(alt) = &a.alt {
        let alt = AlternativeSpec::from_json(&read(alt)?)?;
        simulate_alternative(&spec, &alt.h, &grid, StreamKey::new(a.seed, 0), alt.scaling)?
    } else {
        simulate_sde_stream(&spec, &grid, StreamKey::new(a.seed, 0))?
    };
    write_text(a.out.as_deref(), &traj.to_csv_string())?;
    Ok(false)
}

fn test(a: TestArgs) -> Result<bool> {
    check_alpha(a.alpha)?;
    let traj = load_trajectory(&a.trajectory)?;
    let table = load_table(a.stat.limit_law(), &[a.alpha], &a.table)?;
    let report = match a.stat {
        Statistic::Kalman => {
            let spec = LinearSystemSpec::from_json(&read(&a.model)?)?;
            check_horizon(&traj, spec.horizon)?;
            let setup = KalmanSetup::new(&spec, &traj.grid)?;
            let fp = setup.filter(&traj)?;
            let value = setup.statistic(&traj, &fp)?;
            TestReport::new(a.stat.name(), value, table.critical_value(a.alpha)?, a.alpha)
        }
        Statistic::Adf => {
            let pm = ParametricModel::from_json(&read(&a.model)?)?;
            check_horizon(&traj, pm.horizon)?;
            let d = adf_details(&traj, &pm)?;
            TestReport::new(a.stat.name(), d.value, table.critical_value(a.alpha)?, a.alpha)
                .with_diagnostic("theta_hat", d.theta_hat)
                .with_diagnostic("fisher", d.fisher)
                .with_diagnostic("compensator", d.compensator)
                .with_diagnostic("at_boundary", d.at_boundary as u8 as f64)
        }
        st => {
            let spec = load_model(&a.model)?;
            check_horizon(&traj, spec.horizon)?;
            let m = a.chisq.block(spec.epsilon);
            let settings = TestSettings {
                n_steps: traj.grid.n_steps,
                chisq_m: m,
                chisq_k: a.chisq.k_smooth,
                localtime_bins: a.bins,
            };
            let ev = Evaluator::new(st, &spec, settings)?;
            let traj = Trajectory::new(ev.grid, traj.values)?;
            let value = ev.eval(&traj)?;
            let mut r = TestReport::new(st.name(), value, ev.threshold(&table, a.alpha)?, a.alpha);
            if matches!(st, Statistic::Chisq | Statistic::ChisqWeighted) {
                r = r.with_diagnostic("m", m as f64);
                if let Some(path) = &a.chisq.coeffs_out {
                    let c = fourier_coeffs(&traj, &spec, &BasisSpec::new(m, spec.horizon)?)?;
                    write_text(Some(path), &c.to_csv())?;
                }
            }
            r
        }
    };
    write_text(a.out.as_deref(), &report_json(&report))?;
    summary(&report);
    Ok(a.fail_on_reject && report.reject)
}

fn power(a: PowerArgs) -> Result<bool> {
    check_alpha(a.alpha)?;
    let spec = load_model(&a.model)?;
    let alt = AlternativeSpec::from_json(&read(&a.alt)?)?;
    let table = load_table(a.stat.limit_law(), &[a.alpha], &a.table)?;
    let settings = TestSettings {
        n_steps: a.steps,
        chisq_m: a.chisq.block(spec.epsilon),
        chisq_k: a.chisq.k_smooth,
        localtime_bins: a.bins,
    };
    let curve = if !a.scales.is_empty() {
        power_curve_scale(a.stat, &spec, &alt, &table, a.alpha, &a.scales, a.reps, a.seed, settings)?
    } else if !a.eps_grid.is_empty() {
        power_curve_eps(a.stat, &spec, &alt, &table, a.alpha, &a.eps_grid, a.reps, a.seed, settings)?
    } else {
        bail!("power needs --eps-grid or --scales");
    };
    write_text(a.out.as_deref(), &curve.to_csv())?;
    for i in 0..curve.x_axis.len() {
        eprintln!(
            "{}: x={} power={:.4} se={:.4}",
            curve.test_name, curve.x_axis[i], curve.power[i], curve.se[i]
        );
    }
    Ok(false)
}

fn kalman(a: KalmanArgs) -> Result<bool> {
    check_alpha(a.alpha)?;
    let spec = LinearSystemSpec::from_json(&read(&a.model)?).with_context(|| format!("model {}", a.model.display()))?;
    let (x, y) = match &a.trajectory {
        Some(p) => {
            let x = load_trajectory(p)?;
            check_horizon(&x, spec.horizon)?;
            (x, None)
        }
        None => {
            let grid = TimeGrid::new(spec.horizon, a.steps)?;
            let (x, y) = KalmanSetup::new(&spec, &grid)?.simulate(StreamKey::new(a.seed, 0))?;
            (x, Some(y))
        }
    };
    let setup = KalmanSetup::new(&spec, &x.grid)?;
    let fp = setup.filter(&x)?;
    let value = setup.statistic(&x, &fp)?;
    let table = load_table(Distribution::IntSquaredWiener, &[a.alpha], &a.table)?;
    let report = TestReport::new(Statistic::Kalman.name(), value, table.critical_value(a.alpha)?, a.alpha);
    let mut csv = String::from(if y.is_some() { "t,x,y,m,gamma\n" } else { "t,x,m,gamma\n" });
    for i in 0..x.values.len() {
        match &y {
            Some(y) => csv.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                x.grid.t(i),
                x.values[i],
                y.values[i],
                fp.m[i],
                fp.gamma[i]
            )),
            None => csv.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e}\n",
                x.grid.t(i),
                x.values[i],
                fp.m[i],
                fp.gamma[i]
            )),
        }
    }
    write_text(Some(&a.out.join("filter.csv")), &csv)?;
    write_text(Some(&a.out.join("report.json")), &report_json(&report))?;
    summary(&report);
    Ok(a.fail_on_reject && report.reject)
}

fn localtime(a: LocaltimeArgs) -> Result<bool> {
    check_alpha(a.alpha)?;
    let spec = load_model(&a.model)?;
    let traj = match &a.trajectory {
        Some(p) => load_trajectory(p)?,
        None => simulate_sde_stream(&spec, &TimeGrid::new(spec.horizon, a.steps)?, StreamKey::new(a.seed, 0))?,
    };
    check_horizon(&traj, spec.horizon)?;
    let limit = solve_limit_ode(&spec, &traj.grid)?;
    let space = SpaceGrid::spanning(&limit, a.bins)?;
    let nu = a.nu.unwrap_or_else(|| default_bandwidth(&traj, &space));
    let curve = local_time_occupation(&traj, &spec, &space, nu)?;

    let stat_space = SpaceGrid::spanning(&limit, a.stat_bins)?;
    let hist = local_time_occupation(&traj, &spec, &stat_space, 0.5 * stat_space.width())?;
    let value = stat_localtime(&hist, &spec, &limit)?;
    let table = load_table(Distribution::IntSquaredWiener, &[a.alpha], &a.table)?;
    let report = TestReport::new(Statistic::Localtime.name(), value, table.critical_value(a.alpha)?, a.alpha)
        .with_diagnostic("nu", nu);
    write_text(Some(&a.out.join("localtime.csv")), &curve.to_csv())?;
    write_text(Some(&a.out.join("report.json")), &report_json(&report))?;
    summary(&report);
    Ok(a.fail_on_reject && report.reject)
}

fn composite(a: CompositeArgs) -> Result<bool> {
    check_alpha(a.alpha)?;
    let pm = ParametricModel::from_json(&read(&a.model)?).with_context(|| format!("model {}", a.model.display()))?;
    let traj = match (&a.trajectory, a.theta0) {
        (Some(p), _) => load_trajectory(p)?,
        (None, Some(th)) => {
            let grid = TimeGrid::new(pm.horizon, a.steps)?;
            simulate_sde_stream(&pm.at(th)?, &grid, StreamKey::new(a.seed, 0))?
        }
        (None, None) => bail!("composite needs --trajectory or --theta0"),
    };
    check_horizon(&traj, pm.horizon)?;
    let fit = mle(&traj, &pm, MLE_GRID_POINTS, MLE_TOL)?;
    let mut mle_json = serde_json::json!({
        "theta_hat": fit.theta_hat,
        "loglik": fit.loglik,
        "fisher": fit.fisher,
        "at_boundary": fit.at_boundary,
    });
    if let Some(s) = &a.kl_trend {
        let truth = CoefficientFn::parse(s).context("--kl-trend")?;
        let kl = kl_projection(&pm, &truth, &traj.grid)?;
        mle_json["kl_projection"] = serde_json::to_value(kl)?;
    }
    write_text(
        Some(&a.out.join("mle.json")),
        &(serde_json::to_string_pretty(&mle_json)? + "\n"),
    )?;
    if let Ok(p) = mle_process_linear(&traj, &pm) {
        let mut csv = String::from("t,theta_hat,reliable\n");
        for i in 0..p.theta.len() {
            csv.push_str(&format!("{:.16e},{:.16e},{}\n", traj.grid.t(i), p.theta[i], p.reliable[i] as u8));
        }
        write_text(Some(&a.out.join("mle_process.csv")), &csv)?;
    }
    let d = adf_details(&traj, &pm)?;
    let table = load_table(Distribution::IntSquaredWiener, &[a.alpha], &a.table)?;
    let report = TestReport::new(Statistic::Adf.name(), d.value, table.critical_value(a.alpha)?, a.alpha)
        .with_diagnostic("theta_hat", d.theta_hat)
        .with_diagnostic("fisher", d.fisher)
        .with_diagnostic("compensator", d.compensator)
        .with_diagnostic("at_boundary", d.at_boundary as u8 as f64);
    write_text(Some(&a.out.join("report.json")), &report_json(&report))?;
    summary(&report);
    Ok(a.fail_on_reject && report.reject)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Simulate(a) => {
            let spec = load_model(&a.model)?;
            // the tests need the checks; simulation itself does not
            match validate_model(&spec, 1000) {
                Ok(r) => r.warnings.iter().for_each(|w| eprintln!("warning: {w}")),
                Err(e) => eprintln!("warning: {e}"),
            }
            simulate(a)
        }
        Command::Test(a) => test(a),
        Command::Power(a) => power(a),
        Command::Kalman(a) => kalman(a),
        Command::Localtime(a) => localtime(a),
        Command::Composite(a) => composite(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
