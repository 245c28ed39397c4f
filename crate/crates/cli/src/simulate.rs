//! `lmtp simulate`: the benchmark study over scenarios and sample sizes.

use std::fmt::Write as _;
use std::path::PathBuf;

use lmtp::simulation::{
    run_scenario, write_metrics_csv, BenchmarkDgp, ExactModel, MetricsRow, ScenarioSpec,
    SimulationTruth, StudyConfig,
};
use lmtp::Policy;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateArgs {
    pub scenarios: Vec<usize>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub folds: usize,
    pub out: PathBuf,
}

/// The target of the study: clamped-decrement policy on the benchmark
/// mechanism, with `theta` and the efficiency bound by exact enumeration.
pub fn benchmark_truth(policy: &Policy) -> Result<SimulationTruth, CliError> {
    let exact = ExactModel::new(&BenchmarkDgp, policy)?;
    Ok(SimulationTruth {
        theta: exact.theta(),
        theta_se: 0.0,
        sigma2: exact.efficiency_bound(),
    })
}

/// Runs every (scenario, n) cell and writes the metrics CSV.
pub fn run_simulate(args: &SimulateArgs) -> Result<Vec<MetricsRow>, CliError> {
    if args.scenarios.is_empty() || args.sizes.is_empty() {
        return Err(CliError::Config(
            "need at least one scenario and one sample size".into(),
        ));
    }
    if args.reps == 0 {
        return Err(CliError::Config("reps must be positive".into()));
    }
    let specs = args
        .scenarios
        .iter()
        .map(|&s| ScenarioSpec::benchmark(s))
        .collect::<Result<Vec<_>, _>>()?;
    for &n in &args.sizes {
        if args.folds < 2 || n < args.folds {
            return Err(CliError::Config(format!(
                "need 2 <= folds <= n, got {} folds with n = {n}",
                args.folds
            )));
        }
    }
    let policy = Policy::clamped_decrement();
    let truth = benchmark_truth(&policy)?;
    log::info!(
        "theta = {}, efficiency bound = {}",
        truth.theta,
        truth.sigma2
    );
    let mut rows = Vec::new();
    for spec in &specs {
        for &n in &args.sizes {
            let cfg = StudyConfig {
                n,
                reps: args.reps,
                folds: args.folds,
                master_seed: args.seed,
                level: 0.95,
            };
            log::info!("scenario {}, n = {n}", spec.id);
            rows.extend(run_scenario(&BenchmarkDgp, &policy, spec, &cfg, &truth)?);
        }
    }
    write_metrics_csv(&args.out, &rows)?;
    Ok(rows)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

/// Fixed-width table of the metrics, with the Monte Carlo error of the bias.
pub fn summary_table(rows: &[MetricsRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>4} {:>6} {:>10} {:>9} {:>10} {:>9} {:>8} {:>7} {:>8}",
        "scenario",
        "est",
        "n",
        "bias",
        "mc_se",
        "sqrtn_bias",
        "nmse/bnd",
        "coverage",
        "rel_se",
        "failures"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>8} {:>4} {:>6} {:>10.5} {:>9.5} {:>10.3} {:>9.3} {:>8} {:>7} {:>8}",
            r.scenario,
            r.estimator,
            r.n,
            r.bias,
            r.mc_se,
            r.sqrt_n_bias,
            r.n_mse_over_bound,
            cell(r.coverage),
            cell(r.rel_se),
            r.failures
        );
    }
    out
}
