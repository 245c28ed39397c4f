//! Replicated estimation under controlled nuisance (in)consistency.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::crossfit::make_folds;
use crate::error::{Error, Result};
use crate::estimators::{
    gcomp_sequential, ipw_estimate, sdr_estimate, tmle_estimate, EstimateResult, EstimationOptions,
    EstimatorKind, NuisanceLearners, NuisanceSet, Problem,
};
use crate::learners::{LearnerLibrary, LearnerSpec};
use crate::policy::Policy;

use super::model::{generate_dataset, SequentialModel};

/// Seed offset separating fold seeds from dataset seeds.
pub const FOLD_SEED_OFFSET: u64 = 1_000_000;

/// Replications may fail (for example a diverging tilt); more than this
/// fraction of failures for any estimator aborts the study.
pub const MAX_FAILURE_RATE: f64 = 0.05;

/// Which nuisance estimators are consistent at each time point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioSpec {
    pub id: usize,
    pub outcome_consistent: Vec<bool>,
    pub ratio_consistent: Vec<bool>,
}

impl ScenarioSpec {
    /// The four designs of the benchmark study (`tau = 4`):
    /// 1. everything consistent;
    /// 2. `m_t` consistent for `t > 2`, `r_t` consistent for `t <= 2`;
    /// 3. `m_t` consistent for `t < 4`, `r_t` consistent only at `t = 4`;
    /// 4. nothing consistent.
    pub fn benchmark(id: usize) -> Result<Self> {
        let tau = 4;
        let (m, r): (Vec<bool>, Vec<bool>) = match id {
            1 => (vec![true; tau], vec![true; tau]),
            2 => (
                (1..=tau).map(|t| t > 2).collect(),
                (1..=tau).map(|t| t <= 2).collect(),
            ),
            3 => (
                (1..=tau).map(|t| t < 4).collect(),
                (1..=tau).map(|t| t == 4).collect(),
            ),
            4 => (vec![false; tau], vec![false; tau]),
            other => {
                return Err(Error::Config(format!(
                    "scenario must be 1, 2, 3 or 4, got {other}"
                )))
            }
        };
        Ok(Self {
            id,
            outcome_consistent: m,
            ratio_consistent: r,
        })
    }

    /// Consistent slots get the saturated learners, the others an intercept.
    pub fn learners(&self) -> NuisanceLearners {
        let pick = |ok: &bool, good: fn() -> LearnerSpec| {
            LearnerLibrary::single(if *ok {
                good()
            } else {
                LearnerSpec::InterceptOnly
            })
        };
        NuisanceLearners {
            outcome: self
                .outcome_consistent
                .iter()
                .map(|ok| pick(ok, consistent_outcome_learner))
                .collect(),
            ratio: self
                .ratio_consistent
                .iter()
                .map(|ok| pick(ok, consistent_ratio_learner))
                .collect(),
        }
    }
}

/// Shrinkage pseudo-weight of [`consistent_ratio_learner`].
pub const RATIO_PRIOR: f64 = 5.0;

/// Cell means over `(A_t, L_t, A_{t-1})`, which determine the outcome
/// regressions of the benchmark mechanism.
pub fn consistent_outcome_learner() -> LearnerSpec {
    LearnerSpec::saturated_on(&["A{t}", "L{t}_x", "A{t-1}"])
}

/// Cell frequencies over the same key, which also determines the exposure
/// mechanism. The prior keeps cross-fitted cells with few observed rows
/// from producing extreme ratios; its influence vanishes as cells fill.
pub fn consistent_ratio_learner() -> LearnerSpec {
    consistent_outcome_learner().with_prior(RATIO_PRIOR)
}

/// Ground truth for a study: the policy mean and the efficiency bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationTruth {
    pub theta: f64,
    /// Standard error of `theta` when it is a Monte Carlo estimate.
    pub theta_se: f64,
    /// `Var phi_1` at the true nuisances.
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub n: usize,
    pub reps: usize,
    pub folds: usize,
    pub master_seed: u64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scenario: usize,
    pub estimator: EstimatorKind,
    pub n: usize,
    pub reps: usize,
    pub bias: f64,
    pub sqrt_n_bias: f64,
    pub n_mse_over_bound: f64,
    pub coverage: Option<f64>,
    pub rel_se: Option<f64>,
    pub failures: usize,
    /// Monte Carlo standard error of `bias`.
    pub mc_se: f64,
}

/// Point estimate and interval from one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReplicateEstimate {
    pub theta: f64,
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
}

impl From<&EstimateResult> for ReplicateEstimate {
    fn from(r: &EstimateResult) -> Self {
        Self {
            theta: r.theta,
            se: r.se,
            ci: r.ci,
        }
    }
}

/// Runs all four estimators on one dataset with shared nuisances. Nuisance
/// failures fail every estimator; estimator failures are isolated.
pub fn run_replication<M: SequentialModel + ?Sized>(
    model: &M,
    policy: &Policy,
    learners: &NuisanceLearners,
    cfg: &StudyConfig,
    rep: usize,
) -> Vec<Result<ReplicateEstimate>> {
    let attempt = || -> Result<Vec<Result<ReplicateEstimate>>> {
        let data = generate_dataset(model, cfg.n, cfg.master_seed + rep as u64)?;
        let folds = make_folds(
            cfg.n,
            cfg.folds,
            cfg.master_seed + FOLD_SEED_OFFSET + rep as u64,
        )?;
        let options = EstimationOptions {
            level: cfg.level,
            ..EstimationOptions::default()
        };
        let problem = Problem::new(&data, policy, &folds, options.scale_margin)?;
        let ratios = problem.ratios(learners, &options)?;
        let (regressions, sub) = gcomp_sequential(&problem, learners, cfg.level)?;
        let nuisance = NuisanceSet {
            ratios,
            regressions,
        };
        Ok(vec![
            Ok(ReplicateEstimate::from(&sub)),
            ipw_estimate(&problem, &nuisance.ratios, cfg.level)
                .map(|r| ReplicateEstimate::from(&r)),
            tmle_estimate(&problem, &nuisance, cfg.level).map(|r| ReplicateEstimate::from(&r)),
            sdr_estimate(&problem, &nuisance.ratios, learners, cfg.level)
                .map(|r| ReplicateEstimate::from(&r)),
        ])
    };
    match attempt() {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            (0..4).map(|_| Err(Error::Input(msg.clone()))).collect()
        }
    }
}

/// Compensated (Neumaier) summation.
fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + c
}

/// Aggregates replicate estimates of one estimator into a metrics row.
pub fn summarize(
    scenario: usize,
    kind: EstimatorKind,
    n: usize,
    estimates: &[ReplicateEstimate],
    failures: usize,
    truth: &SimulationTruth,
) -> MetricsRow {
    let k = estimates.len() as f64;
    let mean = kahan_sum(estimates.iter().map(|e| e.theta)) / k;
    let bias = mean - truth.theta;
    let var = kahan_sum(estimates.iter().map(|e| (e.theta - mean).powi(2))) / (k - 1.0).max(1.0);
    let mse = kahan_sum(estimates.iter().map(|e| (e.theta - truth.theta).powi(2))) / k;
    let (coverage, rel_se) = if kind.has_interval() {
        let covered = estimates.iter().filter(|e| {
            e.ci.is_some_and(|[lo, hi]| lo <= truth.theta && truth.theta <= hi)
        });
        let sigma_hat = kahan_sum(
            estimates
                .iter()
                .map(|e| e.se.unwrap_or(f64::NAN) * (n as f64).sqrt()),
        ) / k;
        (
            Some(covered.count() as f64 / k),
            Some(sigma_hat / truth.sigma2.sqrt()),
        )
    } else {
        (None, None)
    };
    MetricsRow {
        scenario,
        estimator: kind,
        n,
        reps: estimates.len() + failures,
        bias,
        sqrt_n_bias: (n as f64).sqrt() * bias,
        n_mse_over_bound: n as f64 * mse / truth.sigma2,
        coverage,
        rel_se,
        failures,
        mc_se: (var / k).sqrt(),
    }
}

/// Replicates a scenario `cfg.reps` times in parallel. Replication `r` draws
/// its data with seed `master_seed + r` and its folds with
/// `master_seed + 1_000_000 + r`, so results do not depend on the thread count.
pub fn run_scenario<M: SequentialModel + ?Sized>(
    model: &M,
    policy: &Policy,
    spec: &ScenarioSpec,
    cfg: &StudyConfig,
    truth: &SimulationTruth,
) -> Result<Vec<MetricsRow>> {
    let learners = spec.learners();
    learners.validate(model.tau())?;
    let results: Vec<Vec<Result<ReplicateEstimate>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_replication(model, policy, &learners, cfg, r))
        .collect();
    EstimatorKind::ALL
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let mut ok = Vec::with_capacity(cfg.reps);
            let mut failures = 0;
            for (r, rep) in results.iter().enumerate() {
                match &rep[k] {
                    Ok(e) => ok.push(*e),
                    Err(e) => {
                        failures += 1;
                        log::warn!("scenario {}, replication {r}, {kind}: {e}", spec.id);
                    }
                }
            }
            if failures as f64 > MAX_FAILURE_RATE * cfg.reps as f64 || ok.is_empty() {
                return Err(Error::Input(format!(
                    "scenario {}: {kind} failed in {failures} of {} replications",
                    spec.id, cfg.reps
                )));
            }
            Ok(summarize(spec.id, kind, cfg.n, &ok, failures, truth))
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// Writes `scenario,estimator,n,reps,bias,sqrt_n_bias,n_mse_over_bound,coverage,rel_se,failures`.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "scenario",
        "estimator",
        "n",
        "reps",
        "bias",
        "sqrt_n_bias",
        "n_mse_over_bound",
        "coverage",
        "rel_se",
        "failures",
    ])?;
    for r in rows {
        w.write_record([
            r.scenario.to_string(),
            r.estimator.to_string(),
            r.n.to_string(),
            r.reps.to_string(),
            format!("{}", r.bias),
            format!("{}", r.sqrt_n_bias),
            format!("{}", r.n_mse_over_bound),
            fmt_opt(r.coverage),
            fmt_opt(r.rel_se),
            r.failures.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_designs() {
        let s2 = ScenarioSpec::benchmark(2).unwrap();
        assert_eq!(s2.outcome_consistent, vec![false, false, true, true]);
        assert_eq!(s2.ratio_consistent, vec![true, true, false, false]);
        let s3 = ScenarioSpec::benchmark(3).unwrap();
        assert_eq!(s3.outcome_consistent, vec![true, true, true, false]);
        assert_eq!(s3.ratio_consistent, vec![false, false, false, true]);
        assert!(ScenarioSpec::benchmark(5).is_err());
        let l = s3.learners();
        assert_eq!(l.outcome_at(4).specs, vec![LearnerSpec::InterceptOnly]);
        assert_eq!(
            l.ratio_at(4).specs,
            vec![LearnerSpec::saturated_on(&["A4", "L4_x", "A3"]).with_prior(RATIO_PRIOR)]
        );
    }

    #[test]
    fn kahan_matches_exact_sum() {
        let v = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(kahan_sum(v), 2.0);
    }

    #[test]
    fn summary_arithmetic() {
        let truth = SimulationTruth {
            theta: 0.5,
            theta_se: 0.0,
            sigma2: 0.25,
        };
        let est = [
            ReplicateEstimate {
                theta: 0.4,
                se: Some(0.01),
                ci: Some([0.3, 0.45]),
            },
            ReplicateEstimate {
                theta: 0.6,
                se: Some(0.03),
                ci: Some([0.45, 0.7]),
            },
        ];
        let row = summarize(1, EstimatorKind::Tmle, 100, &est, 1, &truth);
        assert!(row.bias.abs() < 1e-15);
        assert!((row.n_mse_over_bound - 100.0 * 0.01 / 0.25).abs() < 1e-12);
        assert_eq!(row.coverage, Some(0.5));
        assert!((row.rel_se.unwrap() - 0.2 / 0.5).abs() < 1e-12);
        assert_eq!(row.reps, 3);
        assert!((row.mc_se - (0.02f64 / 2.0).sqrt()).abs() < 1e-12);
    }
}
