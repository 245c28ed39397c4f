//! `lmtp estimate`: every requested estimator on one dataset.

use serde::Serialize;

use lmtp::estimators::{contrast, estimate, Contrast, EstimateResult, Problem};
use lmtp::{load_longitudinal_csv, make_folds, FoldPlan, Policy};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub n: usize,
    pub tau: usize,
    pub policy: Policy,
    pub results: Vec<EstimateResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_policy: Option<Policy>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_results: Option<Vec<EstimateResult>>,
    /// `theta(policy) - theta(reference_policy)` per estimator.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrasts: Option<Vec<Contrast>>,
}

/// Loads the data and runs the configured estimators. All estimators, and
/// the reference policy if any, share one fold plan; estimators of one
/// policy share their nuisance fits.
pub fn run_estimate(cfg: &RunConfig) -> Result<EstimateReport, CliError> {
    cfg.validate()?;
    let data = load_longitudinal_csv(&cfg.data, &cfg.schema)?;
    let n = data.n();
    let folds = if cfg.crossfit {
        make_folds(n, cfg.folds, cfg.seed)?
    } else {
        FoldPlan::no_crossfit(n, cfg.seed)
    };
    let learners = cfg.learners();
    let options = cfg.options();
    let run = |policy: &Policy| -> Result<Vec<EstimateResult>, CliError> {
        let problem = Problem::new(&data, policy, &folds, options.scale_margin)?;
        Ok(estimate(&problem, &learners, &options, &cfg.estimators)?)
    };
    let results = run(&cfg.policy)?;
    let (reference_results, contrasts) = match &cfg.reference_policy {
        Some(reference) => {
            let base = run(reference)?;
            let contrasts = results
                .iter()
                .zip(&base)
                .map(|(a, b)| contrast(a, b))
                .collect::<Result<Vec<_>, _>>()?;
            (Some(base), Some(contrasts))
        }
        None => (None, None),
    };
    Ok(EstimateReport {
        n,
        tau: data.tau(),
        policy: cfg.policy.clone(),
        results,
        reference_policy: cfg.reference_policy.clone(),
        reference_results,
        contrasts,
    })
}

/// Pretty JSON with a trailing newline.
pub fn report_json(report: &EstimateReport) -> String {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    text
}
