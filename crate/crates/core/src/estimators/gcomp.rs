use rayon::prelude::*;

use crate::crossfit::derive_seed;
use crate::error::Result;
use crate::learners::Task;

use super::{
    Diagnostics, EstimateResult, EstimatorKind, NuisanceLearners, OutcomeRegressions, Problem,
};

const OUTCOME_STREAM: u64 = 0x4F55_5443;

/// Sequential regression: fit `m_tau` on `Y`, then regress each fitted
/// `m_{t+1}(A_{t+1}^d, H_{t+1})` on `(A_t, H_t)` down to `t = 1`. Every fold
/// runs its own chain on its training rows and predicts its validation rows;
/// rows censored by `t` are left out of the time-`t` fit.
pub fn gcomp_sequential(
    problem: &Problem<'_>,
    learners: &NuisanceLearners,
    level: f64,
) -> Result<(OutcomeRegressions, EstimateResult)> {
    let data = problem.data;
    let (n, tau) = (problem.n(), problem.tau());
    let folds = problem.folds;
    let libs: Vec<_> = (1..=tau).map(|t| learners.outcome_at(t)).collect();

    let chains: Vec<(Vec<usize>, Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..folds.n_folds())
        .into_par_iter()
        .map(|j| {
            let train = folds.training(j);
            let valid = folds.validation(j);
            let mut pseudo = problem.y_scaled.clone();
            let mut obs = vec![Vec::new(); tau];
            let mut shift = vec![Vec::new(); tau];
            for t in (1..=tau).rev() {
                let rows: Vec<usize> = train
                    .iter()
                    .copied()
                    .filter(|&i| data.uncensored(i, t))
                    .collect();
                let x = problem.observed_design[t - 1].select_rows(&rows);
                let y: Vec<f64> = rows.iter().map(|&i| pseudo[i]).collect();
                let w: Vec<f64> = rows.iter().map(|&i| problem.weights[i]).collect();
                let seed = derive_seed(folds.seed(), &[OUTCOME_STREAM, t as u64, j as u64]);
                let model = libs[t - 1]
                    .fit(Task::Regression, &x, &y, &w, seed)
                    .map_err(|e| e.at_time(t).in_fold(j))?;
                let xo = &problem.observed_design[t - 1];
                let xs = &problem.shifted_design[t - 1];
                let predict = |i: usize, x: &crate::matrix::Matrix| {
                    if data.available(i, t) {
                        model.predict_row(x.row(i))
                    } else {
                        f64::NAN
                    }
                };
                obs[t - 1] = valid.iter().map(|&i| predict(i, xo)).collect();
                shift[t - 1] = valid.iter().map(|&i| predict(i, xs)).collect();
                for &i in &train {
                    pseudo[i] = predict(i, xs);
                }
            }
            Ok((valid, obs, shift))
        })
        .collect::<Result<_>>()?;

    let mut observed = vec![vec![f64::NAN; n]; tau];
    let mut shifted = vec![vec![f64::NAN; n]; tau];
    for (valid, obs, shift) in chains {
        for t in 0..tau {
            for (k, &i) in valid.iter().enumerate() {
                observed[t][i] = obs[t][k];
                shifted[t][i] = shift[t][k];
            }
        }
    }
    let regressions = OutcomeRegressions { observed, shifted };
    let theta = problem
        .scaler
        .unscale(problem.mean(regressions.shifted_at(1)));
    let result = EstimateResult {
        estimator: EstimatorKind::Sub,
        theta,
        se: None,
        ci: None,
        level,
        n,
        tau,
        diagnostics: Diagnostics::new(folds),
        eif: None,
    };
    Ok((regressions, result))
}
