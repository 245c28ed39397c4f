use crate::crossfit::{crossfit_predict, derive_seed};
use crate::density_ratio::RatioEstimates;
use crate::error::Result;
use crate::learners::Task;

use super::{
    finish_with_interval, Diagnostics, EstimateResult, EstimatorKind, NuisanceLearners, Problem,
};

const SDR_STREAM: u64 = 0x5344_5252;

/// Sequentially doubly robust estimator. Starting from `phi_{tau+1} = Y`, at
/// each `t` the pseudo-outcome `phi_{t+1}` (built from each trajectory's own
/// out-of-fold nuisances) is regressed on `(A_t, H_t)` over the training
/// folds, and `phi_t = m_t(A_t^d) + r_t (phi_{t+1} - m_t(A_t))`.
/// The reported estimate is clamped to the outcome bounds, with a flag.
pub fn sdr_estimate(
    problem: &Problem<'_>,
    ratios: &RatioEstimates,
    learners: &NuisanceLearners,
    level: f64,
) -> Result<EstimateResult> {
    let data = problem.data;
    let (n, tau) = (problem.n(), problem.tau());
    let folds = problem.folds;
    let mut phi = problem.y_scaled.clone();
    for t in (1..=tau).rev() {
        let lib = learners.outcome_at(t);
        let target = phi.clone();
        let fit = |j: usize, train: &[usize]| {
            let rows: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&i| data.uncensored(i, t))
                .collect();
            let x = problem.observed_design[t - 1].select_rows(&rows);
            let y: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
            let w: Vec<f64> = rows.iter().map(|&i| problem.weights[i]).collect();
            lib.fit(
                Task::Regression,
                &x,
                &y,
                &w,
                derive_seed(folds.seed(), &[SDR_STREAM, t as u64, j as u64]),
            )
        };
        let mut preds = crossfit_predict(
            folds,
            fit,
            &[
                &problem.observed_design[t - 1],
                &problem.shifted_design[t - 1],
            ],
        )
        .map_err(|e| e.at_time(t))?;
        let m_shift = preds.pop().expect("two designs");
        let m_obs = preds.pop().expect("two designs");
        let r = ratios.ratio(t);
        for i in 0..n {
            phi[i] = if !data.available(i, t) {
                f64::NAN
            } else if r[i] > 0.0 && data.uncensored(i, t) {
                m_shift[i] + r[i] * (target[i] - m_obs[i])
            } else {
                m_shift[i]
            };
        }
    }
    let theta = problem.mean(&phi);
    let diagnostics = Diagnostics::new(folds).with_weights(ratios);
    finish_with_interval(
        problem,
        EstimatorKind::Sdr,
        theta,
        &phi,
        level,
        diagnostics,
        true,
    )
}
