//! Density ratios `r_t = g_t^d / g_t` by classification on a duplicated sample.
//!
//! Each trajectory available at `t` contributes a row with its observed
//! exposure (label 0) and a row with its intervened exposure (label 1). For a
//! classifier `u` of the label, `u / (1 - u)` estimates the ratio. When
//! censoring indicators are present, `C_t` is a feature and is set to 1 on
//! the intervened rows, so trajectories censored at `t` get ratio 0.

use serde::Serialize;

use crate::crossfit::{crossfit_predict, derive_seed, FoldPlan};
use crate::data::LongitudinalData;
use crate::error::{Error, Result};
use crate::learners::{LearnerLibrary, Task};
use crate::matrix::Matrix;

const RATIO_STREAM: u64 = 0x5241_5449;

/// Duplicated sample for time `t`: rows `0..m` carry the observed exposure,
/// rows `m..2m` the intervened one, in the same trajectory order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub features: Matrix,
    pub labels: Vec<f64>,
    pub origin: Vec<usize>,
    pub weights: Vec<f64>,
}

impl AugmentedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `(H_t, A_t[, C_t])` with the given exposure and censoring columns.
pub(crate) fn ratio_design(
    data: &LongitudinalData,
    t: usize,
    exposure: &[f64],
    censoring: Option<&[f64]>,
) -> Matrix {
    let x = data.design(t, exposure);
    match (data.censoring_name(t), censoring) {
        (Some(name), Some(c)) => x.hstack(&Matrix::column(name, c.to_vec())),
        _ => x,
    }
}

fn observed_censoring(data: &LongitudinalData, t: usize) -> Option<Vec<f64>> {
    data.censoring(t)
        .map(|c| c.iter().map(|&v| f64::from(v)).collect())
}

/// Builds the duplicated sample at time `t` from trajectories available at `t`.
pub fn build_augmented(
    data: &LongitudinalData,
    shifted: &[Vec<f64>],
    t: usize,
    weights: Option<&[f64]>,
) -> AugmentedDataset {
    let rows: Vec<usize> = (0..data.n()).filter(|&i| data.available(i, t)).collect();
    let c_obs = observed_censoring(data, t);
    let c_one = c_obs.as_ref().map(|c| vec![1.0; c.len()]);
    let observed = ratio_design(data, t, data.exposure(t), c_obs.as_deref()).select_rows(&rows);
    let intervened = ratio_design(data, t, &shifted[t - 1], c_one.as_deref()).select_rows(&rows);
    let m = rows.len();
    let w: Vec<f64> = rows
        .iter()
        .map(|&i| weights.map_or(1.0, |w| w[i]))
        .collect();
    AugmentedDataset {
        features: observed.vstack(&intervened),
        labels: [vec![0.0; m], vec![1.0; m]].concat(),
        origin: [rows.clone(), rows].concat(),
        weights: [w.clone(), w].concat(),
    }
}

/// Summary of the cumulative weights `prod_t r_t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightSummary {
    pub max: f64,
    pub mean: f64,
    /// Coefficient of variation, `sd / mean`.
    pub cv: f64,
    /// Deciles 0.1, ..., 0.9.
    pub deciles: Vec<f64>,
}

/// Cross-fitted `r_t(A_t, H_t)` per time (outer index `t - 1`) and trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioEstimates {
    ratios: Vec<Vec<f64>>,
    cap: Option<f64>,
    capped: usize,
}

impl RatioEstimates {
    /// Wraps precomputed ratios, applying an optional cap.
    pub fn new(mut ratios: Vec<Vec<f64>>, cap: Option<f64>) -> Result<Self> {
        let mut capped = 0;
        for r in ratios.iter_mut().flatten() {
            if !(*r >= 0.0) {
                return Err(Error::Input(format!(
                    "density ratios must be nonnegative, got {r}"
                )));
            }
            if let Some(c) = cap {
                if *r > c {
                    *r = c;
                    capped += 1;
                }
            }
        }
        if let Some(r) = ratios.iter().flatten().find(|r| !r.is_finite()) {
            return Err(Error::Input(format!(
                "density ratio {r} is not finite; use a positive p_floor or a truncation cap"
            )));
        }
        Ok(Self {
            ratios,
            cap,
            capped,
        })
    }

    pub fn tau(&self) -> usize {
        self.ratios.len()
    }

    pub fn ratio(&self, t: usize) -> &[f64] {
        &self.ratios[t - 1]
    }

    pub fn cap(&self) -> Option<f64> {
        self.cap
    }

    /// Number of ratios reduced to the cap.
    pub fn capped(&self) -> usize {
        self.capped
    }

    /// `omega_t = prod_{k <= t} r_k` per time.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let n = self.ratios.first().map_or(0, Vec::len);
        let mut acc = vec![1.0; n];
        self.ratios
            .iter()
            .map(|r| {
                for (a, v) in acc.iter_mut().zip(r) {
                    *a *= v;
                }
                acc.clone()
            })
            .collect()
    }

    pub fn summary(&self) -> WeightSummary {
        let mut w = self.cumulative().pop().unwrap_or_default();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        w.sort_by(f64::total_cmp);
        let deciles = (1..10).map(|k| quantile(&w, k as f64 / 10.0)).collect();
        WeightSummary {
            max: w.last().copied().unwrap_or(f64::NAN),
            mean,
            cv: sd / mean,
            deciles,
        }
    }
}

/// Type-7 quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fits the label classifier at every time on the training folds of the
/// trajectory partition and evaluates `u / (1 - u)` at the observed
/// `(A_t, H_t)` of each validation trajectory. Ratios are 0 where `A_t` is
/// unavailable or `C_t = 0`.
pub fn estimate_density_ratios(
    data: &LongitudinalData,
    shifted: &[Vec<f64>],
    folds: &FoldPlan,
    library: &dyn Fn(usize) -> LearnerLibrary,
    p_floor: f64,
    truncation: Option<f64>,
    weights: Option<&[f64]>,
) -> Result<RatioEstimates> {
    if folds.n() != data.n() {
        return Err(Error::Internal("fold plan does not match the data".into()));
    }
    let task = Task::Classification { p_floor };
    let mut ratios = Vec::with_capacity(data.tau());
    for t in 1..=data.tau() {
        let lib = library(t);
        let aug = build_augmented(data, shifted, t, weights);
        let m = aug.len() / 2;
        // augmented row pairs of each trajectory
        let mut pair = vec![usize::MAX; data.n()];
        for (k, &i) in aug.origin[..m].iter().enumerate() {
            pair[i] = k;
        }
        let c_obs = observed_censoring(data, t);
        let eval = ratio_design(data, t, data.exposure(t), c_obs.as_deref());
        let fit = |j: usize, train: &[usize]| {
            let rows: Vec<usize> = train
                .iter()
                .filter(|&&i| pair[i] != usize::MAX)
                .flat_map(|&i| [pair[i], pair[i] + m])
                .collect();
            let x = aug.features.select_rows(&rows);
            let y: Vec<f64> = rows.iter().map(|&k| aug.labels[k]).collect();
            let w: Vec<f64> = rows.iter().map(|&k| aug.weights[k]).collect();
            lib.fit(
                task,
                &x,
                &y,
                &w,
                derive_seed(folds.seed(), &[RATIO_STREAM, t as u64, j as u64]),
            )
        };
        let u = crossfit_predict(folds, fit, &[&eval])
            .map_err(|e| e.at_time(t))?
            .remove(0);
        let r: Vec<f64> = (0..data.n())
            .map(|i| {
                if data.uncensored(i, t) {
                    u[i] / (1.0 - u[i])
                } else {
                    0.0
                }
            })
            .collect();
        ratios.push(r);
    }
    let est = RatioEstimates::new(ratios, truncation)?;
    let s = est.summary();
    log::debug!(
        "cumulative weights: max {:.3}, mean {:.3}, cv {:.3}",
        s.max,
        s.mean,
        s.cv
    );
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ColumnInfo, DataParts};
    use crate::learners::LearnerSpec;
    use crate::policy::{shifted_exposures, Policy};

    fn single_time(a: Vec<f64>) -> LongitudinalData {
        let n = a.len();
        LongitudinalData::from_parts(DataParts {
            ids: (0..n).map(|i| i.to_string()).collect(),
            covariate_columns: vec![vec![ColumnInfo::numeric("L1")]],
            covariates: vec![vec![1.0; n]],
            exposure_names: vec!["A1".into()],
            exposures: vec![a],
            censoring_names: None,
            censoring: None,
            outcome_name: "Y".into(),
            outcome: vec![0.0; n],
            outcome_bounds: (0.0, 1.0),
            exposure_support: None,
        })
        .unwrap()
    }

    #[test]
    fn augmented_shape_and_labels() {
        let data = single_time(vec![0.0, 2.0, 1.0]);
        let shifted = shifted_exposures(&data, &Policy::clamped_decrement()).unwrap();
        let aug = build_augmented(&data, &shifted, 1, None);
        assert_eq!(aug.len(), 6);
        assert_eq!(aug.labels.iter().sum::<f64>() / 6.0, 0.5);
        let a = aug.features.column_index("A1").unwrap();
        assert_eq!(
            aug.features.column_values(a),
            vec![0.0, 2.0, 1.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(aug.origin, vec![0, 1, 2, 0, 1, 2]);
    }

    #[test]
    fn identity_policy_intercept_classifier_gives_unit_ratios() {
        let data = single_time(vec![0.0, 2.0, 1.0, 4.0, 3.0, 3.0]);
        let shifted = shifted_exposures(&data, &Policy::identity()).unwrap();
        let aug = build_augmented(&data, &shifted, 1, None);
        let m = aug.len() / 2;
        for k in 0..m {
            assert_eq!(aug.features.row(k), aug.features.row(k + m));
        }
        let folds = crate::crossfit::make_folds(6, 3, 1).unwrap();
        let lib = |_| LearnerLibrary::single(LearnerSpec::InterceptOnly);
        let r = estimate_density_ratios(&data, &shifted, &folds, &lib, 1e-3, None, None).unwrap();
        assert!(r.ratio(1).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn saturated_ratio_equals_count_ratio() {
        // cell a = 1 holds three observed rows and (from a = 2) two intervened rows
        let a = vec![0.0, 1.0, 1.0, 1.0, 2.0, 2.0];
        let data = single_time(a);
        let shifted = shifted_exposures(&data, &Policy::clamped_decrement()).unwrap();
        let folds = FoldPlan::no_crossfit(6, 0);
        let lib = |_| LearnerLibrary::single(LearnerSpec::saturated_on(&["A1"]));
        let r = estimate_density_ratios(&data, &shifted, &folds, &lib, 0.0, None, None).unwrap();
        // a = 0: 1 observed, 1 + 3 intervened
        assert!((r.ratio(1)[0] - 4.0).abs() < 1e-12);
        assert!((r.ratio(1)[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.ratio(1)[4], 0.0);
    }

    #[test]
    fn truncation_caps_ratios() {
        let r = RatioEstimates::new(vec![vec![0.5, 3.0, 10.0]], Some(2.0)).unwrap();
        assert_eq!(r.ratio(1), &[0.5, 2.0, 2.0]);
        assert_eq!(r.capped(), 2);
        assert!(RatioEstimates::new(vec![vec![-1.0]], None).is_err());
    }

    #[test]
    fn cumulative_products_and_summary() {
        let r = RatioEstimates::new(vec![vec![1.0, 2.0], vec![3.0, 0.5]], None).unwrap();
        assert_eq!(r.cumulative(), vec![vec![1.0, 2.0], vec![3.0, 1.0]]);
        let s = r.summary();
        assert_eq!(s.max, 3.0);
        assert_eq!(s.mean, 2.0);
        assert!((s.cv - 2f64.sqrt() / 2.0).abs() < 1e-12);
    }
}
