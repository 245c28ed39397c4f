//! Regression and classification learners used for nuisance estimation.
//!
//! Every learner is deterministic given its inputs. Regression targets are
//! expected on the scaled outcome range; classifier probabilities are kept
//! inside `[p_floor, 1 - p_floor]`.

mod glm;
mod stack;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use glm::{expit, logit};
pub use stack::{cv_stack, StackLoss, StackWeights};

use glm::LinearPredictor;

/// Default classifier probability floor.
pub const DEFAULT_P_FLOOR: f64 = 1e-3;

fn default_ridge() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    InterceptOnly,
    Logistic {
        #[serde(default = "default_ridge")]
        ridge: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    Linear {
        #[serde(default = "default_ridge")]
        ridge: f64,
    },
    /// Cell means over exact value tuples of the key columns (all columns by
    /// default). Key names may contain `{t}`, `{t-1}` or `{t+1}`, resolved per
    /// time point; a categorical variable's name selects all of its indicator
    /// columns, and keys absent from the design are ignored.
    Saturated {
        #[serde(default)]
        keys: Option<Vec<String>>,
        /// Pseudo-weight shrinking each cell toward the overall mean.
        #[serde(default)]
        prior: f64,
    },
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        LearnerSpec::Logistic {
            ridge: default_ridge(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn linear() -> Self {
        LearnerSpec::Linear {
            ridge: default_ridge(),
        }
    }

    pub fn saturated() -> Self {
        LearnerSpec::Saturated {
            keys: None,
            prior: 0.0,
        }
    }

    pub fn saturated_on(keys: &[&str]) -> Self {
        LearnerSpec::Saturated {
            keys: Some(keys.iter().map(|k| k.to_string()).collect()),
            prior: 0.0,
        }
    }

    /// Sets the shrinkage pseudo-weight of a saturated learner; other
    /// learners are returned unchanged.
    pub fn with_prior(self, prior: f64) -> Self {
        match self {
            LearnerSpec::Saturated { keys, .. } => LearnerSpec::Saturated { keys, prior },
            other => other,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::InterceptOnly => "intercept_only",
            LearnerSpec::Logistic { .. } => "logistic",
            LearnerSpec::Linear { .. } => "linear",
            LearnerSpec::Saturated { .. } => "saturated",
        }
    }

    /// Substitutes the time placeholders in saturation keys.
    pub fn for_time(&self, t: usize) -> Self {
        match self {
            LearnerSpec::Saturated {
                keys: Some(keys),
                prior,
            } => LearnerSpec::Saturated {
                prior: *prior,
                keys: Some(
                    keys.iter()
                        .map(|k| {
                            k.replace("{t-1}", &t.saturating_sub(1).to_string())
                                .replace("{t+1}", &(t + 1).to_string())
                                .replace("{t}", &t.to_string())
                        })
                        .collect(),
                ),
            },
            other => other.clone(),
        }
    }
}

impl std::str::FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intercept_only" | "intercept" | "mean" => Ok(LearnerSpec::InterceptOnly),
            "logistic" | "glm" => Ok(LearnerSpec::logistic()),
            "linear" | "ridge" => Ok(LearnerSpec::linear()),
            "saturated" => Ok(LearnerSpec::saturated()),
            other => Err(Error::Config(format!("unknown learner {other:?}"))),
        }
    }
}

/// Accepts either a bare learner name or a tagged object.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
enum SpecInput {
    Name(String),
    Full(LearnerSpec),
}

pub fn deserialize_specs<'de, D: serde::Deserializer<'de>>(
    d: D,
) -> std::result::Result<Vec<LearnerSpec>, D::Error> {
    let raw = Vec::<SpecInput>::deserialize(d)?;
    raw.into_iter()
        .map(|s| match s {
            SpecInput::Name(n) => n.parse().map_err(serde::de::Error::custom),
            SpecInput::Full(spec) => Ok(spec),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    Regression,
    Classification { p_floor: f64 },
}

impl Task {
    pub fn classification() -> Self {
        Task::Classification {
            p_floor: DEFAULT_P_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    Constant(f64),
    Logistic(LinearPredictor),
    Linear(LinearPredictor),
    Saturated {
        keys: Vec<usize>,
        cells: HashMap<Vec<u64>, f64>,
        fallback: f64,
    },
    Ensemble {
        weights: Vec<f64>,
        members: Vec<FittedModel>,
    },
}

/// A fitted learner. Predictions are pure and clamped to `clamp`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    name: String,
    model: Model,
    clamp: (f64, f64),
}

impl fmt::Display for FittedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

fn cell_key(row: &[f64], keys: &[usize]) -> Vec<u64> {
    // +0.0 folds negative zero into the same cell
    keys.iter().map(|&j| (row[j] + 0.0).to_bits()).collect()
}

impl FittedModel {
    pub(crate) fn ensemble(
        weights: Vec<f64>,
        members: Vec<FittedModel>,
        clamp: (f64, f64),
    ) -> Self {
        Self {
            name: "stack".into(),
            model: Model::Ensemble { weights, members },
            clamp,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Prediction before clamping.
    pub fn predict_row_raw(&self, row: &[f64]) -> f64 {
        match &self.model {
            Model::Constant(c) => *c,
            Model::Logistic(lp) => glm::expit(lp.eta(row)),
            Model::Linear(lp) => lp.eta(row),
            Model::Saturated {
                keys,
                cells,
                fallback,
            } => cells
                .get(&cell_key(row, keys))
                .copied()
                .unwrap_or(*fallback),
            Model::Ensemble { weights, members } => weights
                .iter()
                .zip(members)
                .map(|(w, m)| w * m.predict_row(row))
                .sum(),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_row_raw(row).clamp(self.clamp.0, self.clamp.1)
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_raw(&self, x: &Matrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row_raw(r)).collect()
    }
}

fn check_inputs(x: &Matrix, y: &[f64], w: &[f64]) -> Result<f64> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::Internal(format!(
            "learner inputs disagree: {} rows, {} targets, {} weights",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::Input(
            "learner weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Input("total learner weight is zero".into()));
    }
    if y.iter().zip(w).any(|(v, wi)| *wi > 0.0 && !v.is_finite()) {
        return Err(Error::Input("learner targets must be finite".into()));
    }
    Ok(total)
}

fn weighted_mean(y: &[f64], w: &[f64], total: f64) -> f64 {
    y.iter()
        .zip(w)
        .filter(|(_, wi)| **wi > 0.0)
        .map(|(v, wi)| v * wi)
        .sum::<f64>()
        / total
}

/// Drops zero-weight rows so they cannot influence standardization or cells.
fn positive_rows(x: &Matrix, y: &[f64], w: &[f64]) -> (Matrix, Vec<f64>, Vec<f64>) {
    let idx: Vec<usize> = (0..w.len()).filter(|&i| w[i] > 0.0).collect();
    (
        x.select_rows(&idx),
        idx.iter().map(|&i| y[i]).collect(),
        idx.iter().map(|&i| w[i]).collect(),
    )
}

/// Columns named by a saturation key: the exact column, or every indicator
/// column `key=level` of a one-hot expanded categorical variable.
fn key_columns(x: &Matrix, key: &str) -> Vec<usize> {
    if let Some(j) = x.column_index(key) {
        return vec![j];
    }
    let prefix = format!("{key}=");
    (0..x.ncols())
        .filter(|&j| x.names()[j].starts_with(&prefix))
        .collect()
}

/// Fits one learner. For classification, `y` holds 0/1 labels.
pub fn fit(
    spec: &LearnerSpec,
    task: Task,
    x: &Matrix,
    y: &[f64],
    w: &[f64],
) -> Result<FittedModel> {
    check_inputs(x, y, w)?;
    let (x, y, w) = positive_rows(x, y, w);
    let total: f64 = w.iter().sum();
    let clamp = match task {
        Task::Regression => y
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            }),
        Task::Classification { p_floor } => {
            if !(0.0..0.5).contains(&p_floor) {
                return Err(Error::Config(format!(
                    "p_floor must lie in [0, 0.5), got {p_floor}"
                )));
            }
            if y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Input("classification labels must be 0 or 1".into()));
            }
            (p_floor, 1.0 - p_floor)
        }
    };
    let model = match spec {
        LearnerSpec::InterceptOnly => Model::Constant(weighted_mean(&y, &w, total)),
        LearnerSpec::Logistic {
            ridge,
            max_iter,
            tol,
        } => {
            let yc: Vec<f64> = y.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            Model::Logistic(glm::fit_logistic(&x, &yc, &w, *ridge, *max_iter, *tol)?)
        }
        LearnerSpec::Linear { ridge } => Model::Linear(glm::fit_linear(&x, &y, &w, *ridge)?),
        LearnerSpec::Saturated { keys, prior } => {
            let key_idx: Vec<usize> = match keys {
                None => (0..x.ncols()).collect(),
                Some(names) => {
                    let mut idx: Vec<usize> =
                        names.iter().flat_map(|k| key_columns(&x, k)).collect();
                    idx.sort_unstable();
                    idx.dedup();
                    idx
                }
            };
            let mut sums: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
            for (i, row) in x.rows().enumerate() {
                let e = sums.entry(cell_key(row, &key_idx)).or_insert((0.0, 0.0));
                e.0 += w[i] * y[i];
                e.1 += w[i];
            }
            let fallback = weighted_mean(&y, &w, total);
            let cells = sums
                .into_iter()
                .map(|(k, (sy, sw))| (k, (sy + prior * fallback) / (sw + prior)))
                .collect();
            Model::Saturated {
                keys: key_idx,
                cells,
                fallback,
            }
        }
    };
    Ok(FittedModel {
        name: spec.name().to_string(),
        model,
        clamp,
    })
}

/// A learner menu, optionally combined by cross-validated stacking.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerLibrary {
    pub specs: Vec<LearnerSpec>,
    pub stack: bool,
    /// Folds used inside the stack.
    pub inner_folds: usize,
}

impl LearnerLibrary {
    pub fn single(spec: LearnerSpec) -> Self {
        Self {
            specs: vec![spec],
            stack: false,
            inner_folds: 5,
        }
    }

    pub fn stacked(specs: Vec<LearnerSpec>) -> Self {
        Self {
            specs,
            stack: true,
            inner_folds: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.specs.is_empty() {
            return Err(Error::Config("learner library is empty".into()));
        }
        if !self.stack && self.specs.len() > 1 {
            return Err(Error::Config(
                "several learners given without stacking enabled".into(),
            ));
        }
        for spec in &self.specs {
            if let LearnerSpec::Saturated { prior, .. } = spec {
                if !(prior.is_finite() && *prior >= 0.0) {
                    return Err(Error::Config(format!(
                        "saturated prior must be finite and nonnegative, got {prior}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn for_time(&self, t: usize) -> Self {
        Self {
            specs: self.specs.iter().map(|s| s.for_time(t)).collect(),
            ..self.clone()
        }
    }

    pub fn fit(
        &self,
        task: Task,
        x: &Matrix,
        y: &[f64],
        w: &[f64],
        seed: u64,
    ) -> Result<FittedModel> {
        self.validate()?;
        if self.stack && self.specs.len() > 1 {
            let loss = match task {
                Task::Regression => StackLoss::Squared,
                Task::Classification { .. } => StackLoss::Log,
            };
            cv_stack(&self.specs, task, x, y, w, self.inner_folds, seed, loss).map(|(_, m)| m)
        } else {
            fit(&self.specs[0], task, x, y, w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::column("x", values.to_vec())
    }

    #[test]
    fn intercept_only_is_weighted_mean() {
        let m = fit(
            &LearnerSpec::InterceptOnly,
            Task::Regression,
            &Matrix::empty(4),
            &[0.0, 1.0, 1.0, 0.0],
            &[1.0; 4],
        )
        .unwrap();
        assert_eq!(m.predict_row(&[]), 0.5);
    }

    #[test]
    fn logistic_separable_is_monotone() {
        let x = col(&[0.0, 0.0, 1.0, 1.0]);
        let m = fit(
            &LearnerSpec::logistic(),
            Task::Regression,
            &x,
            &[0.0, 0.0, 1.0, 1.0],
            &[1.0; 4],
        )
        .unwrap();
        let p0 = m.predict_row(&[0.0]);
        let p1 = m.predict_row(&[1.0]);
        assert!(p0 < p1, "{p0} {p1}");
        assert!(p0 < 0.05 && p1 > 0.95);
    }

    #[test]
    fn logistic_without_ridge_reports_non_convergence() {
        let x = col(&[0.0, 0.0, 1.0, 1.0]);
        let spec = LearnerSpec::Logistic {
            ridge: 0.0,
            max_iter: 10,
            tol: 1e-12,
        };
        match fit(
            &spec,
            Task::Regression,
            &x,
            &[0.0, 0.0, 1.0, 1.0],
            &[1.0; 4],
        ) {
            Err(Error::NotConverged {
                iterations,
                deviance,
            }) => {
                assert_eq!(iterations, 10);
                assert!(deviance >= 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn intercept_logistic_reproduces_logit_of_mean() {
        let y = [0.2, 0.9, 0.4, 0.7, 0.1];
        let w = [1.0, 2.0, 0.5, 1.5, 1.0];
        let m = fit(
            &LearnerSpec::logistic(),
            Task::Regression,
            &Matrix::empty(5),
            &y,
            &w,
        )
        .unwrap();
        let mean = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        assert!((logit(m.predict_row_raw(&[])) - logit(mean)).abs() < 1e-10);
    }

    #[test]
    fn saturated_cell_means() {
        let x = col(&[0.0, 0.0, 1.0]);
        let m = fit(
            &LearnerSpec::saturated(),
            Task::Regression,
            &x,
            &[0.2, 0.4, 1.0],
            &[1.0; 3],
        )
        .unwrap();
        assert!((m.predict_row(&[0.0]) - 0.3).abs() < 1e-15);
        assert_eq!(m.predict_row(&[1.0]), 1.0);
        // empty cell falls back to the global mean
        assert!((m.predict_row(&[2.0]) - 1.6 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn saturated_keys_select_columns() {
        let x = Matrix::new(
            4,
            vec!["A2".into(), "noise".into()],
            vec![0.0, 1.0, 0.0, 2.0, 1.0, 3.0, 1.0, 4.0],
        );
        let spec = LearnerSpec::saturated_on(&["A{t}", "A{t-1}"]).for_time(2);
        let m = fit(
            &spec,
            Task::Regression,
            &x,
            &[0.0, 1.0, 1.0, 1.0],
            &[1.0; 4],
        )
        .unwrap();
        assert_eq!(m.predict_row(&[0.0, 99.0]), 0.5);
        assert_eq!(m.predict_row(&[1.0, -5.0]), 1.0);
    }

    #[test]
    fn classifier_outputs() {
        let m = fit(
            &LearnerSpec::InterceptOnly,
            Task::classification(),
            &Matrix::empty(4),
            &[0.0, 1.0, 0.0, 1.0],
            &[1.0; 4],
        )
        .unwrap();
        assert_eq!(m.predict_row(&[]), 0.5);

        let x = col(&[1.0; 7]);
        let labels = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        let m = fit(
            &LearnerSpec::saturated(),
            Task::classification(),
            &x,
            &labels,
            &[1.0; 7],
        )
        .unwrap();
        assert!((m.predict_row(&[1.0]) - 6.0 / 7.0).abs() < 1e-15);

        let m = fit(
            &LearnerSpec::InterceptOnly,
            Task::classification(),
            &Matrix::empty(3),
            &[1.0; 3],
            &[1.0; 3],
        )
        .unwrap();
        assert_eq!(m.predict_row(&[]), 1.0 - DEFAULT_P_FLOOR);
    }

    #[test]
    fn zero_total_weight_is_an_error() {
        let err = fit(
            &LearnerSpec::InterceptOnly,
            Task::Regression,
            &Matrix::empty(2),
            &[0.0, 1.0],
            &[0.0, 0.0],
        );
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn linear_recovers_line_and_clamps() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
        let y: Vec<f64> = xs.iter().map(|x| 0.1 + 0.5 * x).collect();
        let m = fit(
            &LearnerSpec::linear(),
            Task::Regression,
            &col(&xs),
            &y,
            &[1.0; 20],
        )
        .unwrap();
        assert!((m.predict_row(&[0.5]) - 0.35).abs() < 1e-6);
        assert_eq!(m.predict_row(&[10.0]), 0.6);
    }

    #[test]
    fn spec_parsing() {
        #[derive(Deserialize)]
        struct W {
            #[serde(deserialize_with = "deserialize_specs")]
            learners: Vec<LearnerSpec>,
        }
        let w: W = serde_json::from_str(
            r#"{"learners":["logistic","saturated",{"kind":"saturated","keys":["A{t}"]},{"kind":"linear","ridge":0.1}]}"#,
        )
        .unwrap();
        assert_eq!(w.learners[0], LearnerSpec::logistic());
        assert_eq!(w.learners[1], LearnerSpec::saturated());
        assert_eq!(w.learners[2], LearnerSpec::saturated_on(&["A{t}"]));
        assert_eq!(w.learners[3], LearnerSpec::Linear { ridge: 0.1 });
        assert!(serde_json::from_str::<W>(r#"{"learners":["boosting"]}"#).is_err());
    }
}
