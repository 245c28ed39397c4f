//! Cross-validated convex stacking.

use crate::crossfit::make_folds;
use crate::error::Result;
use crate::matrix::Matrix;

use super::{fit, FittedModel, LearnerSpec, Task};

const EG_ITERATIONS: usize = 500;
const EG_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackLoss {
    Squared,
    Log,
}

impl StackLoss {
    fn loss(self, p: f64, y: f64) -> f64 {
        match self {
            StackLoss::Squared => (p - y).powi(2),
            StackLoss::Log => {
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            }
        }
    }

    fn derivative(self, p: f64, y: f64) -> f64 {
        match self {
            StackLoss::Squared => 2.0 * (p - y),
            StackLoss::Log => {
                let p = p.clamp(1e-15, 1.0 - 1e-15);
                (p - y) / (p * (1.0 - p))
            }
        }
    }
}

/// Simplex weights chosen by cross-validated risk.
#[derive(Debug, Clone, PartialEq)]
pub struct StackWeights {
    pub learners: Vec<String>,
    pub weights: Vec<f64>,
    /// Cross-validated risk of each learner alone.
    pub cv_risk: Vec<f64>,
    /// Cross-validated risk of the weighted combination.
    pub ensemble_risk: f64,
}

fn risk(preds: &[Vec<f64>], weights: &[f64], y: &[f64], w: &[f64], loss: StackLoss) -> f64 {
    let total: f64 = w.iter().sum();
    (0..y.len())
        .map(|i| {
            let p: f64 = weights.iter().zip(preds).map(|(a, z)| a * z[i]).sum();
            w[i] * loss.loss(p, y[i])
        })
        .sum::<f64>()
        / total
}

/// Minimizes the cross-validated risk of a convex combination of `specs` by
/// exponentiated-gradient descent from uniform weights, then refits every
/// member with positive weight on all rows. Constant targets short-circuit
/// to an intercept-only model.
#[allow(clippy::too_many_arguments)]
pub fn cv_stack(
    specs: &[LearnerSpec],
    task: Task,
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    folds: usize,
    seed: u64,
    loss: StackLoss,
) -> Result<(StackWeights, FittedModel)> {
    let active: Vec<usize> = (0..y.len()).filter(|&i| w[i] > 0.0).collect();
    let first = active.first().map(|&i| y[i]);
    if specs.is_empty() || first.is_none() {
        return Err(crate::error::Error::Config(
            "stacking needs at least one learner and one row".into(),
        ));
    }
    if active.iter().all(|&i| y[i] == first.unwrap()) {
        let model = fit(&LearnerSpec::InterceptOnly, task, x, y, w)?;
        let weights = StackWeights {
            learners: vec!["intercept_only".into()],
            weights: vec![1.0],
            cv_risk: vec![0.0],
            ensemble_risk: 0.0,
        };
        return Ok((weights, model));
    }
    if specs.len() == 1 || active.len() < 2 {
        let model = fit(&specs[0], task, x, y, w)?;
        let weights = StackWeights {
            learners: vec![specs[0].name().into()],
            weights: vec![1.0],
            cv_risk: vec![f64::NAN],
            ensemble_risk: f64::NAN,
        };
        return Ok((weights, model));
    }

    // out-of-fold predictions over the positively weighted rows
    let xa = x.select_rows(&active);
    let ya: Vec<f64> = active.iter().map(|&i| y[i]).collect();
    let wa: Vec<f64> = active.iter().map(|&i| w[i]).collect();
    let plan = make_folds(ya.len(), folds.min(ya.len()), seed)?;
    let k = specs.len();
    let mut preds = vec![vec![0.0; ya.len()]; k];
    for j in 0..plan.n_folds() {
        let train = plan.training(j);
        let valid = plan.validation(j);
        let xt = xa.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| ya[i]).collect();
        let wt: Vec<f64> = train.iter().map(|&i| wa[i]).collect();
        for (s, spec) in specs.iter().enumerate() {
            let m = fit(spec, task, &xt, &yt, &wt).map_err(|e| e.in_fold(j))?;
            for &i in &valid {
                preds[s][i] = m.predict_row(xa.row(i));
            }
        }
    }

    let total: f64 = wa.iter().sum();
    let mut alpha = vec![1.0 / k as f64; k];
    for _ in 0..EG_ITERATIONS {
        let mut grad = vec![0.0; k];
        for i in 0..ya.len() {
            let p: f64 = alpha.iter().zip(&preds).map(|(a, z)| a * z[i]).sum();
            let d = wa[i] * loss.derivative(p, ya[i]) / total;
            for s in 0..k {
                grad[s] += d * preds[s][i];
            }
        }
        let gmin = grad.iter().copied().fold(f64::INFINITY, f64::min);
        for s in 0..k {
            alpha[s] *= (-EG_STEP * (grad[s] - gmin)).exp();
        }
        let norm: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= norm);
    }

    let cv_risk: Vec<f64> = (0..k)
        .map(|s| {
            let mut e = vec![0.0; k];
            e[s] = 1.0;
            risk(&preds, &e, &ya, &wa, loss)
        })
        .collect();
    let mut ensemble_risk = risk(&preds, &alpha, &ya, &wa, loss);
    let (best, best_risk) =
        cv_risk
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (s, r)| if r < acc.1 { (s, r) } else { acc },
            );
    if best_risk < ensemble_risk {
        alpha = vec![0.0; k];
        alpha[best] = 1.0;
        ensemble_risk = best_risk;
    }

    let mut members = Vec::new();
    let mut member_weights = Vec::new();
    for (s, spec) in specs.iter().enumerate() {
        if alpha[s] > 0.0 {
            members.push(fit(spec, task, x, y, w)?);
            member_weights.push(alpha[s]);
        }
    }
    let clamp = members
        .iter()
        .map(|m| m.clamp)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a), hi.max(b))
        });
    let weights = StackWeights {
        learners: specs.iter().map(|s| s.name().to_string()).collect(),
        weights: alpha,
        cv_risk,
        ensemble_risk,
    };
    Ok((
        weights,
        FittedModel::ensemble(member_weights, members, clamp),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cell_data(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = [0.1, 0.5, 0.9, 0.3];
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..4usize);
            xs.push(c as f64);
            ys.push(means[c] + rng.random_range(-0.1..0.1));
        }
        (Matrix::column("cell", xs), ys)
    }

    #[test]
    fn single_learner_gets_full_weight() {
        let (x, y) = cell_data(100, 1);
        let (w, _) = cv_stack(
            &[LearnerSpec::saturated()],
            Task::Regression,
            &x,
            &y,
            &vec![1.0; 100],
            5,
            0,
            StackLoss::Squared,
        )
        .unwrap();
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn identical_learners_split_evenly() {
        let (x, y) = cell_data(200, 2);
        let specs = [LearnerSpec::saturated(), LearnerSpec::saturated()];
        let (w, _) = cv_stack(
            &specs,
            Task::Regression,
            &x,
            &y,
            &vec![1.0; 200],
            5,
            3,
            StackLoss::Squared,
        )
        .unwrap();
        assert!((w.weights[0] - 0.5).abs() < 1e-12 && (w.weights[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn saturated_truth_dominates_intercept() {
        let (x, y) = cell_data(2000, 4);
        let specs = [LearnerSpec::InterceptOnly, LearnerSpec::saturated()];
        let (w, model) = cv_stack(
            &specs,
            Task::Regression,
            &x,
            &y,
            &vec![1.0; 2000],
            5,
            5,
            StackLoss::Squared,
        )
        .unwrap();
        assert!(w.weights[1] >= 0.9, "{:?}", w.weights);
        let min_single = w.cv_risk.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(w.ensemble_risk <= min_single + 1e-6);
        assert!((model.predict_row(&[2.0]) - 0.9).abs() < 0.05);
    }

    #[test]
    fn constant_target_degenerates_to_intercept() {
        let x = Matrix::column("a", vec![0.0, 1.0, 2.0, 3.0]);
        let (w, m) = cv_stack(
            &[LearnerSpec::linear(), LearnerSpec::saturated()],
            Task::Regression,
            &x,
            &[0.4; 4],
            &[1.0; 4],
            2,
            0,
            StackLoss::Squared,
        )
        .unwrap();
        assert_eq!(w.learners, vec!["intercept_only".to_string()]);
        assert_eq!(m.predict_row(&[7.0]), 0.4);
    }

    #[test]
    fn log_loss_stack_for_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 1000;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..3usize) as f64).collect();
        let labels: Vec<f64> = xs
            .iter()
            .map(|&c| {
                if rng.random::<f64>() < 0.2 + 0.3 * c {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let x = Matrix::column("c", xs);
        let specs = [
            LearnerSpec::InterceptOnly,
            LearnerSpec::saturated(),
            LearnerSpec::logistic(),
        ];
        let (w, m) = cv_stack(
            &specs,
            Task::classification(),
            &x,
            &labels,
            &vec![1.0; n],
            5,
            1,
            StackLoss::Log,
        )
        .unwrap();
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        assert!(w.weights.iter().all(|&a| a >= 0.0));
        assert!(w.weights[0] < 0.2, "{:?}", w.weights);
        let p = m.predict_row(&[2.0]);
        assert!(p > 0.6 && p < 0.95, "{p}");
    }
}
