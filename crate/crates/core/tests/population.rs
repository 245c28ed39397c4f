//! Estimators evaluated at the population law of small discrete models,
//! compared against exact enumeration.

use lmtp::estimators::{estimate, EstimationOptions, EstimatorKind, NuisanceLearners, Problem};
use lmtp::simulation::{population_dataset, ExactModel, SequentialModel, ToyModel};
use lmtp::{FoldPlan, Policy};

fn population_estimates(model: &ToyModel, policy: &Policy) -> (f64, Vec<f64>) {
    let exact = ExactModel::new(model, policy).unwrap();
    let (data, weights) = population_dataset(model, &exact).unwrap();
    let folds = FoldPlan::no_crossfit(data.n(), 0);
    let options = EstimationOptions {
        p_floor: 0.0,
        ..EstimationOptions::default()
    };
    let problem = Problem::new(&data, policy, &folds, options.scale_margin)
        .unwrap()
        .with_weights(weights)
        .unwrap();
    let results = estimate(
        &problem,
        &NuisanceLearners::saturated(),
        &options,
        &EstimatorKind::ALL,
    )
    .unwrap();
    (exact.theta(), results.iter().map(|r| r.theta).collect())
}

#[test]
fn all_estimators_recover_the_enumerated_mean() {
    for seed in 0..5 {
        let toy = ToyModel::random(seed);
        for policy in [Policy::clamped_decrement(), Policy::identity()] {
            let (theta, estimates) = population_estimates(&toy, &policy);
            for (kind, est) in EstimatorKind::ALL.iter().zip(&estimates) {
                assert!(
                    (est - theta).abs() < 1e-10,
                    "seed {seed} {kind}: {est} vs {theta}"
                );
            }
        }
    }
}

#[test]
fn identity_policy_targets_the_outcome_mean() {
    let toy = ToyModel::random(9);
    let exact = ExactModel::new(&toy, &Policy::identity()).unwrap();
    let ey: f64 = exact.trajectories().iter().map(|(z, q)| q * z[4]).sum();
    assert!((exact.theta() - ey).abs() < 1e-14);
}

#[test]
fn efficiency_bound_is_positive_for_the_toy() {
    let toy = ToyModel::random(2);
    let exact = ExactModel::new(&toy, &Policy::clamped_decrement()).unwrap();
    assert!(exact.efficiency_bound() > 0.0);
    assert_eq!(toy.tau(), 2);
}

#[test]
fn unnormalized_model_is_rejected() {
    let toy = ToyModel::random(1)
        .with_outcome_probabilities(&[0.0, 0.0, 0.0, 0.0], vec![0.5, 0.6])
        .unwrap();
    assert!(ExactModel::new(&toy, &Policy::identity()).is_err());
}
