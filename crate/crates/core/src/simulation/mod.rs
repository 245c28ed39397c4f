//! Data-generating models, exact functionals and replicated simulation studies.

mod exact;
mod model;
mod scenario;
mod toy;

pub use exact::{ExactModel, Nuisance, PerturbedNuisance};
pub use model::{
    generate_dataset, oracle_theta_mc, sample_trajectory, trajectories_to_data, BenchmarkDgp,
    MonteCarloEstimate, Pmf, SequentialModel,
};
pub use scenario::{
    consistent_outcome_learner, consistent_ratio_learner, run_replication, run_scenario, summarize,
    write_metrics_csv, MetricsRow, ReplicateEstimate, ScenarioSpec, SimulationTruth, StudyConfig,
    FOLD_SEED_OFFSET, MAX_FAILURE_RATE, RATIO_PRIOR,
};
pub use toy::{ToyModel, TOY_COVARIATES, TOY_EXPOSURES};

use crate::data::LongitudinalData;
use crate::error::Result;

/// One row per positive-probability trajectory, with the trajectory
/// probabilities as observation weights. Estimating on this dataset without
/// cross-fitting evaluates estimators at the population law.
pub fn population_dataset<M: SequentialModel + ?Sized>(
    model: &M,
    exact: &ExactModel,
) -> Result<(LongitudinalData, Vec<f64>)> {
    let (rows, weights): (Vec<Vec<f64>>, Vec<f64>) = exact.trajectories().iter().cloned().unzip();
    Ok((trajectories_to_data(model, &rows)?, weights))
}
