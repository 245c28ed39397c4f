//! Estimation of the effects of longitudinal modified treatment policies.
//!
//! A [`Policy`](policy::Policy) maps each natural exposure and its history
//! to an intervened exposure. The mean outcome under the policy is
//! identified by a sequence of outcome regressions and estimated here by
//! substitution, inverse probability weighting, targeted minimum loss
//! estimation and a sequentially doubly robust estimator, all with
//! cross-fitted nuisances. Density ratios come from a classifier that
//! separates observed from intervened exposures.

pub mod crossfit;
pub mod data;
pub mod density_ratio;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod matrix;
pub mod policy;
pub mod simulation;

pub use crossfit::{make_folds, FoldPlan};
pub use data::{load_longitudinal_csv, LongitudinalData, OutcomeScaler, Schema};
pub use error::{Error, ErrorKind, Result};
pub use estimators::{
    estimate, EstimateResult, EstimationOptions, EstimatorKind, NuisanceLearners, Problem,
};
pub use learners::{LearnerLibrary, LearnerSpec};
pub use policy::Policy;
