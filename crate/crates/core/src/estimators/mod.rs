//! Substitution, IPW, TMLE and sequentially doubly robust estimators of
//! `theta = E[m_1(A_1^d, L_1)]`, with influence-function inference.
//!
//! Regressions work on the scaled outcome `(y - a) / (b - a) (1 - 2 eps) + eps`;
//! reported estimates are on the original scale.

mod gcomp;
mod sdr;
mod tmle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::crossfit::FoldPlan;
use crate::data::{LongitudinalData, OutcomeScaler, DEFAULT_SCALE_MARGIN};
use crate::density_ratio::{estimate_density_ratios, RatioEstimates, WeightSummary};
use crate::error::{Error, Result};
use crate::learners::{LearnerLibrary, LearnerSpec, DEFAULT_P_FLOOR};
use crate::matrix::Matrix;
use crate::policy::{shifted_exposures, support_violations, Policy};

pub use gcomp::gcomp_sequential;
pub use sdr::sdr_estimate;
pub use tmle::{tilt_step, tmle_estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Sub,
    Ipw,
    Tmle,
    Sdr,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [
        EstimatorKind::Sub,
        EstimatorKind::Ipw,
        EstimatorKind::Tmle,
        EstimatorKind::Sdr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Sub => "sub",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Tmle => "tmle",
            EstimatorKind::Sdr => "sdr",
        }
    }

    /// Whether the estimator comes with an influence-function interval.
    pub fn has_interval(self) -> bool {
        matches!(self, EstimatorKind::Tmle | EstimatorKind::Sdr)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sub" => Ok(EstimatorKind::Sub),
            "ipw" => Ok(EstimatorKind::Ipw),
            "tmle" => Ok(EstimatorKind::Tmle),
            "sdr" => Ok(EstimatorKind::Sdr),
            other => Err(Error::Config(format!(
                "unknown estimator {other:?}; expected sub, ipw, tmle or sdr"
            ))),
        }
    }
}

/// Learners for the outcome regressions and the ratio classifier. A single
/// library applies at every time point; otherwise one library per time.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceLearners {
    pub outcome: Vec<LearnerLibrary>,
    pub ratio: Vec<LearnerLibrary>,
}

impl NuisanceLearners {
    pub fn uniform(outcome: LearnerLibrary, ratio: LearnerLibrary) -> Self {
        Self {
            outcome: vec![outcome],
            ratio: vec![ratio],
        }
    }

    /// Saturated learners on every column of the design.
    pub fn saturated() -> Self {
        Self::uniform(
            LearnerLibrary::single(LearnerSpec::saturated()),
            LearnerLibrary::single(LearnerSpec::saturated()),
        )
    }

    fn pick(libs: &[LearnerLibrary], t: usize) -> LearnerLibrary {
        let k = if libs.len() == 1 { 0 } else { t - 1 };
        libs[k].for_time(t)
    }

    pub fn outcome_at(&self, t: usize) -> LearnerLibrary {
        Self::pick(&self.outcome, t)
    }

    pub fn ratio_at(&self, t: usize) -> LearnerLibrary {
        Self::pick(&self.ratio, t)
    }

    pub fn validate(&self, tau: usize) -> Result<()> {
        for (what, libs) in [("outcome", &self.outcome), ("ratio", &self.ratio)] {
            if libs.len() != 1 && libs.len() != tau {
                return Err(Error::Config(format!(
                    "{what} learners: give one library or one per time point ({tau}), got {}",
                    libs.len()
                )));
            }
            libs.iter().try_for_each(LearnerLibrary::validate)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOptions {
    pub level: f64,
    pub truncation: Option<f64>,
    pub p_floor: f64,
    pub scale_margin: f64,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            truncation: None,
            p_floor: DEFAULT_P_FLOOR,
            scale_margin: DEFAULT_SCALE_MARGIN,
        }
    }
}

/// Data, policy and fold plan shared by every estimator of one run, with
/// the intervened exposures and design matrices precomputed.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub data: &'a LongitudinalData,
    pub folds: &'a FoldPlan,
    pub scaler: OutcomeScaler,
    /// `A_t^d` per time, `NaN` where unavailable.
    pub shifted: Vec<Vec<f64>>,
    /// Scaled outcome, `NaN` where unobserved.
    pub y_scaled: Vec<f64>,
    /// Observation weights; population-level runs use probabilities.
    pub weights: Vec<f64>,
    pub(crate) observed_design: Vec<Matrix>,
    pub(crate) shifted_design: Vec<Matrix>,
}

impl<'a> Problem<'a> {
    pub fn new(
        data: &'a LongitudinalData,
        policy: &Policy,
        folds: &'a FoldPlan,
        scale_margin: f64,
    ) -> Result<Self> {
        let policy = policy
            .clone()
            .with_support(data.exposure_support().cloned())?;
        let shifted = shifted_exposures(data, &policy)?;
        let violations = support_violations(data, &shifted);
        if !violations.is_empty() {
            log::warn!(
                "{} intervened exposures fall outside the observed support",
                violations.len()
            );
        }
        Self::from_shifted(data, shifted, folds, scale_margin)
    }

    pub fn from_shifted(
        data: &'a LongitudinalData,
        shifted: Vec<Vec<f64>>,
        folds: &'a FoldPlan,
        scale_margin: f64,
    ) -> Result<Self> {
        if folds.n() != data.n() {
            return Err(Error::Internal(format!(
                "fold plan covers {} rows, data has {}",
                folds.n(),
                data.n()
            )));
        }
        let (lo, hi) = data.outcome_bounds();
        let scaler = OutcomeScaler::new(lo, hi, scale_margin)?;
        let y_scaled = data
            .outcome()
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if data.outcome_observed(i) {
                    scaler.scale(y)
                } else {
                    f64::NAN
                }
            })
            .collect();
        let observed_design = (1..=data.tau())
            .map(|t| data.design(t, data.exposure(t)))
            .collect();
        let shifted_design = (1..=data.tau())
            .map(|t| data.design(t, &shifted[t - 1]))
            .collect();
        Ok(Self {
            data,
            folds,
            scaler,
            shifted,
            y_scaled,
            weights: vec![1.0; data.n()],
            observed_design,
            shifted_design,
        })
    }

    /// Replaces the unit observation weights.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.data.n() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Input(
                "observation weights must be finite, nonnegative and one per row".into(),
            ));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Input("observation weights sum to zero".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn tau(&self) -> usize {
        self.data.tau()
    }

    fn unit_weights(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    pub(crate) fn mean(&self, x: &[f64]) -> f64 {
        weighted_mean(x, &self.weights)
    }

    /// Cross-fitted ratio estimates with the given learners.
    pub fn ratios(
        &self,
        learners: &NuisanceLearners,
        options: &EstimationOptions,
    ) -> Result<RatioEstimates> {
        let weights = (!self.unit_weights()).then_some(self.weights.as_slice());
        estimate_density_ratios(
            self.data,
            &self.shifted,
            self.folds,
            &|t| learners.ratio_at(t),
            options.p_floor,
            options.truncation,
            weights,
        )
    }
}

fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    x.iter()
        .zip(w)
        .filter(|(_, &wi)| wi != 0.0)
        .map(|(v, wi)| v * wi)
        .sum::<f64>()
        / total
}

/// Cross-fitted outcome regressions on the scaled outcome, per time
/// (outer index `t - 1`): `m_t(A_t, H_t)` and `m_t(A_t^d, H_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRegressions {
    pub observed: Vec<Vec<f64>>,
    pub shifted: Vec<Vec<f64>>,
}

impl OutcomeRegressions {
    pub fn observed_at(&self, t: usize) -> &[f64] {
        &self.observed[t - 1]
    }

    pub fn shifted_at(&self, t: usize) -> &[f64] {
        &self.shifted[t - 1]
    }
}

/// Nuisance estimates shared by the estimators of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceSet {
    pub ratios: RatioEstimates,
    pub regressions: OutcomeRegressions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `P_n phi_1 - theta` on the scaled outcome.
    pub score_residual: Option<f64>,
    pub weight_cv: Option<f64>,
    pub weight_max: Option<f64>,
    pub weight_deciles: Option<Vec<f64>>,
    pub ratios_capped: Option<usize>,
    pub fold_seed: u64,
    pub folds: usize,
    pub crossfit: bool,
    /// Fitted tilts, time 1 first.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilts: Option<Vec<f64>>,
    /// Set when the reported estimate was clamped to the outcome bounds.
    pub theta_clamped: bool,
}

impl Diagnostics {
    fn new(folds: &FoldPlan) -> Self {
        Self {
            score_residual: None,
            weight_cv: None,
            weight_max: None,
            weight_deciles: None,
            ratios_capped: None,
            fold_seed: folds.seed(),
            folds: folds.n_folds(),
            crossfit: folds.is_crossfit(),
            tilts: None,
            theta_clamped: false,
        }
    }

    fn with_weights(mut self, ratios: &RatioEstimates) -> Self {
        let WeightSummary {
            max, cv, deciles, ..
        } = ratios.summary();
        self.weight_cv = Some(cv);
        self.weight_max = Some(max);
        self.weight_deciles = Some(deciles);
        self.ratios_capped = Some(ratios.capped());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimator: EstimatorKind,
    pub theta: f64,
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub level: f64,
    pub n: usize,
    pub tau: usize,
    pub diagnostics: Diagnostics,
    /// `phi_1 - theta` per trajectory on the original outcome scale.
    #[serde(skip)]
    pub eif: Option<Vec<f64>>,
}

/// Standard normal quantile of `(1 + level) / 2`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf((1.0 + level) / 2.0))
}

/// Wald interval `theta +- z sd(eif) / sqrt(n)` with the sample standard
/// deviation (divisor `n - 1`). Returns `(se, low, high)`.
pub fn wald_interval(theta: f64, eif: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    weighted_wald(theta, eif, &vec![1.0; eif.len()], level)
}

fn weighted_wald(theta: f64, eif: &[f64], w: &[f64], level: f64) -> Result<(f64, f64, f64)> {
    let n = eif.len();
    if n < 2 {
        return Err(Error::Input(format!(
            "a Wald interval needs at least 2 observations, got {n}"
        )));
    }
    let z = normal_quantile(level)?;
    let mean = weighted_mean(eif, w);
    let total: f64 = w.iter().sum();
    let var = eif
        .iter()
        .zip(w)
        .map(|(v, wi)| wi * (v - mean).powi(2))
        .sum::<f64>()
        / total
        * n as f64
        / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    Ok((se, theta - z * se, theta + z * se))
}

/// `phi_1` per trajectory on the scaled outcome, from the telescoped form
/// `m_1(A_1^d) + sum_s omega_s (m_{s+1}(A_{s+1}^d) - m_s(A_s))` with
/// `m_{tau+1} = Y`. Terms with zero cumulative weight are skipped, so
/// unavailable cells never enter.
pub(crate) fn phi_one(
    problem: &Problem<'_>,
    ratios: &RatioEstimates,
    reg: &OutcomeRegressions,
) -> Result<Vec<f64>> {
    let n = problem.n();
    let tau = problem.tau();
    if ratios.tau() != tau || reg.observed.len() != tau || reg.shifted.len() != tau {
        return Err(Error::Internal(
            "nuisance containers disagree on tau".into(),
        ));
    }
    if (1..=tau).any(|t| {
        ratios.ratio(t).len() != n || reg.observed_at(t).len() != n || reg.shifted_at(t).len() != n
    }) {
        return Err(Error::Internal("nuisance vectors disagree on n".into()));
    }
    let omega = ratios.cumulative();
    Ok((0..n)
        .map(|i| {
            let mut phi = reg.shifted_at(1)[i];
            for s in 1..=tau {
                let w = omega[s - 1][i];
                if w == 0.0 {
                    break;
                }
                let next = if s == tau {
                    problem.y_scaled[i]
                } else {
                    reg.shifted_at(s + 1)[i]
                };
                phi += w * (next - reg.observed_at(s)[i]);
            }
            phi
        })
        .collect())
}

/// Per-trajectory `phi_1 - theta` on the scaled outcome.
pub fn eif_values(
    problem: &Problem<'_>,
    ratios: &RatioEstimates,
    regressions: &OutcomeRegressions,
    theta: f64,
) -> Result<Vec<f64>> {
    Ok(phi_one(problem, ratios, regressions)?
        .into_iter()
        .map(|p| p - theta)
        .collect())
}

/// Unscales a scaled-outcome estimate and its `phi_1` values into a result
/// with a Wald interval.
pub(crate) fn finish_with_interval(
    problem: &Problem<'_>,
    kind: EstimatorKind,
    theta_scaled: f64,
    phi: &[f64],
    level: f64,
    mut diagnostics: Diagnostics,
    clamp: bool,
) -> Result<EstimateResult> {
    let slope = problem.scaler.slope();
    let mut theta = problem.scaler.unscale(theta_scaled);
    let eif: Vec<f64> = phi.iter().map(|p| (p - theta_scaled) * slope).collect();
    if clamp {
        let (lo, hi) = problem.data.outcome_bounds();
        if theta < lo || theta > hi {
            theta = theta.clamp(lo, hi);
            diagnostics.theta_clamped = true;
        }
    }
    let (se, low, high) = weighted_wald(theta, &eif, &problem.weights, level)?;
    diagnostics.score_residual = Some(problem.mean(phi) - theta_scaled);
    Ok(EstimateResult {
        estimator: kind,
        theta,
        se: Some(se),
        ci: Some([low, high]),
        level,
        n: problem.n(),
        tau: problem.tau(),
        diagnostics,
        eif: Some(eif),
    })
}

/// `(1/n) sum_i (prod_t r_t) Y_i` on the original outcome scale.
pub fn ipw_estimate(
    problem: &Problem<'_>,
    ratios: &RatioEstimates,
    level: f64,
) -> Result<EstimateResult> {
    let omega = ratios.cumulative();
    let last = omega
        .last()
        .ok_or_else(|| Error::Internal("no ratios".into()))?;
    let y = problem.data.outcome();
    let contrib: Vec<f64> = (0..problem.n())
        .map(|i| if last[i] == 0.0 { 0.0 } else { last[i] * y[i] })
        .collect();
    Ok(EstimateResult {
        estimator: EstimatorKind::Ipw,
        theta: problem.mean(&contrib),
        se: None,
        ci: None,
        level,
        n: problem.n(),
        tau: problem.tau(),
        diagnostics: Diagnostics::new(problem.folds).with_weights(ratios),
        eif: None,
    })
}

/// Runs the requested estimators on one shared set of nuisance estimates.
pub fn estimate(
    problem: &Problem<'_>,
    learners: &NuisanceLearners,
    options: &EstimationOptions,
    kinds: &[EstimatorKind],
) -> Result<Vec<EstimateResult>> {
    learners.validate(problem.tau())?;
    normal_quantile(options.level)?;
    let needs_ratios = kinds.iter().any(|k| *k != EstimatorKind::Sub);
    let needs_chain = kinds
        .iter()
        .any(|k| matches!(k, EstimatorKind::Sub | EstimatorKind::Tmle));
    let ratios = needs_ratios
        .then(|| problem.ratios(learners, options))
        .transpose()?;
    let chain = needs_chain
        .then(|| gcomp_sequential(problem, learners, options.level))
        .transpose()?;
    kinds
        .iter()
        .map(|kind| match kind {
            EstimatorKind::Sub => Ok(chain.as_ref().expect("chain fitted").1.clone()),
            EstimatorKind::Ipw => ipw_estimate(
                problem,
                ratios.as_ref().expect("ratios fitted"),
                options.level,
            ),
            EstimatorKind::Tmle => {
                let nuisance = NuisanceSet {
                    ratios: ratios.clone().expect("ratios fitted"),
                    regressions: chain.as_ref().expect("chain fitted").0.clone(),
                };
                tmle_estimate(problem, &nuisance, options.level)
            }
            EstimatorKind::Sdr => sdr_estimate(
                problem,
                ratios.as_ref().expect("ratios fitted"),
                learners,
                options.level,
            ),
        })
        .collect()
}

/// Difference `theta(policy) - theta(reference)` for one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contrast {
    pub estimator: EstimatorKind,
    pub difference: f64,
    pub se: Option<f64>,
    pub ci: Option<[f64; 2]>,
    pub level: f64,
}

/// Contrast of two results from the same data and fold plan; intervals use
/// the differenced influence function values.
pub fn contrast(target: &EstimateResult, reference: &EstimateResult) -> Result<Contrast> {
    if target.estimator != reference.estimator || target.n != reference.n {
        return Err(Error::Internal("contrast of mismatched results".into()));
    }
    let difference = target.theta - reference.theta;
    let (se, ci) = match (&target.eif, &reference.eif) {
        (Some(a), Some(b)) => {
            let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
            let (se, lo, hi) = wald_interval(difference, &d, target.level)?;
            (Some(se), Some([lo, hi]))
        }
        _ => (None, None),
    };
    Ok(Contrast {
        estimator: target.estimator,
        difference,
        se,
        ci,
        level: target.level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_at_95() {
        assert!((normal_quantile(0.95).unwrap() - 1.959964).abs() < 1e-6);
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn wald_hand_computation() {
        let eif: Vec<f64> = (0..100)
            .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
            .collect();
        let (se, lo, hi) = wald_interval(0.3, &eif, 0.95).unwrap();
        let expected = 0.1 * (100.0f64 / 99.0).sqrt();
        assert!((se - expected).abs() < 1e-15);
        assert!((hi - lo - 2.0 * 1.959964 * expected).abs() < 1e-6);
    }

    #[test]
    fn wald_degenerate_cases() {
        let (se, lo, hi) = wald_interval(2.0, &[0.0; 10], 0.9).unwrap();
        assert_eq!((se, lo, hi), (0.0, 2.0, 2.0));
        assert!(matches!(
            wald_interval(0.0, &[1.0], 0.95),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
        assert!("aipw".parse::<EstimatorKind>().is_err());
    }
}
