//! Sequential data-generating models, sampling and the Monte Carlo oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::crossfit::derive_seed;
use crate::data::{ColumnInfo, DataParts, ExposureSupport, LongitudinalData};
use crate::error::Result;
use crate::learners::expit;
use crate::policy::Policy;

/// Probability mass function as `(value, probability)` pairs.
pub type Pmf = Vec<(f64, f64)>;

/// A discrete longitudinal model `L_1, A_1, ..., L_tau, A_tau, Y` given by
/// its conditional kernels. A trajectory prefix is the flat vector
/// `[L_1, A_1, L_2, A_2, ...]`; each kernel lists every support point, zero
/// probabilities included.
pub trait SequentialModel: Sync {
    fn tau(&self) -> usize;

    /// `L_t` given `[L_1, A_1, ..., L_{t-1}, A_{t-1}]`.
    fn covariate_pmf(&self, t: usize, past: &[f64]) -> Pmf;

    /// `A_t` given `[L_1, A_1, ..., L_t]`.
    fn exposure_pmf(&self, t: usize, past: &[f64]) -> Pmf;

    /// `Y` given `[L_1, A_1, ..., L_tau, A_tau]`.
    fn outcome_pmf(&self, past: &[f64]) -> Pmf;

    fn covariate_name(&self, t: usize) -> String {
        format!("L{t}")
    }

    /// Levels of a categorical `L_t`, which datasets one-hot expand.
    fn covariate_levels(&self, _t: usize) -> Option<Vec<f64>> {
        None
    }

    fn exposure_support(&self) -> Vec<f64>;

    fn outcome_bounds(&self) -> (f64, f64) {
        (0.0, 1.0)
    }
}

/// Inverse-CDF draw.
pub(crate) fn draw(pmf: &[(f64, f64)], u: f64) -> f64 {
    let mut acc = 0.0;
    for &(v, p) in pmf {
        acc += p;
        if u < acc {
            return v;
        }
    }
    // rounding left u above the accumulated mass; take the last supported value
    pmf.iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map_or(pmf[pmf.len() - 1].0, |(v, _)| *v)
}

/// One trajectory `[L_1, A_1, ..., L_tau, A_tau, Y]`.
pub fn sample_trajectory<M: SequentialModel + ?Sized, R: Rng>(model: &M, rng: &mut R) -> Vec<f64> {
    let tau = model.tau();
    let mut z = Vec::with_capacity(2 * tau + 1);
    for t in 1..=tau {
        let l = draw(&model.covariate_pmf(t, &z), rng.random());
        z.push(l);
        let a = draw(&model.exposure_pmf(t, &z), rng.random());
        z.push(a);
    }
    let y = draw(&model.outcome_pmf(&z), rng.random());
    z.push(y);
    z
}

/// Assembles trajectories into a dataset; categorical covariates are one-hot
/// expanded with columns `name=level`.
pub fn trajectories_to_data<M: SequentialModel + ?Sized>(
    model: &M,
    rows: &[Vec<f64>],
) -> Result<LongitudinalData> {
    let tau = model.tau();
    let n = rows.len();
    let mut covariate_columns = Vec::with_capacity(tau);
    let mut covariates = Vec::with_capacity(tau);
    for t in 1..=tau {
        let name = model.covariate_name(t);
        let values = rows.iter().map(|z| z[2 * (t - 1)]);
        match model.covariate_levels(t) {
            None => {
                covariate_columns.push(vec![ColumnInfo::numeric(name)]);
                covariates.push(values.collect());
            }
            Some(levels) => {
                covariate_columns.push(
                    levels
                        .iter()
                        .map(|l| ColumnInfo::indicator(&name, &format!("{l}")))
                        .collect(),
                );
                let mut data = Vec::with_capacity(n * levels.len());
                for v in values {
                    data.extend(levels.iter().map(|l| if *l == v { 1.0 } else { 0.0 }));
                }
                covariates.push(data);
            }
        }
    }
    LongitudinalData::from_parts(DataParts {
        ids: (1..=n).map(|i| i.to_string()).collect(),
        covariate_columns,
        covariates,
        exposure_names: (1..=tau).map(|t| format!("A{t}")).collect(),
        exposures: (1..=tau)
            .map(|t| rows.iter().map(|z| z[2 * t - 1]).collect())
            .collect(),
        censoring_names: None,
        censoring: None,
        outcome_name: "Y".into(),
        outcome: rows.iter().map(|z| z[2 * tau]).collect(),
        outcome_bounds: model.outcome_bounds(),
        exposure_support: Some(ExposureSupport::Discrete {
            values: model.exposure_support(),
        }),
    })
}

/// `n` independent trajectories from a seeded generator.
pub fn generate_dataset<M: SequentialModel + ?Sized>(
    model: &M,
    n: usize,
    seed: u64,
) -> Result<LongitudinalData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| sample_trajectory(model, &mut rng)).collect();
    trajectories_to_data(model, &rows)
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub theta: f64,
    pub se: f64,
    pub draws: u64,
}

const ORACLE_CHUNK: u64 = 1 << 16;

/// Mean counterfactual outcome under `policy`: each exposure is drawn from
/// the model given the intervened history so far and then replaced by its
/// policy value. Chunks run in parallel with derived seeds, so the result
/// does not depend on the thread count.
pub fn oracle_theta_mc<M: SequentialModel + ?Sized>(
    model: &M,
    policy: &Policy,
    draws: u64,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    let tau = model.tau();
    let chunks = draws.div_ceil(ORACLE_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c]));
            let count = ORACLE_CHUNK.min(draws - c * ORACLE_CHUNK);
            let mut z = Vec::with_capacity(2 * tau + 1);
            let (mut s, mut ss) = (0.0, 0.0);
            for _ in 0..count {
                z.clear();
                for t in 1..=tau {
                    let l = draw(&model.covariate_pmf(t, &z), rng.random());
                    z.push(l);
                    let natural = draw(&model.exposure_pmf(t, &z), rng.random());
                    z.push(policy.apply_value(t, natural)?);
                }
                let y = draw(&model.outcome_pmf(&z), rng.random());
                s += y;
                ss += y * y;
            }
            Ok((s, ss))
        })
        .collect::<Result<_>>()?;
    let n = draws as f64;
    let (s, ss) = sums
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let mean = s / n;
    let var = (ss - n * mean * mean) / (n - 1.0);
    Ok(MonteCarloEstimate {
        theta: mean,
        se: (var.max(0.0) / n).sqrt(),
        draws,
    })
}

fn binomial_pmf(size: u32, p: f64) -> Pmf {
    (0..=size)
        .map(|k| {
            let coef = (1..=k).fold(1.0, |c, j| c * f64::from(size - k + j) / f64::from(j));
            (
                f64::from(k),
                coef * p.powi(k as i32) * (1.0 - p).powi((size - k) as i32),
            )
        })
        .collect()
}

fn bernoulli_pmf(p: f64) -> Pmf {
    vec![(0.0, 1.0 - p), (1.0, p)]
}

/// The four-period benchmark mechanism:
///
/// - `L_1 ~ Cat(0.5, 0.25, 0.25)` on `{1, 2, 3}`
/// - `A_1 | L_1 ~ Binomial(5, 1(L_1 > 1) 0.5 + 1(L_1 > 2) 0.1)`
/// - `L_t ~ Bernoulli(expit(-0.3 L_{t-1} + 0.5 A_{t-1}))` for `t = 2, 3, 4`
/// - `A_t ~ Binomial(5, expit(-2 + 1 / (1 + 2 L_t + A_{t-1})))` for `t = 2, 3`
/// - `A_4 ~ Binomial(5, expit(1 + L_4 - 3 A_3))`
/// - `Y ~ Bernoulli(expit(-2 + 1 / (1 - 1.2 A_4 - 0.3 L_4)))`
///
/// `L_1` is categorical; its dataset columns are `L1_x=1`, `L1_x=2`, `L1_x=3`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BenchmarkDgp;

impl SequentialModel for BenchmarkDgp {
    fn tau(&self) -> usize {
        4
    }

    fn covariate_pmf(&self, t: usize, past: &[f64]) -> Pmf {
        if t == 1 {
            return vec![(1.0, 0.5), (2.0, 0.25), (3.0, 0.25)];
        }
        let (l_prev, a_prev) = (past[2 * t - 4], past[2 * t - 3]);
        bernoulli_pmf(expit(-0.3 * l_prev + 0.5 * a_prev))
    }

    fn exposure_pmf(&self, t: usize, past: &[f64]) -> Pmf {
        let l = past[2 * t - 2];
        let p = match t {
            1 => {
                let mut p = 0.0;
                if l > 1.0 {
                    p += 0.5;
                }
                if l > 2.0 {
                    p += 0.1;
                }
                p
            }
            4 => expit(1.0 + l - 3.0 * past[2 * t - 3]),
            _ => expit(-2.0 + 1.0 / (1.0 + 2.0 * l + past[2 * t - 3])),
        };
        binomial_pmf(5, p)
    }

    fn outcome_pmf(&self, past: &[f64]) -> Pmf {
        let (l4, a4) = (past[6], past[7]);
        bernoulli_pmf(expit(-2.0 + 1.0 / (1.0 - 1.2 * a4 - 0.3 * l4)))
    }

    fn covariate_name(&self, t: usize) -> String {
        format!("L{t}_x")
    }

    fn covariate_levels(&self, t: usize) -> Option<Vec<f64>> {
        (t == 1).then(|| vec![1.0, 2.0, 3.0])
    }

    fn exposure_support(&self) -> Vec<f64> {
        (0..=5).map(f64::from).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_pmf_values() {
        let pmf = binomial_pmf(5, 0.5);
        let expected = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0];
        for (k, (v, p)) in pmf.iter().enumerate() {
            assert_eq!(*v, k as f64);
            assert!((p - expected[k] / 32.0).abs() < 1e-15);
        }
        assert_eq!(binomial_pmf(5, 0.0)[0].1, 1.0);
    }

    #[test]
    fn draw_inverts_the_cdf() {
        let pmf = vec![(0.0, 0.2), (1.0, 0.0), (2.0, 0.8)];
        assert_eq!(draw(&pmf, 0.0), 0.0);
        assert_eq!(draw(&pmf, 0.2), 2.0);
        assert_eq!(draw(&pmf, 1.0), 2.0);
    }

    #[test]
    fn dataset_is_reproducible() {
        let a = generate_dataset(&BenchmarkDgp, 50, 3).unwrap();
        let b = generate_dataset(&BenchmarkDgp, 50, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_dataset(&BenchmarkDgp, 50, 4).unwrap());
        assert_eq!(a.history_names(4).len(), 9);
    }

    #[test]
    fn first_exposure_is_zero_in_the_lowest_stratum() {
        let data = generate_dataset(&BenchmarkDgp, 2000, 11).unwrap();
        let l = data.covariates(1);
        let j = l.column_index("L1_x=1").unwrap();
        for i in 0..data.n() {
            if l.get(i, j) == 1.0 {
                assert_eq!(data.exposure(1)[i], 0.0);
            }
        }
    }
}
