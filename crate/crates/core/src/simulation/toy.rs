//! A two-period model small enough to enumerate by hand.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::exact::key;
use super::model::{Pmf, SequentialModel};

pub const TOY_COVARIATES: [f64; 2] = [0.0, 1.0];
pub const TOY_EXPOSURES: [f64; 3] = [0.0, 1.0, 2.0];

/// `tau = 2`, `L_t in {0, 1}`, `A_t in {0, 1, 2}`, `Y in {0, 1}`, with an
/// explicit probability table for every kernel and every history.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    covariate: [HashMap<Vec<u64>, Vec<f64>>; 2],
    exposure: [HashMap<Vec<u64>, Vec<f64>>; 2],
    outcome: HashMap<Vec<u64>, Vec<f64>>,
}

fn histories(len: usize) -> Vec<Vec<f64>> {
    // alternating L / A positions
    let mut out = vec![Vec::new()];
    for pos in 0..len {
        let values: &[f64] = if pos % 2 == 0 {
            &TOY_COVARIATES
        } else {
            &TOY_EXPOSURES
        };
        out = out
            .into_iter()
            .flat_map(|h: Vec<f64>| {
                values.iter().map(move |&v| {
                    let mut h2 = h.clone();
                    h2.push(v);
                    h2
                })
            })
            .collect();
    }
    out
}

impl ToyModel {
    /// Random tables with every probability bounded away from zero.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = |len: usize, k: usize| -> HashMap<Vec<u64>, Vec<f64>> {
            histories(len)
                .into_iter()
                .map(|h| {
                    let raw: Vec<f64> = (0..k).map(|_| 0.15 + rng.random::<f64>()).collect();
                    let total: f64 = raw.iter().sum();
                    (key(&h), raw.into_iter().map(|v| v / total).collect())
                })
                .collect()
        };
        let covariate = [table(0, 2), table(2, 2)];
        let exposure = [table(1, 3), table(3, 3)];
        let outcome = table(4, 2);
        Self {
            covariate,
            exposure,
            outcome,
        }
    }

    /// Replaces one outcome table entry; used to build invalid models in tests.
    pub fn with_outcome_probabilities(mut self, history: &[f64], probs: Vec<f64>) -> Result<Self> {
        let k = key(history);
        if !self.outcome.contains_key(&k) {
            return Err(Error::Input("unknown outcome history".into()));
        }
        self.outcome.insert(k, probs);
        Ok(self)
    }

    fn lookup(table: &HashMap<Vec<u64>, Vec<f64>>, values: &[f64], past: &[f64]) -> Pmf {
        let probs = &table[&key(past)];
        values.iter().copied().zip(probs.iter().copied()).collect()
    }
}

impl SequentialModel for ToyModel {
    fn tau(&self) -> usize {
        2
    }

    fn covariate_pmf(&self, t: usize, past: &[f64]) -> Pmf {
        Self::lookup(&self.covariate[t - 1], &TOY_COVARIATES, past)
    }

    fn exposure_pmf(&self, t: usize, past: &[f64]) -> Pmf {
        Self::lookup(&self.exposure[t - 1], &TOY_EXPOSURES, past)
    }

    fn outcome_pmf(&self, past: &[f64]) -> Pmf {
        Self::lookup(&self.outcome, &[0.0, 1.0], past)
    }

    fn exposure_support(&self) -> Vec<f64> {
        TOY_EXPOSURES.to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_history_has_a_table() {
        let toy = ToyModel::random(1);
        assert_eq!(toy.outcome.len(), 2 * 3 * 2 * 3);
        assert_eq!(toy.exposure[1].len(), 2 * 3 * 2);
        for probs in toy.outcome.values() {
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(probs.iter().all(|&p| p > 0.05));
        }
    }
}
