//! Fold partitions and out-of-fold prediction.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::learners::FittedModel;
use crate::matrix::Matrix;

/// Default number of cross-fitting folds.
pub const DEFAULT_FOLDS: usize = 10;

/// Partition of trajectory indices into validation folds. Fold `j` is
/// predicted by models trained on every other fold; without cross-fitting a
/// single fold is both trained and predicted on all rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    folds: usize,
    assignment: Vec<usize>,
    seed: u64,
    crossfit: bool,
}

/// Shuffles `0..n` with the seeded generator and deals indices round-robin.
pub fn make_folds(n: usize, folds: usize, seed: u64) -> Result<FoldPlan> {
    if folds < 2 || folds > n {
        return Err(Error::Config(format!(
            "fold count must satisfy 2 <= J <= n, got J = {folds} with n = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        assignment[i] = k % folds;
    }
    Ok(FoldPlan {
        folds,
        assignment,
        seed,
        crossfit: true,
    })
}

impl FoldPlan {
    /// Single fold that trains and predicts on all rows.
    pub fn no_crossfit(n: usize, seed: u64) -> Self {
        Self {
            folds: 1,
            assignment: vec![0; n],
            seed,
            crossfit: false,
        }
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_folds(&self) -> usize {
        self.folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_crossfit(&self) -> bool {
        self.crossfit
    }

    /// `j(i)`.
    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn validation(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == j).collect()
    }

    pub fn training(&self, j: usize) -> Vec<usize> {
        if self.crossfit {
            (0..self.n()).filter(|&i| self.assignment[i] != j).collect()
        } else {
            (0..self.n()).collect()
        }
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &j in &self.assignment {
            sizes[j] += 1;
        }
        sizes
    }

    /// Same partition after reordering trajectories: row `k` of the new
    /// ordering is row `order[k]` of the old one.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            assignment: order.iter().map(|&i| self.assignment[i]).collect(),
            ..self.clone()
        }
    }
}

/// Mixes a base seed with stream tags (time, fold, ...) into an independent seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = splitmix(z ^ splitmix(t.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    z
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Out-of-fold predictions. `fit(j, training_rows)` trains the fold-`j`
/// model; each design (one row per trajectory) is evaluated for fold `j`'s
/// validation rows with that model. Folds are fitted in parallel and the
/// output is independent of the thread count.
pub fn crossfit_predict<F>(folds: &FoldPlan, fit: F, designs: &[&Matrix]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize, &[usize]) -> Result<FittedModel> + Sync,
{
    let n = folds.n();
    if let Some(d) = designs.iter().find(|d| d.nrows() != n) {
        return Err(Error::Internal(format!(
            "design has {} rows, fold plan covers {n}",
            d.nrows()
        )));
    }
    let per_fold: Vec<(Vec<usize>, Vec<Vec<f64>>)> = (0..folds.n_folds())
        .into_par_iter()
        .map(|j| {
            let train = folds.training(j);
            let model = fit(j, &train).map_err(|e| e.in_fold(j))?;
            let valid = folds.validation(j);
            let preds = designs
                .iter()
                .map(|d| valid.iter().map(|&i| model.predict_row(d.row(i))).collect())
                .collect();
            Ok((valid, preds))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![vec![f64::NAN; n]; designs.len()];
    for (valid, preds) in per_fold {
        for (k, p) in preds.into_iter().enumerate() {
            for (&i, v) in valid.iter().zip(p) {
                out[k][i] = v;
            }
        }
    }
    Ok(out)
}
