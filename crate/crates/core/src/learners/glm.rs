//! Weighted generalized linear models on standardized features.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Column centering and scaling; constant columns are dropped.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Standardizer {
    cols: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardizer {
    pub(crate) fn fit(x: &Matrix, w: &[f64]) -> Self {
        let total: f64 = w.iter().sum();
        let mut cols = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for j in 0..x.ncols() {
            let mean = x.rows().zip(w).map(|(r, wi)| wi * r[j]).sum::<f64>() / total;
            let var = x
                .rows()
                .zip(w)
                .map(|(r, wi)| wi * (r[j] - mean).powi(2))
                .sum::<f64>()
                / total;
            let sd = var.sqrt();
            if sd > 1e-12 * (1.0 + mean.abs()) {
                cols.push(j);
                means.push(mean);
                sds.push(sd);
            }
        }
        Self { cols, means, sds }
    }

    pub(crate) fn width(&self) -> usize {
        self.cols.len() + 1
    }

    /// Row of the standardized design, intercept first.
    pub(crate) fn design_row(&self, row: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for (k, &j) in self.cols.iter().enumerate() {
            out[k + 1] = (row[j] - self.means[k]) / self.sds[k];
        }
    }

    fn design(&self, x: &Matrix) -> DMatrix<f64> {
        let p = self.width();
        let mut z = DMatrix::zeros(x.nrows(), p);
        let mut buf = vec![0.0; p];
        for (i, r) in x.rows().enumerate() {
            self.design_row(r, &mut buf);
            for k in 0..p {
                z[(i, k)] = buf[k];
            }
        }
        z
    }
}

/// Linear predictor on the standardized scale.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearPredictor {
    pub(crate) standardizer: Standardizer,
    pub(crate) beta: Vec<f64>,
}

impl LinearPredictor {
    pub(crate) fn eta(&self, row: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.standardizer.width()];
        self.standardizer.design_row(row, &mut buf);
        buf.iter().zip(&self.beta).map(|(z, b)| z * b).sum()
    }
}

fn quasi_deviance(y: &DVector<f64>, mu: &DVector<f64>, w: &[f64]) -> f64 {
    let term = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
    2.0 * (0..y.len())
        .map(|i| w[i] * (term(y[i], mu[i]) + term(1.0 - y[i], 1.0 - mu[i])))
        .sum::<f64>()
}

fn penalized_objective(
    y: &DVector<f64>,
    mu: &DVector<f64>,
    w: &[f64],
    beta: &DVector<f64>,
    ridge: f64,
) -> f64 {
    quasi_deviance(y, mu, w) + ridge * beta.iter().skip(1).map(|b| b * b).sum::<f64>()
}

/// Weighted Bernoulli quasi-likelihood fit by iteratively reweighted least
/// squares (Newton's method with step halving). Targets may be fractional.
/// The intercept is never penalized, so the weighted score equation
/// `sum w (y - p) = 0` holds at convergence.
pub(crate) fn fit_logistic(
    x: &Matrix,
    y: &[f64],
    w: &[f64],
    ridge: f64,
    max_iter: usize,
    tol: f64,
) -> Result<LinearPredictor> {
    let standardizer = Standardizer::fit(x, w);
    let z = standardizer.design(x);
    let n = x.nrows();
    let p = standardizer.width();
    let yv = DVector::from_column_slice(y);
    let total: f64 = w.iter().sum();
    let ybar = (w.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / total).clamp(1e-8, 1.0 - 1e-8);

    let mut beta = DVector::zeros(p);
    beta[0] = logit(ybar);
    let mean_of = |beta: &DVector<f64>| -> DVector<f64> { (&z * beta).map(expit) };
    let mut mu = mean_of(&beta);
    let mut obj = penalized_objective(&yv, &mu, w, &beta, ridge);

    for _ in 0..max_iter {
        let mut h = DMatrix::<f64>::zeros(p, p);
        let mut g = DVector::<f64>::zeros(p);
        for i in 0..n {
            let v = w[i] * mu[i] * (1.0 - mu[i]);
            let r = w[i] * (y[i] - mu[i]);
            let zi = z.row(i);
            for a in 0..p {
                g[a] += zi[a] * r;
                if v > 0.0 {
                    for b in a..p {
                        h[(a, b)] += v * zi[a] * zi[b];
                    }
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        for a in 1..p {
            h[(a, a)] += ridge;
            g[a] -= ridge * beta[a];
        }
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&g),
            None => {
                let mut hj = h;
                let jitter = 1e-10 * (1.0 + total);
                for a in 0..p {
                    hj[(a, a)] += jitter;
                }
                hj.cholesky()
                    .ok_or_else(|| {
                        Error::Input("singular information matrix in logistic fit".into())
                    })?
                    .solve(&g)
            }
        };

        // Newton decrement: unaffected by near-flat directions of the
        // objective (collinear columns held only by the ridge), where the
        // step itself can jitter at rounding level indefinitely
        let decrement = g.dot(&step);
        let mut scale = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_mu = mean_of(&candidate);
        let mut cand_obj = penalized_objective(&yv, &cand_mu, w, &candidate, ridge);
        let mut halvings = 0;
        while !(cand_obj <= obj + 1e-12 * (1.0 + obj.abs())) && halvings < 40 {
            scale *= 0.5;
            candidate = &beta + &step * scale;
            cand_mu = mean_of(&candidate);
            cand_obj = penalized_objective(&yv, &cand_mu, w, &candidate, ridge);
            halvings += 1;
        }
        let moved = (scale * step.amax()) / (1.0 + candidate.amax());
        beta = candidate;
        mu = cand_mu;
        obj = cand_obj;
        if moved <= tol || decrement <= tol * (1.0 + obj.abs()) {
            return Ok(LinearPredictor {
                standardizer,
                beta: beta.iter().copied().collect(),
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        deviance: quasi_deviance(&yv, &mu, w),
    })
}

/// Weighted ridge least squares with an unpenalized intercept.
pub(crate) fn fit_linear(x: &Matrix, y: &[f64], w: &[f64], ridge: f64) -> Result<LinearPredictor> {
    let standardizer = Standardizer::fit(x, w);
    let z = standardizer.design(x);
    let p = standardizer.width();
    let mut h = DMatrix::<f64>::zeros(p, p);
    let mut g = DVector::<f64>::zeros(p);
    for i in 0..x.nrows() {
        let zi = z.row(i);
        for a in 0..p {
            g[a] += w[i] * zi[a] * y[i];
            for b in a..p {
                h[(a, b)] += w[i] * zi[a] * zi[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    for a in 1..p {
        h[(a, a)] += ridge;
    }
    let beta = h
        .cholesky()
        .ok_or_else(|| {
            Error::Input("singular design in linear fit; increase the ridge penalty".into())
        })?
        .solve(&g);
    Ok(LinearPredictor {
        standardizer,
        beta: beta.iter().copied().collect(),
    })
}
