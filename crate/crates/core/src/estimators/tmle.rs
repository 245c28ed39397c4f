use crate::error::{Error, Result};
use crate::learners::{expit, logit};

use super::{
    finish_with_interval, phi_one, Diagnostics, EstimateResult, EstimatorKind, NuisanceSet, Problem,
};

const TILT_TOL: f64 = 1e-10;
const TILT_MAX_ITER: usize = 100;

fn score(y: &[f64], offset: &[f64], w: &[f64], eps: f64) -> (f64, f64) {
    let mut s = 0.0;
    let mut info = 0.0;
    for ((yi, oi), wi) in y.iter().zip(offset).zip(w) {
        let p = expit(eps + oi);
        s += wi * (yi - p);
        info += wi * p * (1.0 - p);
    }
    (s, info)
}

/// Maximum quasi-likelihood `epsilon` of the logistic tilt
/// `logit m_eps = epsilon + offset` with weights `w`: the root of the
/// decreasing score `sum w (y - expit(epsilon + offset))`. Newton's method
/// from zero, with bisection as fallback; the returned root has
/// `|score| / n <= 1e-10`.
///
/// With `ybar` the weighted mean target, the root lies in
/// `[logit(ybar) - max offset, logit(ybar) - min offset]`, so a root exists
/// exactly when `0 < ybar < 1`.
pub fn tilt_step(pseudo_y: &[f64], offset: &[f64], weights: &[f64]) -> Result<f64> {
    let n = pseudo_y.len();
    if offset.len() != n || weights.len() != n {
        return Err(Error::Internal("tilt inputs disagree in length".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Input(
            "tilting weights must be nonnegative and not all zero".into(),
        ));
    }
    if offset.iter().any(|o| !o.is_finite()) || pseudo_y.iter().any(|y| !y.is_finite()) {
        return Err(Error::Input(
            "tilting offsets and targets must be finite".into(),
        ));
    }
    let tol = TILT_TOL * n as f64;
    let total: f64 = weights.iter().sum();
    let ybar = pseudo_y
        .iter()
        .zip(weights)
        .map(|(y, w)| y * w)
        .sum::<f64>()
        / total;
    if !(ybar > 0.0 && ybar < 1.0) {
        return Err(Error::TiltDiverged { mean: ybar });
    }
    let active = || {
        offset
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(o, _)| *o)
    };
    let (lo_off, hi_off) = active().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), o| {
        (a.min(o), b.max(o))
    });
    let (mut lo, mut hi) = (logit(ybar) - hi_off, logit(ybar) - lo_off);

    let mut eps = 0.0;
    for _ in 0..TILT_MAX_ITER {
        let (s, info) = score(pseudo_y, offset, weights, eps);
        if s.abs() <= tol {
            return Ok(eps);
        }
        if info <= 0.0 {
            break;
        }
        eps += s / info;
        if !eps.is_finite() || eps < lo - 1.0 || eps > hi + 1.0 {
            break;
        }
    }

    // bisection on the monotone score
    for end in [lo, hi] {
        if score(pseudo_y, offset, weights, end).0.abs() <= tol {
            return Ok(end);
        }
    }
    let mut best = (f64::INFINITY, 0.5 * (lo + hi));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (s, _) = score(pseudo_y, offset, weights, mid);
        if s.abs() < best.0 {
            best = (s.abs(), mid);
        }
        if s.abs() <= tol || mid == lo || mid == hi {
            break;
        }
        if s > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.1)
}

/// One backward pass of logistic tilts. At time `t` the tilted
/// `m_{t+1}(A_{t+1}^d)` (or `Y`) is the target, `logit m_t(A_t)` the offset
/// and `prod_{k <= t} r_k` the weight; the fitted `epsilon` updates both
/// `m_t(A_t)` and `m_t(A_t^d)` on the logit scale.
pub fn tmle_estimate(
    problem: &Problem<'_>,
    nuisance: &NuisanceSet,
    level: f64,
) -> Result<EstimateResult> {
    let data = problem.data;
    let (n, tau) = (problem.n(), problem.tau());
    let omega = nuisance.ratios.cumulative();
    let mut reg = nuisance.regressions.clone();
    let mut tilts = vec![0.0; tau];
    for t in (1..=tau).rev() {
        let rows: Vec<usize> = (0..n)
            .filter(|&i| data.uncensored(i, t) && omega[t - 1][i] * problem.weights[i] > 0.0)
            .collect();
        let target = |i: usize| {
            if t == tau {
                problem.y_scaled[i]
            } else {
                reg.shifted[t][i]
            }
        };
        let y: Vec<f64> = rows.iter().map(|&i| target(i)).collect();
        let offset: Vec<f64> = rows
            .iter()
            .map(|&i| logit(reg.observed[t - 1][i]))
            .collect();
        let w: Vec<f64> = rows
            .iter()
            .map(|&i| omega[t - 1][i] * problem.weights[i])
            .collect();
        let eps = tilt_step(&y, &offset, &w).map_err(|e| e.at_time(t))?;
        tilts[t - 1] = eps;
        for i in (0..n).filter(|&i| data.available(i, t)) {
            reg.observed[t - 1][i] = expit(eps + logit(reg.observed[t - 1][i]));
            reg.shifted[t - 1][i] = expit(eps + logit(reg.shifted[t - 1][i]));
        }
    }
    let theta = problem.mean(reg.shifted_at(1));
    let phi = phi_one(problem, &nuisance.ratios, &reg)?;
    let mut diagnostics = Diagnostics::new(problem.folds).with_weights(&nuisance.ratios);
    diagnostics.tilts = Some(tilts);
    finish_with_interval(
        problem,
        EstimatorKind::Tmle,
        theta,
        &phi,
        level,
        diagnostics,
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn already_solved_gives_zero() {
        let offset = [-1.0, 0.3, 2.0];
        let y: Vec<f64> = offset.iter().map(|&o| expit(o)).collect();
        assert_eq!(tilt_step(&y, &offset, &[1.0, 2.0, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn intercept_only_mle() {
        let y = [1.0, 1.0, 0.4, 0.4, 0.7];
        let eps = tilt_step(&y, &[0.0; 5], &[1.0; 5]).unwrap();
        assert!((eps - logit(0.7)).abs() < 1e-9);
    }

    #[test]
    fn random_instances_solve_the_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let n = rng.random_range(5..200);
            let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let o: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
            let eps = tilt_step(&y, &o, &w).unwrap();
            let (s, _) = score(&y, &o, &w, eps);
            assert!(s.abs() / n as f64 <= 1e-10);
            // independent bracket: the score changes sign around the root
            let (below, _) = score(&y, &o, &w, eps - 1e-6);
            let (above, _) = score(&y, &o, &w, eps + 1e-6);
            assert!(below > 0.0 && above < 0.0);
        }
    }

    #[test]
    fn far_roots_are_found() {
        // all targets near zero against confident offsets: root far below -10
        let y = [1e-4, 1e-4, 0.5];
        let o = [3.0, 3.0, 3.0];
        let w = [100.0, 100.0, 1e-3];
        let eps = tilt_step(&y, &o, &w).unwrap();
        assert!(eps < -10.0);
        assert!(score(&y, &o, &w, eps).0.abs() <= 1e-10 * 3.0);
    }

    #[test]
    fn divergence_is_reported() {
        let err = tilt_step(&[1.0, 1.0], &[-30.0, -30.0], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::TiltDiverged { .. }));
        assert!(tilt_step(&[0.5], &[0.0], &[0.0]).is_err());
    }
}
