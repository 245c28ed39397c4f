//! Exact nuisances and functionals of a [`SequentialModel`] by enumeration.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::policy::Policy;

use super::model::SequentialModel;

pub(crate) fn key(prefix: &[f64]) -> Vec<u64> {
    prefix.iter().map(|v| (v + 0.0).to_bits()).collect()
}

/// Values of `(m_t, r_t)` as functions of the prefix `[L_1, A_1, ..., L_t, A_t]`.
pub trait Nuisance {
    fn m(&self, t: usize, prefix: &[f64]) -> f64;
    fn r(&self, t: usize, prefix: &[f64]) -> f64;
}

/// Exact outcome regressions, density ratios and the full trajectory law of
/// a model under a history-free policy.
#[derive(Debug, Clone)]
pub struct ExactModel {
    tau: usize,
    policy: Policy,
    /// `m_t` per level, keyed by the prefix ending in `A_t`.
    m: Vec<HashMap<Vec<u64>, f64>>,
    /// `r_t` per level, keyed likewise.
    r: Vec<HashMap<Vec<u64>, f64>>,
    /// Every full trajectory `[L_1, A_1, ..., A_tau, Y]` with positive probability.
    trajectories: Vec<(Vec<f64>, f64)>,
    theta: f64,
}

fn check_pmf(pmf: &[(f64, f64)], what: &str) -> Result<()> {
    let total: f64 = pmf.iter().map(|(_, p)| p).sum();
    if pmf.iter().any(|(_, p)| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::Input(format!(
            "{what} probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

impl ExactModel {
    /// Enumerates every prefix over the kernels' support lists. Fails with an
    /// input error when a kernel is not normalized.
    pub fn new<M: SequentialModel + ?Sized>(model: &M, policy: &Policy) -> Result<Self> {
        let tau = model.tau();
        // all prefixes ending in A_t, level by level
        let mut levels: Vec<Vec<Vec<f64>>> = Vec::with_capacity(tau);
        let mut frontier: Vec<Vec<f64>> = vec![Vec::new()];
        for t in 1..=tau {
            let mut next = Vec::new();
            for p in &frontier {
                let lp = model.covariate_pmf(t, p);
                check_pmf(&lp, &format!("L{t}"))?;
                for &(l, _) in &lp {
                    let mut pl = p.clone();
                    pl.push(l);
                    let ap = model.exposure_pmf(t, &pl);
                    check_pmf(&ap, &format!("A{t}"))?;
                    for &(a, _) in &ap {
                        let mut pa = pl.clone();
                        pa.push(a);
                        next.push(pa);
                    }
                }
            }
            levels.push(next.clone());
            frontier = next;
        }

        let shift = |t: usize, a: f64| policy.apply_value(t, a);
        let mut m: Vec<HashMap<Vec<u64>, f64>> = vec![HashMap::new(); tau];
        let mut r: Vec<HashMap<Vec<u64>, f64>> = vec![HashMap::new(); tau];
        for t in (1..=tau).rev() {
            for p in &levels[t - 1] {
                let value = if t == tau {
                    let yp = model.outcome_pmf(p);
                    check_pmf(&yp, "Y")?;
                    yp.iter().map(|(y, q)| y * q).sum()
                } else {
                    let mut acc = 0.0;
                    for (l, ql) in model.covariate_pmf(t + 1, p) {
                        let mut pl = p.clone();
                        pl.push(l);
                        for (a, qa) in model.exposure_pmf(t + 1, &pl) {
                            if ql * qa == 0.0 {
                                continue;
                            }
                            let mut pa = pl.clone();
                            pa.push(shift(t + 1, a)?);
                            let next = m[t].get(&key(&pa)).copied().ok_or_else(|| {
                                Error::Domain(format!(
                                    "policy leaves the support at time {}",
                                    t + 1
                                ))
                            })?;
                            acc += ql * qa * next;
                        }
                    }
                    acc
                };
                m[t - 1].insert(key(p), value);

                let (h, a) = p.split_at(p.len() - 1);
                let g = model.exposure_pmf(t, h);
                let own = g.iter().find(|(v, _)| *v == a[0]).map_or(0.0, |(_, q)| *q);
                let mut gd = 0.0;
                for &(s, q) in &g {
                    if shift(t, s)? == a[0] {
                        gd += q;
                    }
                }
                // zero-probability cells never enter an expectation
                r[t - 1].insert(key(p), if own > 0.0 { gd / own } else { 0.0 });
            }
        }

        let mut trajectories = Vec::new();
        let mut stack: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
        while let Some((p, q)) = stack.pop() {
            let t = p.len() / 2 + 1;
            if t > tau {
                for (y, qy) in model.outcome_pmf(&p) {
                    if qy > 0.0 {
                        let mut z = p.clone();
                        z.push(y);
                        trajectories.push((z, q * qy));
                    }
                }
                continue;
            }
            for (l, ql) in model.covariate_pmf(t, &p) {
                let mut pl = p.clone();
                pl.push(l);
                for (a, qa) in model.exposure_pmf(t, &pl) {
                    if ql * qa > 0.0 {
                        let mut pa = pl.clone();
                        pa.push(a);
                        stack.push((pa, q * ql * qa));
                    }
                }
            }
        }
        trajectories.sort_by(|a, b| {
            a.0.iter()
                .zip(&b.0)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut theta = 0.0;
        for (l, ql) in model.covariate_pmf(1, &[]) {
            for (a, qa) in model.exposure_pmf(1, &[l]) {
                if ql * qa > 0.0 {
                    theta += ql * qa * m[0][&key(&[l, shift(1, a)?])];
                }
            }
        }
        Ok(Self {
            tau,
            policy: policy.clone(),
            m,
            r,
            trajectories,
            theta,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// `theta = E[m_1(A_1^d, L_1)]`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Positive-probability trajectories `[L_1, A_1, ..., A_tau, Y]` with their probabilities.
    pub fn trajectories(&self) -> &[(Vec<f64>, f64)] {
        &self.trajectories
    }

    /// `m_t` at a prefix ending in `A_t`.
    pub fn m_at(&self, t: usize, prefix: &[f64]) -> Option<f64> {
        self.m[t - 1].get(&key(prefix)).copied()
    }

    /// Exact `m_t` table keyed by prefix bits.
    pub fn m_table(&self, t: usize) -> &HashMap<Vec<u64>, f64> {
        &self.m[t - 1]
    }

    /// Prefix with `A_t` replaced by its policy value.
    pub fn shifted_prefix(&self, t: usize, prefix: &[f64]) -> Vec<f64> {
        let mut p = prefix[..2 * t].to_vec();
        p[2 * t - 1] = self
            .policy
            .apply_value(t, p[2 * t - 1])
            .expect("policy checked at construction");
        p
    }

    /// `phi_t(z; eta)` for `t = 1, ..., tau + 1` (with `phi_{tau+1} = Y`).
    pub fn phi<N: Nuisance + ?Sized>(&self, t: usize, z: &[f64], eta: &N) -> f64 {
        let tau = self.tau;
        let mut phi = z[2 * tau];
        for s in (t..=tau).rev() {
            let obs = &z[..2 * s];
            let r = eta.r(s, obs);
            let m_shift = eta.m(s, &self.shifted_prefix(s, z));
            phi = if r == 0.0 {
                m_shift
            } else {
                m_shift + r * (phi - eta.m(s, obs))
            };
        }
        phi
    }

    /// Efficiency bound `Var phi_1(Z; eta)` at the true nuisances.
    pub fn efficiency_bound(&self) -> f64 {
        self.trajectories
            .iter()
            .map(|(z, q)| q * (self.phi(1, z, self) - self.theta).powi(2))
            .sum()
    }

    /// `E[f(Z) | prefix]` for a prefix of positive probability.
    pub fn conditional_mean(&self, prefix: &[f64], f: impl Fn(&[f64]) -> f64) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for (z, q) in &self.trajectories {
            if z.starts_with(prefix) {
                num += q * f(z);
                den += q;
            }
        }
        (den > 0.0).then(|| num / den)
    }

    /// Prefixes ending in `A_t` with positive probability (the empty prefix for `t = 0`).
    pub fn support_prefixes(&self, t: usize) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = self
            .trajectories
            .iter()
            .map(|(z, _)| z[..2 * t].to_vec())
            .collect();
        out.dedup();
        out
    }

    /// Second-order remainder
    /// `sum_{s>t} E[C'_{t,s} (r'_s - r_s)(m'_s - m_s) | prefix]` with
    /// `C'_{t,s} = prod_{t<k<s} r'_k`.
    pub fn remainder<N: Nuisance + ?Sized>(
        &self,
        t: usize,
        prefix: &[f64],
        eta: &N,
    ) -> Option<f64> {
        self.conditional_mean(prefix, |z| {
            let mut total = 0.0;
            let mut c = 1.0;
            for s in t + 1..=self.tau {
                let obs = &z[..2 * s];
                total += c * (eta.r(s, obs) - self.r(s, obs)) * (eta.m(s, obs) - self.m(s, obs));
                c *= eta.r(s, obs);
            }
            total
        })
    }

    /// `m_t` at a prefix, with `m_0 = theta` for the empty prefix.
    pub fn m_or_theta(&self, t: usize, prefix: &[f64]) -> f64 {
        if t == 0 {
            self.theta
        } else {
            self.m(t, prefix)
        }
    }
}

impl Nuisance for ExactModel {
    fn m(&self, t: usize, prefix: &[f64]) -> f64 {
        self.m[t - 1][&key(&prefix[..2 * t])]
    }

    fn r(&self, t: usize, prefix: &[f64]) -> f64 {
        self.r[t - 1][&key(&prefix[..2 * t])]
    }
}

/// True nuisances with deterministic pseudo-random errors: `m_s` is shifted
/// and `r_s` rescaled at the times flagged in `perturb_m` / `perturb_r`.
#[derive(Debug, Clone)]
pub struct PerturbedNuisance<'a> {
    pub exact: &'a ExactModel,
    pub seed: u64,
    pub perturb_m: Vec<bool>,
    pub perturb_r: Vec<bool>,
}

impl PerturbedNuisance<'_> {
    fn noise(&self, tag: u64, t: usize, prefix: &[f64]) -> f64 {
        let mut tags = vec![tag, t as u64];
        tags.extend(key(&prefix[..2 * t]));
        let bits = crate::crossfit::derive_seed(self.seed, &tags);
        (bits >> 11) as f64 / (1u64 << 53) as f64
    }
}

impl Nuisance for PerturbedNuisance<'_> {
    fn m(&self, t: usize, prefix: &[f64]) -> f64 {
        let base = self.exact.m(t, prefix);
        if self.perturb_m[t - 1] {
            base + self.noise(1, t, prefix) - 0.5
        } else {
            base
        }
    }

    fn r(&self, t: usize, prefix: &[f64]) -> f64 {
        let base = self.exact.r(t, prefix);
        if self.perturb_r[t - 1] {
            base * (0.25 + 1.5 * self.noise(2, t, prefix)) + 0.3 * self.noise(3, t, prefix)
        } else {
            base
        }
    }
}
