//! Deterministic modified treatment policies `d(a_t, h_t)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{ExposureSupport, HistoryView, LongitudinalData};
use crate::error::{Error, Result};

/// Upper limit `u_t(h_t)` of an additive shift: a constant, or a covariate in
/// `H_t` named by a template in which `{t}` is replaced by the time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UpperBound {
    Constant(f64),
    Column { column: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyRule {
    Identity {},
    /// `a + delta` when `a <= u(h) - delta`, otherwise `a`.
    AdditiveShift {
        delta: f64,
        #[serde(default)]
        upper_bound: Option<UpperBound>,
    },
    /// `a - 1` when `a >= threshold`, otherwise `a`.
    ClampedDecrement {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    MultiplicativeShift {
        factor: f64,
    },
    /// Raises exposures below `level` to `level`. Discrete exposures only.
    Threshold {
        level: f64,
    },
    /// Lookup table; keys are exposure values written as strings.
    DiscreteMap {
        map: BTreeMap<String, f64>,
    },
}

fn default_threshold() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PolicyConfig {
    PerTime { per_time: Vec<PolicyRule> },
    Uniform(PolicyRule),
}

/// A policy applied uniformly over time unless per-time rules are given.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    rules: Vec<PolicyRule>,
    #[serde(skip)]
    lookup: Vec<Option<Vec<(f64, f64)>>>,
    #[serde(skip)]
    support: Option<ExposureSupport>,
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let cfg = PolicyConfig::deserialize(d)?;
        let rules = match cfg {
            PolicyConfig::Uniform(r) => vec![r],
            PolicyConfig::PerTime { per_time } => per_time,
        };
        Policy::per_time(rules).map_err(serde::de::Error::custom)
    }
}

impl Policy {
    pub fn new(rule: PolicyRule) -> Result<Self> {
        Self::per_time(vec![rule])
    }

    /// One rule per time point; a single rule applies at every time.
    pub fn per_time(rules: Vec<PolicyRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Config("policy needs at least one rule".into()));
        }
        let lookup = rules
            .iter()
            .map(|r| match r {
                PolicyRule::DiscreteMap { map } => map
                    .iter()
                    .map(|(k, &v)| {
                        k.trim().parse::<f64>().map(|kk| (kk, v)).map_err(|_| {
                            Error::Config(format!("discrete_map key {k:?} is not numeric"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rules,
            lookup,
            support: None,
        })
    }

    pub fn identity() -> Self {
        Self::new(PolicyRule::Identity {}).expect("identity policy is valid")
    }

    /// The simulation policy: decrement by one unless the exposure is already zero.
    pub fn clamped_decrement() -> Self {
        Self::new(PolicyRule::ClampedDecrement { threshold: 1.0 }).expect("valid policy")
    }

    pub fn additive_shift(delta: f64, upper_bound: Option<UpperBound>) -> Self {
        Self::new(PolicyRule::AdditiveShift { delta, upper_bound }).expect("valid policy")
    }

    /// Attaches the declared exposure support, rejecting rules that are not
    /// pathwise differentiable on it.
    pub fn with_support(mut self, support: Option<ExposureSupport>) -> Result<Self> {
        let discrete = support.as_ref().is_some_and(|s| s.is_discrete());
        if !discrete {
            if let Some(PolicyRule::Threshold { .. }) = self
                .rules
                .iter()
                .find(|r| matches!(r, PolicyRule::Threshold { .. }))
            {
                return Err(Error::Config(
                    "threshold policies are only supported for discrete exposures: the effect of \
                     a threshold intervention on a continuous exposure is not pathwise \
                     differentiable and admits no root-n inference"
                        .into(),
                ));
            }
        }
        self.support = support;
        Ok(self)
    }

    pub fn support(&self) -> Option<&ExposureSupport> {
        self.support.as_ref()
    }

    pub fn rule(&self, t: usize) -> &PolicyRule {
        let k = if self.rules.len() == 1 {
            0
        } else {
            (t - 1).min(self.rules.len() - 1)
        };
        &self.rules[k]
    }

    fn lookup(&self, t: usize) -> Option<&[(f64, f64)]> {
        let k = if self.rules.len() == 1 {
            0
        } else {
            (t - 1).min(self.rules.len() - 1)
        };
        self.lookup[k].as_deref()
    }

    pub fn is_identity(&self) -> bool {
        self.rules
            .iter()
            .all(|r| matches!(r, PolicyRule::Identity {}))
    }

    /// `d(a, h)` at time `t`, where `u` is the resolved upper bound (if any).
    fn eval(&self, t: usize, a: f64, upper: Option<f64>) -> Result<f64> {
        if let Some(s) = &self.support {
            if !s.contains(a) {
                return Err(Error::Domain(format!(
                    "exposure {a} outside declared support at time {t}"
                )));
            }
        }
        Ok(match self.rule(t) {
            PolicyRule::Identity {} => a,
            PolicyRule::AdditiveShift { delta, .. } => {
                let u = upper.unwrap_or(f64::INFINITY);
                if a <= u - delta {
                    a + delta
                } else {
                    a
                }
            }
            PolicyRule::ClampedDecrement { threshold } => {
                if a >= *threshold {
                    a - 1.0
                } else {
                    a
                }
            }
            PolicyRule::MultiplicativeShift { factor } => a * factor,
            PolicyRule::Threshold { level } => a.max(*level),
            PolicyRule::DiscreteMap { .. } => {
                let table = self.lookup(t).expect("lookup built for discrete_map");
                match table.iter().find(|(k, _)| *k == a) {
                    Some(&(_, v)) => v,
                    None => {
                        return Err(Error::Domain(format!(
                            "discrete_map has no entry for exposure {a}"
                        )))
                    }
                }
            }
        })
    }

    fn upper_bound(&self, t: usize, h: &HistoryView<'_>) -> Result<Option<f64>> {
        match self.rule(t) {
            PolicyRule::AdditiveShift {
                upper_bound: Some(UpperBound::Constant(u)),
                ..
            } => Ok(Some(*u)),
            PolicyRule::AdditiveShift {
                upper_bound: Some(UpperBound::Column { column }),
                ..
            } => {
                let name = column.replace("{t}", &t.to_string());
                h.value_of(&name).map(Some).ok_or_else(|| {
                    Error::Config(format!(
                        "upper bound column {name} not in history at time {t}"
                    ))
                })
            }
            _ => Ok(None),
        }
    }

    /// `d(a, h)` for the exposure `a` observed with history `h`.
    pub fn apply(&self, a: f64, h: &HistoryView<'_>) -> Result<f64> {
        let u = self.upper_bound(h.t, h)?;
        self.eval(h.t, a, u)
    }

    /// `d(a, h)` for policies that do not read the history (no column bound).
    pub fn apply_value(&self, t: usize, a: f64) -> Result<f64> {
        if let PolicyRule::AdditiveShift {
            upper_bound: Some(UpperBound::Column { .. }),
            ..
        } = self.rule(t)
        {
            return Err(Error::Config("policy reads the history; use apply".into()));
        }
        let u = match self.rule(t) {
            PolicyRule::AdditiveShift {
                upper_bound: Some(UpperBound::Constant(u)),
                ..
            } => Some(*u),
            _ => None,
        };
        self.eval(t, a, u)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(&self.rules).map_err(|_| fmt::Error)?;
        f.write_str(&s)
    }
}

/// `A_t^d` evaluated at the observed history, per time; `NaN` where `A_t` is unavailable.
pub fn shifted_exposures(data: &LongitudinalData, policy: &Policy) -> Result<Vec<Vec<f64>>> {
    (1..=data.tau())
        .map(|t| {
            let a = data.exposure(t);
            (0..data.n())
                .map(|i| {
                    if !data.available(i, t) {
                        return Ok(f64::NAN);
                    }
                    let h = data.history_view(i, t)?;
                    policy.apply(a[i], &h).map_err(|e| match e {
                        Error::Domain(m) => {
                            Error::Domain(format!("trajectory {}, time {t}: {m}", data.ids()[i]))
                        }
                        other => other,
                    })
                })
                .collect()
        })
        .collect()
}

/// Cells `(i, t, d(a, h))` whose intervened exposure falls outside the
/// empirical support of `A_t`; logged as a positivity warning.
pub fn support_violations(
    data: &LongitudinalData,
    shifted: &[Vec<f64>],
) -> Vec<(usize, usize, f64)> {
    let interval = matches!(
        data.exposure_support(),
        Some(ExposureSupport::Interval { .. })
    );
    let mut out = Vec::new();
    for t in 1..=data.tau() {
        let observed: Vec<f64> = data
            .exposure(t)
            .iter()
            .copied()
            .filter(|a| a.is_finite())
            .collect();
        let (lo, hi) = observed
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &a| {
                (l.min(a), h.max(a))
            });
        let mut values = observed.clone();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for (i, &ad) in shifted[t - 1].iter().enumerate() {
            if !ad.is_finite() {
                continue;
            }
            let inside = if interval {
                ad >= lo && ad <= hi
            } else {
                values.binary_search_by(|v| v.total_cmp(&ad)).is_ok()
            };
            if !inside {
                out.push((i, t, ad));
            }
        }
    }
    if !out.is_empty() {
        let shown: Vec<String> = out
            .iter()
            .take(10)
            .map(|(i, t, a)| format!("({}, t={t}, d={a})", data.ids()[*i]))
            .collect();
        log::warn!(
            "{} intervened exposures fall outside the empirical support: {}{}",
            out.len(),
            shown.join(", "),
            if out.len() > 10 { ", ..." } else { "" }
        );
    }
    out
}

/// Conditional exposure density given a history cell.
#[derive(Clone)]
pub enum BaseDensity {
    /// Probability table `(value, mass)`.
    Discrete(Vec<(f64, f64)>),
    Continuous(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Density of `A_t^d` given a history cell.
#[derive(Clone)]
pub enum ShiftedDensity {
    Discrete(Vec<(f64, f64)>),
    Continuous(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ShiftedDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShiftedDensity::Discrete(t) => f.debug_tuple("Discrete").field(t).finish(),
            ShiftedDensity::Continuous(_) => f.write_str("Continuous(..)"),
        }
    }
}

impl ShiftedDensity {
    pub fn density(&self, a: f64) -> f64 {
        match self {
            ShiftedDensity::Discrete(t) => t.iter().filter(|(v, _)| *v == a).map(|(_, p)| p).sum(),
            ShiftedDensity::Continuous(g) => g(a),
        }
    }

    /// Total mass of a discrete table; `None` for continuous densities.
    pub fn total_mass(&self) -> Option<f64> {
        match self {
            ShiftedDensity::Discrete(t) => Some(t.iter().map(|(_, p)| p).sum()),
            ShiftedDensity::Continuous(_) => None,
        }
    }
}

/// Post-intervention density `g_t^d(. | h)` of `A_t^d` when `A_t | h` has
/// density `base`. Discrete tables are pushed forward through `d`; continuous
/// densities are supported for identity, additive and multiplicative shifts.
pub fn analytic_shifted_density(
    policy: &Policy,
    t: usize,
    base: &BaseDensity,
    h: &HistoryView<'_>,
) -> Result<ShiftedDensity> {
    match base {
        BaseDensity::Discrete(table) => {
            let total: f64 = table.iter().map(|(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-12 || table.iter().any(|(_, p)| *p < 0.0) {
                return Err(Error::Input(format!(
                    "base pmf is not normalized (total mass {total})"
                )));
            }
            let mut out: Vec<(f64, f64)> = Vec::with_capacity(table.len());
            for &(s, p) in table {
                let image = policy.apply(s, h)?;
                match out.iter_mut().find(|(v, _)| *v == image) {
                    Some(cell) => cell.1 += p,
                    None => out.push((image, p)),
                }
            }
            out.sort_by(|a, b| a.0.total_cmp(&b.0));
            Ok(ShiftedDensity::Discrete(out))
        }
        BaseDensity::Continuous(g) => {
            let g = Arc::clone(g);
            match policy.rule(t) {
                PolicyRule::Identity {} => Ok(ShiftedDensity::Continuous(g)),
                PolicyRule::AdditiveShift { delta, .. } => {
                    let delta = *delta;
                    let u = policy.upper_bound(t, h)?.unwrap_or(f64::INFINITY);
                    Ok(ShiftedDensity::Continuous(Arc::new(move |a| {
                        let shifted = if a < u { g(a - delta) } else { 0.0 };
                        let kept = if a + delta >= u { g(a) } else { 0.0 };
                        shifted + kept
                    })))
                }
                PolicyRule::MultiplicativeShift { factor } => {
                    let f = *factor;
                    if f == 0.0 {
                        return Err(Error::Config(
                            "multiplicative shift by zero has no density".into(),
                        ));
                    }
                    Ok(ShiftedDensity::Continuous(Arc::new(move |a| {
                        g(a / f) / f.abs()
                    })))
                }
                other => Err(Error::Config(format!(
                    "no continuous post-intervention density for rule {other:?}"
                ))),
            }
        }
    }
}
