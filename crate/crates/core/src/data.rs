//! Longitudinal trajectories in wide format.
//!
//! Time points are numbered `1..=tau` throughout the public API. A
//! trajectory is observed through `t` when its censoring indicators
//! `C_1..C_t` are all one; its exposure and covariates at `t + 1` are then
//! available, and its outcome is available when it is observed through
//! `tau`. Unavailable cells are stored as `NaN`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Interior margin used when mapping bounded outcomes into `(0, 1)`.
pub const DEFAULT_SCALE_MARGIN: f64 = 1e-4;

/// Affine map from `[lower, upper]` onto `[eps, 1 - eps]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeScaler {
    lower: f64,
    upper: f64,
    eps: f64,
}

impl OutcomeScaler {
    pub fn new(lower: f64, upper: f64, eps: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || upper <= lower {
            return Err(Error::Config(format!(
                "outcome bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        if !(0.0..0.5).contains(&eps) {
            return Err(Error::Config(format!(
                "scaling margin must lie in [0, 0.5), got {eps}"
            )));
        }
        Ok(Self { lower, upper, eps })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn scale(&self, y: f64) -> f64 {
        (y - self.lower) / (self.upper - self.lower) * (1.0 - 2.0 * self.eps) + self.eps
    }

    pub fn unscale(&self, v: f64) -> f64 {
        self.lower + (v - self.eps) * self.slope()
    }

    /// Derivative of `unscale`; converts standard errors back to the outcome scale.
    pub fn slope(&self) -> f64 {
        (self.upper - self.lower) / (1.0 - 2.0 * self.eps)
    }
}

/// Declared support of the exposure at every time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExposureSupport {
    Discrete { values: Vec<f64> },
    Interval { min: f64, max: f64 },
}

impl ExposureSupport {
    pub fn contains(&self, a: f64) -> bool {
        match self {
            ExposureSupport::Discrete { values } => values.contains(&a),
            ExposureSupport::Interval { min, max } => a >= *min && a <= *max,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ExposureSupport::Discrete { .. })
    }
}

/// Column roles of a wide CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub id: String,
    /// Covariate column names, one list per time point.
    pub covariates: Vec<Vec<String>>,
    pub exposures: Vec<String>,
    #[serde(default)]
    pub censoring: Option<Vec<String>>,
    pub outcome: String,
    pub outcome_bounds: [f64; 2],
    /// Covariates to one-hot expand.
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Optional fixed level order for categorical covariates.
    #[serde(default)]
    pub levels: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub exposure_support: Option<ExposureSupport>,
}

impl Schema {
    pub fn tau(&self) -> usize {
        self.exposures.len()
    }

    fn check(&self) -> Result<()> {
        let tau = self.tau();
        if tau == 0 {
            return Err(Error::Schema(
                "at least one exposure column is required".into(),
            ));
        }
        if self.covariates.len() != tau {
            return Err(Error::Schema(format!(
                "{} covariate groups declared for {tau} time points",
                self.covariates.len()
            )));
        }
        if let Some(c) = &self.censoring {
            if c.len() != tau {
                return Err(Error::Schema(format!(
                    "{} censoring columns declared for {tau} time points",
                    c.len()
                )));
            }
        }
        for name in &self.categorical {
            if !self.covariates.iter().flatten().any(|c| c == name) {
                return Err(Error::Schema(format!(
                    "categorical column {name} is not a covariate"
                )));
            }
        }
        Ok(())
    }
}

/// A covariate column after categorical expansion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnInfo {
    pub name: String,
    /// `(variable, level)` when the column is a one-hot indicator.
    pub indicator: Option<(String, String)>,
}

impl ColumnInfo {
    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            indicator: None,
        }
    }

    pub fn indicator(variable: &str, level: &str) -> Self {
        Self {
            name: format!("{variable}={level}"),
            indicator: Some((variable.to_string(), level.to_string())),
        }
    }
}

/// Raw ingredients for [`LongitudinalData::from_parts`].
#[derive(Debug, Clone)]
pub struct DataParts {
    pub ids: Vec<String>,
    pub covariate_columns: Vec<Vec<ColumnInfo>>,
    /// Row-major `n x p_t` values per time point.
    pub covariates: Vec<Vec<f64>>,
    pub exposure_names: Vec<String>,
    pub exposures: Vec<Vec<f64>>,
    pub censoring_names: Option<Vec<String>>,
    pub censoring: Option<Vec<Vec<u8>>>,
    pub outcome_name: String,
    pub outcome: Vec<f64>,
    pub outcome_bounds: (f64, f64),
    pub exposure_support: Option<ExposureSupport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalData {
    ids: Vec<String>,
    covariate_columns: Vec<Vec<ColumnInfo>>,
    covariates: Vec<Matrix>,
    exposure_names: Vec<String>,
    exposures: Vec<Vec<f64>>,
    censoring_names: Option<Vec<String>>,
    censoring: Option<Vec<Vec<u8>>>,
    outcome_name: String,
    outcome: Vec<f64>,
    outcome_bounds: (f64, f64),
    exposure_support: Option<ExposureSupport>,
    observed_through: Vec<usize>,
    history_names: Vec<Vec<String>>,
}

/// `H_t = (A_1, ..., A_{t-1}, L_1, ..., L_t)` for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryView<'a> {
    pub index: usize,
    pub t: usize,
    pub values: Vec<f64>,
    pub names: &'a [String],
}

impl HistoryView<'_> {
    pub fn value_of(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.values[j])
    }
}

impl LongitudinalData {
    pub fn from_parts(parts: DataParts) -> Result<Self> {
        let DataParts {
            ids,
            covariate_columns,
            covariates,
            exposure_names,
            mut exposures,
            censoring_names,
            censoring,
            outcome_name,
            mut outcome,
            outcome_bounds,
            exposure_support,
        } = parts;
        let n = ids.len();
        let tau = exposures.len();
        if tau == 0 {
            return Err(Error::Validation("tau must be at least 1".into()));
        }
        if exposure_names.len() != tau || covariate_columns.len() != tau || covariates.len() != tau
        {
            return Err(Error::Validation(
                "per-time containers disagree on tau".into(),
            ));
        }
        if outcome.len() != n || exposures.iter().any(|a| a.len() != n) {
            return Err(Error::Validation(
                "per-trajectory containers disagree on n".into(),
            ));
        }
        if censoring.is_some() != censoring_names.is_some() {
            return Err(Error::Validation(
                "censoring values and names must be given together".into(),
            ));
        }
        if let Some(c) = &censoring {
            if c.len() != tau || c.iter().any(|ct| ct.len() != n) {
                return Err(Error::Validation(
                    "censoring containers disagree on shape".into(),
                ));
            }
        }
        let (lo, hi) = outcome_bounds;
        OutcomeScaler::new(lo, hi, 0.0)?;

        let mut observed_through = vec![tau; n];
        if let Some(c) = &censoring {
            for i in 0..n {
                let mut through = tau;
                let mut dropped = false;
                for t in 0..tau {
                    let v = c[t][i];
                    if v > 1 {
                        return Err(Error::Validation(format!(
                            "trajectory {}: censoring indicator must be 0 or 1, got {v}",
                            ids[i]
                        )));
                    }
                    if dropped && v == 1 {
                        return Err(Error::Validation(format!(
                            "trajectory {}: non-monotone censoring at time {}",
                            ids[i],
                            t + 1
                        )));
                    }
                    if !dropped && v == 0 {
                        through = t;
                        dropped = true;
                    }
                }
                observed_through[i] = through;
            }
        }

        let mut cov_mats = Vec::with_capacity(tau);
        for (t, (cols, mut values)) in covariate_columns.iter().zip(covariates).enumerate() {
            let p = cols.len();
            if values.len() != n * p {
                return Err(Error::Validation(format!(
                    "covariate block at time {} has {} values, expected {}",
                    t + 1,
                    values.len(),
                    n * p
                )));
            }
            for i in 0..n {
                let row = &mut values[i * p..(i + 1) * p];
                if t <= observed_through[i] {
                    if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                        return Err(Error::Validation(format!(
                            "trajectory {}: missing value in {}",
                            ids[i], cols[j].name
                        )));
                    }
                } else {
                    row.fill(f64::NAN);
                }
            }
            let names = cols.iter().map(|c| c.name.clone()).collect();
            cov_mats.push(Matrix::new(n, names, values));
        }

        for (t, a) in exposures.iter_mut().enumerate() {
            for i in 0..n {
                if t <= observed_through[i] {
                    if !a[i].is_finite() {
                        return Err(Error::Validation(format!(
                            "trajectory {}: missing value in {}",
                            ids[i], exposure_names[t]
                        )));
                    }
                    if let Some(s) = &exposure_support {
                        if !s.contains(a[i]) {
                            return Err(Error::Range(format!(
                                "trajectory {}: exposure {} = {} outside declared support",
                                ids[i], exposure_names[t], a[i]
                            )));
                        }
                    }
                } else {
                    a[i] = f64::NAN;
                }
            }
        }

        for i in 0..n {
            if observed_through[i] == tau {
                let y = outcome[i];
                if !y.is_finite() {
                    return Err(Error::Validation(format!(
                        "trajectory {}: missing outcome",
                        ids[i]
                    )));
                }
                if y < lo || y > hi {
                    return Err(Error::Range(format!(
                        "trajectory {}: outcome {y} outside declared bounds [{lo}, {hi}]",
                        ids[i]
                    )));
                }
            } else {
                outcome[i] = f64::NAN;
            }
        }

        let mut history_names = Vec::with_capacity(tau);
        for t in 1..=tau {
            let mut names: Vec<String> = exposure_names[..t - 1].to_vec();
            for cols in &covariate_columns[..t] {
                names.extend(cols.iter().map(|c| c.name.clone()));
            }
            history_names.push(names);
        }

        Ok(Self {
            ids,
            covariate_columns,
            covariates: cov_mats,
            exposure_names,
            exposures,
            censoring_names,
            censoring,
            outcome_name,
            outcome,
            outcome_bounds,
            exposure_support,
            observed_through,
            history_names,
        })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn tau(&self) -> usize {
        self.exposures.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn exposure_name(&self, t: usize) -> &str {
        &self.exposure_names[t - 1]
    }

    pub fn exposure(&self, t: usize) -> &[f64] {
        &self.exposures[t - 1]
    }

    pub fn covariates(&self, t: usize) -> &Matrix {
        &self.covariates[t - 1]
    }

    pub fn covariate_columns(&self, t: usize) -> &[ColumnInfo] {
        &self.covariate_columns[t - 1]
    }

    pub fn has_censoring(&self) -> bool {
        self.censoring.is_some()
    }

    pub fn censoring_name(&self, t: usize) -> Option<&str> {
        self.censoring_names.as_ref().map(|c| c[t - 1].as_str())
    }

    /// `C_t`, when censoring indicators are present.
    pub fn censoring(&self, t: usize) -> Option<&[u8]> {
        self.censoring.as_ref().map(|c| c[t - 1].as_slice())
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn outcome_bounds(&self) -> (f64, f64) {
        self.outcome_bounds
    }

    pub fn exposure_support(&self) -> Option<&ExposureSupport> {
        self.exposure_support.as_ref()
    }

    pub fn observed_through(&self) -> &[usize] {
        &self.observed_through
    }

    /// Whether `A_t` and `L_t` are available for trajectory `i`.
    pub fn available(&self, i: usize, t: usize) -> bool {
        t <= self.observed_through[i] + 1
    }

    /// Whether trajectory `i` remains uncensored at `t + 1` (`C_t = 1`).
    pub fn uncensored(&self, i: usize, t: usize) -> bool {
        self.observed_through[i] >= t
    }

    pub fn outcome_observed(&self, i: usize) -> bool {
        self.observed_through[i] == self.tau()
    }

    /// Column names of `H_t`, exposures first.
    pub fn history_names(&self, t: usize) -> &[String] {
        &self.history_names[t - 1]
    }

    pub fn history_view(&self, i: usize, t: usize) -> Result<HistoryView<'_>> {
        if t == 0 || t > self.tau() {
            return Err(Error::Input(format!("time {t} outside 1..={}", self.tau())));
        }
        if i >= self.n() {
            return Err(Error::Input(format!("trajectory index {i} out of range")));
        }
        if !self.available(i, t) {
            return Err(Error::Input(format!(
                "trajectory {} is censored before time {t}",
                self.ids[i]
            )));
        }
        Ok(HistoryView {
            index: i,
            t,
            values: self.history_row(i, t),
            names: self.history_names(t),
        })
    }

    fn history_row(&self, i: usize, t: usize) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.history_names[t - 1].len());
        values.extend((1..t).map(|s| self.exposures[s - 1][i]));
        for s in 1..=t {
            values.extend_from_slice(self.covariates[s - 1].row(i));
        }
        values
    }

    /// `H_t` for every trajectory; rows of unavailable trajectories are `NaN`.
    pub fn history_matrix(&self, t: usize) -> Matrix {
        let names = self.history_names(t).to_vec();
        let mut data = Vec::with_capacity(self.n() * names.len());
        for i in 0..self.n() {
            data.extend(self.history_row(i, t));
        }
        Matrix::new(self.n(), names, data)
    }

    /// `(H_t, A_t)` design with `exposure` in place of the observed `A_t`.
    pub fn design(&self, t: usize, exposure: &[f64]) -> Matrix {
        self.history_matrix(t)
            .hstack(&Matrix::column(self.exposure_name(t), exposure.to_vec()))
    }

    /// Mean of the observed outcomes.
    pub fn mean_outcome(&self) -> f64 {
        let obs: Vec<f64> = self
            .outcome
            .iter()
            .copied()
            .filter(|y| y.is_finite())
            .collect();
        obs.iter().sum::<f64>() / obs.len() as f64
    }

    /// Copy with trajectories reordered by `order` (a permutation of `0..n`).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if order.len() != n
            || order
                .iter()
                .any(|&i| i >= n || std::mem::replace(&mut seen[i], true))
        {
            return Err(Error::Input("order is not a permutation".into()));
        }
        Self::from_parts(DataParts {
            ids: order.iter().map(|&i| self.ids[i].clone()).collect(),
            covariate_columns: self.covariate_columns.clone(),
            covariates: self
                .covariates
                .iter()
                .map(|m| m.select_rows(order).row_data())
                .collect(),
            exposure_names: self.exposure_names.clone(),
            exposures: self
                .exposures
                .iter()
                .map(|a| order.iter().map(|&i| a[i]).collect())
                .collect(),
            censoring_names: self.censoring_names.clone(),
            censoring: self.censoring.as_ref().map(|c| {
                c.iter()
                    .map(|ct| order.iter().map(|&i| ct[i]).collect())
                    .collect()
            }),
            outcome_name: self.outcome_name.clone(),
            outcome: order.iter().map(|&i| self.outcome[i]).collect(),
            outcome_bounds: self.outcome_bounds,
            exposure_support: self.exposure_support.clone(),
        })
    }

    /// Schema that reloads the file written by [`write_csv`](Self::write_csv).
    pub fn schema(&self) -> Schema {
        let mut categorical = Vec::new();
        let mut levels = BTreeMap::new();
        let covariates = self
            .covariate_columns
            .iter()
            .map(|cols| {
                let mut out = Vec::new();
                for c in cols {
                    match &c.indicator {
                        None => out.push(c.name.clone()),
                        Some((var, level)) => {
                            if !out.contains(var) {
                                out.push(var.clone());
                                categorical.push(var.clone());
                            }
                            levels
                                .entry(var.clone())
                                .or_insert_with(Vec::new)
                                .push(level.clone());
                        }
                    }
                }
                out
            })
            .collect();
        Schema {
            id: "id".into(),
            covariates,
            exposures: self.exposure_names.clone(),
            censoring: self.censoring_names.clone(),
            outcome: self.outcome_name.clone(),
            outcome_bounds: [self.outcome_bounds.0, self.outcome_bounds.1],
            categorical,
            levels,
            exposure_support: self.exposure_support.clone(),
        }
    }

    /// Writes the wide CSV layout, collapsing one-hot groups back to their variable.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let schema = self.schema();
        let mut header = vec![schema.id.clone()];
        for t in 1..=self.tau() {
            header.extend(schema.covariates[t - 1].iter().cloned());
            header.push(self.exposure_names[t - 1].clone());
            if let Some(c) = &self.censoring_names {
                header.push(c[t - 1].clone());
            }
        }
        header.push(self.outcome_name.clone());
        w.write_record(&header)?;

        let fmt = |v: f64| {
            if v.is_finite() {
                format!("{v}")
            } else {
                String::new()
            }
        };
        for i in 0..self.n() {
            let mut rec = vec![self.ids[i].clone()];
            for t in 1..=self.tau() {
                let cols = &self.covariate_columns[t - 1];
                let row = self.covariates[t - 1].row(i);
                let mut emitted: BTreeSet<&str> = BTreeSet::new();
                for (j, c) in cols.iter().enumerate() {
                    match &c.indicator {
                        None => rec.push(fmt(row[j])),
                        Some((var, _)) => {
                            if emitted.insert(var.as_str()) {
                                let level = cols
                                    .iter()
                                    .zip(row)
                                    .find(|(cc, &v)| {
                                        v == 1.0
                                            && cc
                                                .indicator
                                                .as_ref()
                                                .is_some_and(|(vv, _)| vv == var)
                                    })
                                    .and_then(|(cc, _)| {
                                        cc.indicator.as_ref().map(|(_, l)| l.clone())
                                    });
                                rec.push(level.unwrap_or_default());
                            }
                        }
                    }
                }
                rec.push(fmt(self.exposures[t - 1][i]));
                if let Some(c) = &self.censoring {
                    rec.push(c[t - 1][i].to_string());
                }
            }
            rec.push(fmt(self.outcome[i]));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Matrix {
    fn row_data(&self) -> Vec<f64> {
        self.rows().flat_map(|r| r.iter().copied()).collect()
    }
}

fn parse_cell(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        None
    } else {
        s.parse().ok()
    }
}

/// Loads a wide CSV file and validates it against `schema`.
pub fn load_longitudinal_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<LongitudinalData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    let index: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(j, h)| (h.trim(), j))
        .collect();
    let col = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Schema(format!("column {name} not found in header")))
    };
    schema.check()?;
    let tau = schema.tau();

    let id_col = col(&schema.id)?;
    let cov_cols: Vec<Vec<usize>> = schema
        .covariates
        .iter()
        .map(|g| g.iter().map(|c| col(c)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let exp_cols: Vec<usize> = schema
        .exposures
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;
    let cen_cols: Option<Vec<usize>> = schema
        .censoring
        .as_ref()
        .map(|cs| cs.iter().map(|c| col(c)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let y_col = col(&schema.outcome)?;

    let mut records: Vec<csv::StringRecord> = Vec::new();
    for rec in rdr.records() {
        records.push(rec?);
    }
    let numeric_ids = records.iter().all(|r| {
        r.get(id_col)
            .is_some_and(|s| s.trim().parse::<f64>().is_ok())
    });
    records.sort_by(|a, b| {
        let (x, y) = (
            a.get(id_col).unwrap_or("").trim(),
            b.get(id_col).unwrap_or("").trim(),
        );
        if numeric_ids {
            x.parse::<f64>()
                .unwrap()
                .total_cmp(&y.parse::<f64>().unwrap())
        } else {
            x.cmp(y)
        }
    });
    let n = records.len();
    let ids: Vec<String> = records
        .iter()
        .map(|r| r[id_col].trim().to_string())
        .collect();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Validation(format!(
            "duplicate trajectory id {}",
            w[0]
        )));
    }

    let censoring: Option<Vec<Vec<u8>>> = match &cen_cols {
        None => None,
        Some(cols) => {
            let mut out = vec![vec![0u8; n]; tau];
            for (t, &c) in cols.iter().enumerate() {
                for (i, r) in records.iter().enumerate() {
                    let v = parse_cell(&r[c]);
                    out[t][i] = match v {
                        Some(0.0) => 0,
                        Some(1.0) => 1,
                        None if t > 0 && out[t - 1][i] == 0 => 0,
                        _ => {
                            return Err(Error::Validation(format!(
                                "trajectory {}: censoring column {} must be 0 or 1",
                                ids[i],
                                header[c].trim()
                            )))
                        }
                    };
                }
            }
            Some(out)
        }
    };
    // Monotonicity is checked in from_parts; compute availability here to decide
    // which cells must parse.
    let through: Vec<usize> = (0..n)
        .map(|i| match &censoring {
            None => tau,
            Some(c) => (0..tau).find(|&t| c[t][i] == 0).unwrap_or(tau),
        })
        .collect();

    let mut covariate_columns = Vec::with_capacity(tau);
    let mut covariates = Vec::with_capacity(tau);
    for t in 0..tau {
        let mut infos = Vec::new();
        let mut blocks: Vec<Vec<f64>> = Vec::new();
        for (k, name) in schema.covariates[t].iter().enumerate() {
            let c = cov_cols[t][k];
            if schema.categorical.contains(name) {
                let levels: Vec<String> = match schema.levels.get(name) {
                    Some(l) => l.clone(),
                    None => {
                        let set: BTreeSet<String> = records
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| t <= through[*i])
                            .map(|(_, r)| r[c].trim().to_string())
                            .collect();
                        set.into_iter().collect()
                    }
                };
                let mut cols = vec![vec![f64::NAN; n]; levels.len()];
                for (i, r) in records.iter().enumerate() {
                    if t > through[i] {
                        continue;
                    }
                    let raw = r[c].trim();
                    let pos = levels.iter().position(|l| l == raw).ok_or_else(|| {
                        Error::Validation(format!(
                            "trajectory {}: unknown level {raw:?} for {name}",
                            ids[i]
                        ))
                    })?;
                    for (l, colv) in cols.iter_mut().enumerate() {
                        colv[i] = if l == pos { 1.0 } else { 0.0 };
                    }
                }
                infos.extend(levels.iter().map(|l| ColumnInfo::indicator(name, l)));
                blocks.extend(cols);
            } else {
                for (i, r) in records.iter().enumerate() {
                    if t <= through[i] && !is_numeric_or_missing(&r[c]) {
                        return Err(Error::Validation(format!(
                            "trajectory {}: non-numeric value {:?} in {name}",
                            ids[i], &r[c]
                        )));
                    }
                }
                let v: Vec<f64> = records
                    .iter()
                    .map(|r| parse_cell(&r[c]).unwrap_or(f64::NAN))
                    .collect();
                infos.push(ColumnInfo::numeric(name.clone()));
                blocks.push(v);
            }
        }
        let p = blocks.len();
        let mut values = vec![0.0; n * p];
        for (j, b) in blocks.iter().enumerate() {
            for i in 0..n {
                values[i * p + j] = b[i];
            }
        }
        covariate_columns.push(infos);
        covariates.push(values);
    }

    let exposures: Vec<Vec<f64>> = exp_cols
        .iter()
        .map(|&c| {
            records
                .iter()
                .map(|r| parse_cell(&r[c]).unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let outcome: Vec<f64> = records
        .iter()
        .map(|r| parse_cell(&r[y_col]).unwrap_or(f64::NAN))
        .collect();

    LongitudinalData::from_parts(DataParts {
        ids,
        covariate_columns,
        covariates,
        exposure_names: schema.exposures.clone(),
        exposures,
        censoring_names: schema.censoring.clone(),
        censoring,
        outcome_name: schema.outcome.clone(),
        outcome,
        outcome_bounds: (schema.outcome_bounds[0], schema.outcome_bounds[1]),
        exposure_support: schema.exposure_support.clone(),
    })
}

fn is_numeric_or_missing(raw: &str) -> bool {
    let s = raw.trim();
    s.is_empty()
        || s.eq_ignore_ascii_case("na")
        || s.eq_ignore_ascii_case("nan")
        || s.parse::<f64>().is_ok()
}
