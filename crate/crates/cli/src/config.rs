//! The JSON run configuration of `lmtp estimate`.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use lmtp::estimators::{EstimationOptions, EstimatorKind, NuisanceLearners};
use lmtp::learners::deserialize_specs;
use lmtp::{LearnerLibrary, LearnerSpec, Policy, Schema};

use crate::error::CliError;

fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

fn default_learners() -> Vec<LearnerSpec> {
    vec![LearnerSpec::logistic()]
}

fn default_folds() -> usize {
    lmtp::crossfit::DEFAULT_FOLDS
}

fn default_level() -> f64 {
    0.95
}

fn default_p_floor() -> f64 {
    lmtp::learners::DEFAULT_P_FLOOR
}

fn default_true() -> bool {
    true
}

/// Everything needed for one estimation run. Unknown keys are rejected.
///
/// Defaults: all four estimators, logistic learners for both nuisances, no
/// stacking, `folds = 10`, cross-fitting on, `seed = 0`, no truncation,
/// `level = 0.95`, `p_floor = 0.001`, results to standard output.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// CSV path, relative to the configuration file.
    pub data: PathBuf,
    pub schema: Schema,
    pub policy: Policy,
    /// Second policy; when given, contrasts `policy - reference_policy` are reported.
    #[serde(default)]
    pub reference_policy: Option<Policy>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    /// Outcome regression learners (names or tagged objects).
    #[serde(default = "default_learners", deserialize_with = "deserialize_specs")]
    pub learners: Vec<LearnerSpec>,
    /// Classifiers for the density ratios.
    #[serde(default = "default_learners", deserialize_with = "deserialize_specs")]
    pub ratio_learners: Vec<LearnerSpec>,
    /// Combine several learners by cross-validated stacking.
    #[serde(default)]
    pub stack: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_true")]
    pub crossfit: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_p_floor")]
    pub p_floor: f64,
    /// Output path, relative to the configuration file.
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub no_crossfit: bool,
    pub truncate: Option<f64>,
    pub estimators: Option<Vec<EstimatorKind>>,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        cfg.data = base_dir.join(&cfg.data);
        cfg.out = cfg.out.map(|p| base_dir.join(p));
        Ok(cfg)
    }

    /// Reads a configuration file; relative paths inside it are resolved
    /// against its directory.
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        if let Some(j) = o.folds {
            self.folds = j;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.no_crossfit {
            self.crossfit = false;
        }
        if o.truncate.is_some() {
            self.truncation = o.truncate;
        }
        if let Some(e) = &o.estimators {
            self.estimators = e.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.estimators.is_empty() {
            return Err(CliError::Config("no estimators selected".into()));
        }
        for (i, e) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(e) {
                return Err(CliError::Config(format!("estimator {e} listed twice")));
            }
        }
        if self.crossfit && self.folds < 2 {
            return Err(CliError::Config(format!(
                "cross-fitting needs at least 2 folds, got {}",
                self.folds
            )));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CliError::Config(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        if let Some(c) = self.truncation {
            if !(c.is_finite() && c > 0.0) {
                return Err(CliError::Config(format!(
                    "truncation cap must be positive, got {c}"
                )));
            }
        }
        if !(0.0..0.5).contains(&self.p_floor) {
            return Err(CliError::Config(format!(
                "p_floor must lie in [0, 0.5), got {}",
                self.p_floor
            )));
        }
        self.learners().validate(self.schema.tau())?;
        Ok(())
    }

    fn library(&self, specs: &[LearnerSpec]) -> LearnerLibrary {
        if self.stack {
            LearnerLibrary::stacked(specs.to_vec())
        } else {
            LearnerLibrary {
                specs: specs.to_vec(),
                ..LearnerLibrary::single(LearnerSpec::InterceptOnly)
            }
        }
    }

    pub fn learners(&self) -> NuisanceLearners {
        NuisanceLearners::uniform(
            self.library(&self.learners),
            self.library(&self.ratio_learners),
        )
    }

    pub fn options(&self) -> EstimationOptions {
        EstimationOptions {
            level: self.level,
            truncation: self.truncation,
            p_floor: self.p_floor,
            ..EstimationOptions::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "data": "d.csv",
        "schema": {"id": "id", "covariates": [["L1"]], "exposures": ["A1"],
                   "outcome": "Y", "outcome_bounds": [0, 1]},
        "policy": {"type": "clamped_decrement"}
    }"#;

    #[test]
    fn defaults_are_documented_values() {
        let cfg = RunConfig::from_json(MINIMAL, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.data, PathBuf::from("/tmp/x/d.csv"));
        assert_eq!(cfg.folds, 10);
        assert_eq!(cfg.level, 0.95);
        assert_eq!(cfg.truncation, None);
        assert!(cfg.crossfit);
        assert_eq!(cfg.estimators, EstimatorKind::ALL.to_vec());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replacen('{', r#"{"fold": 3,"#, 1);
        assert!(matches!(
            RunConfig::from_json(&text, Path::new(".")),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::from_json(MINIMAL, Path::new(".")).unwrap();
        cfg.apply(&Overrides {
            folds: Some(3),
            no_crossfit: true,
            estimators: Some(vec![EstimatorKind::Ipw]),
            ..Overrides::default()
        });
        assert_eq!((cfg.folds, cfg.crossfit), (3, false));
        assert_eq!(cfg.estimators, vec![EstimatorKind::Ipw]);
    }

    #[test]
    fn several_learners_need_stacking() {
        let text = MINIMAL.replacen('{', r#"{"learners": ["logistic", "mean"],"#, 1);
        let cfg = RunConfig::from_json(&text, Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
        let text = MINIMAL.replacen(
            '{',
            r#"{"learners": ["logistic", "mean"], "stack": true,"#,
            1,
        );
        RunConfig::from_json(&text, Path::new("."))
            .unwrap()
            .validate()
            .unwrap();
    }
}
