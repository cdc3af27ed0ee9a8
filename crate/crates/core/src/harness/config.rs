//! Experiment configuration, read from TOML with unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{BoxWindow, LocalDimParams};
use crate::fields::FieldSpec;
use crate::geometry::{cantor_set, two_phase_cantor, CantorSpec, FractalSet, TwoPhaseSpec};
use crate::probes::{Condition, QuadSpec};

use super::predict::TheoremTag;

/// Parameter set `E` inside `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SetSpec {
    /// The grid points of `[0, 1)`.
    Interval,
    Cantor {
        #[serde(default = "two")]
        branches: usize,
        #[serde(default = "third")]
        ratio: f64,
        depth: usize,
    },
    TwoPhase {
        phase_a: (usize, f64),
        phase_b: (usize, f64),
        block_growth: usize,
        depth: usize,
    },
}

fn two() -> usize {
    2
}

fn third() -> f64 {
    1.0 / 3.0
}

impl SetSpec {
    /// Builds the set; the interval uses the dyadic grid of `level`.
    pub fn build(&self, level: u32) -> Result<FractalSet<f64>> {
        match self {
            SetSpec::Interval => FractalSet::unit_cube(level, 1),
            SetSpec::Cantor { branches, ratio, depth } => {
                cantor_set(&CantorSpec::homogeneous(*branches, *ratio, *depth, 1))
            }
            SetSpec::TwoPhase {
                phase_a,
                phase_b,
                block_growth,
                depth,
            } => two_phase_cantor(&TwoPhaseSpec {
                phase_a: *phase_a,
                phase_b: *phase_b,
                block_growth: *block_growth,
                depth: *depth,
            }),
        }
    }
}

/// Estimators run on every replica.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Box dimension of the image set.
    Box,
    /// Lower and upper box dimensions of the image set.
    LowerUpperBox,
    /// Quantiles of local dimensions of the image measure.
    LocalDims,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "default_run")]
    pub run: Vec<EstimatorKind>,
    #[serde(default)]
    pub window: Option<BoxWindow>,
    #[serde(default)]
    pub local: LocalDimParams,
    /// Exponents at which the profile curve of `E` is reported.
    #[serde(default)]
    pub profile_s: Option<Vec<f64>>,
}

fn default_run() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Box, EstimatorKind::LowerUpperBox, EstimatorKind::LocalDims]
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            run: default_run(),
            window: None,
            local: LocalDimParams::default(),
            profile_s: None,
        }
    }
}

/// What a verification compares: the named estimates against the
/// prediction of `tag`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    pub tag: TheoremTag,
    /// Estimator names as they appear in reports, e.g. `"box"`, `"hausdorff"`.
    pub estimators: Vec<String>,
    #[serde(default)]
    pub tolerance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub condition: Condition,
    /// `H1` or `H2`.
    pub parameter: f64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub h_grid: Vec<f64>,
    #[serde(default)]
    pub u_grid: Vec<f64>,
    #[serde(default)]
    pub r_grid: Vec<f64>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default)]
    pub quad: QuadSpec,
}

fn default_reps() -> usize {
    crate::probes::MIN_REPS
}

fn default_pairs() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: String,
    #[serde(default = "one")]
    pub replication: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub field: FieldSpec<f64>,
    #[serde(default = "interval")]
    pub set: SetSpec,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeConfig>,
}

fn one() -> usize {
    1
}

fn interval() -> SetSpec {
    SetSpec::Interval
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Dyadic level of the simulation grid.
    pub fn grid_level(&self) -> Result<u32> {
        let n = self.field.grid_n;
        if !n.is_power_of_two() {
            return Err(Error::Config(format!("grid_n = {n} must be a power of two")));
        }
        Ok(n.trailing_zeros())
    }

    pub fn validate(&self) -> Result<()> {
        let bad_id = self.case.is_empty()
            || !self
                .case
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.');
        if bad_id {
            return Err(Error::Config(format!(
                "case id `{}` must be non-empty ASCII letters, digits, '-', '_' or '.'",
                self.case
            )));
        }
        if self.replication == 0 {
            return Err(Error::param("replication must be at least 1"));
        }
        self.field.validate()?;
        self.grid_level()?;
        self.estimators.local.validate()?;
        if let Some(w) = &self.estimators.window {
            if w.len() < 2 {
                return Err(Error::param("box window needs at least two scales"));
            }
        }
        if let Some(v) = &self.verify {
            if v.estimators.is_empty() {
                return Err(Error::Config("verify.estimators is empty".into()));
            }
            if let Some(t) = v.tolerance {
                if !(t > 0.0) {
                    return Err(Error::param("tolerance must be positive"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
case = "fbm-demo"
replication = 2
seed = 7

[field]
hurst = 0.5
d = 2
grid_n = 1024
[field.law]
law = "fbm"

[set]
kind = "cantor"
depth = 6

[estimators]
run = ["box", "local-dims"]
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = ExperimentConfig::from_toml(BASIC).unwrap();
        assert_eq!(cfg.replication, 2);
        assert_eq!(cfg.set, SetSpec::Cantor { branches: 2, ratio: 1.0 / 3.0, depth: 6 });
        let again = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let typo = BASIC.replace("seed = 7", "sed = 7");
        assert!(matches!(ExperimentConfig::from_toml(&typo), Err(Error::Config(_))));
        let nested = BASIC.replace("depth = 6", "depth = 6\nbranch = 3");
        assert!(ExperimentConfig::from_toml(&nested).is_err());
    }

    #[test]
    fn zero_replication_rejected() {
        let cfg = BASIC.replace("replication = 2", "replication = 0");
        assert!(matches!(ExperimentConfig::from_toml(&cfg), Err(Error::Parameter(_))));
    }

    #[test]
    fn bad_case_id_and_grid_rejected() {
        assert!(ExperimentConfig::from_toml(&BASIC.replace("fbm-demo", "a/b")).is_err());
        assert!(ExperimentConfig::from_toml(&BASIC.replace("1024", "1000")).is_err());
    }
}
