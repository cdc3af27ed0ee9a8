//! Configuration, orchestration and persistence of experiments, and the
//! built-in verification suite.
//!
//! A case directory holds `config.toml`, `report.json` and two-column CSV
//! curves. Reports depend only on the configuration, the master seed and
//! the crate version, so repeated runs are byte-identical.

pub mod config;
pub mod predict;
pub mod suite;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{box_dimension, lower_upper_box, measure_local_dims, DimEstimate};
use crate::fields::{image_measure, image_points, Simulator};
use crate::geometry::{format_num, FractalSet, SetMeta};
use crate::probes::{fourier_c2_criterion, probe_c1, probe_c2, Condition, ProbeReport};
use crate::profile::{profile_curve_set, profile_set, ProfileCurve};
use crate::sampling::Seed;

pub use config::{EstimatorConfig, EstimatorKind, ExperimentConfig, ProbeConfig, SetSpec, VerifySpec};
pub use predict::{default_tolerance, predict, PredictInput, Prediction, TheoremTag};

/// Stream offsets under a replica seed.
const LOCAL_STREAM: u64 = 1;
/// Seed index of the set profile, disjoint from replica indices.
const PROFILE_SEED: u64 = u64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaReport {
    pub index: usize,
    pub seed: Seed,
    /// Truncation parameters and normalization constants of the simulator.
    pub truncation: std::collections::BTreeMap<String, f64>,
    pub estimates: Vec<DimEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub estimator: String,
    pub mean: f64,
    /// Replica spread over `sqrt(R)`; the single estimate's own error when
    /// there is one replica.
    pub std_error: f64,
    pub values: Vec<f64>,
}

/// One estimate checked against a closed-form prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationCase {
    pub case: String,
    pub tag: TheoremTag,
    pub predicted: f64,
    pub formula: String,
    pub estimator: String,
    pub estimate: f64,
    pub std_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl VerificationCase {
    pub fn new(case: &str, tag: TheoremTag, prediction: &Prediction, summary: &EstimateSummary, tolerance: f64) -> Self {
        let pass = (summary.mean - prediction.value).abs() <= tolerance;
        VerificationCase {
            case: case.to_string(),
            tag,
            predicted: prediction.value,
            formula: prediction.formula.clone(),
            estimator: summary.estimator.clone(),
            estimate: summary.mean,
            std_error: summary.std_error,
            tolerance,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub set: SetMeta,
    pub replicas: Vec<ReplicaReport>,
    pub summary: Vec<EstimateSummary>,
    /// `Dim_{Hd} E` measured on the natural measure of `E`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_at_hd: Option<DimEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set_profile: Option<ProfileCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prediction: Option<Prediction>,
    pub verification: Vec<VerificationCase>,
    /// Set when the time budget ran out before every replica finished.
    pub incomplete: bool,
}

impl CaseReport {
    pub fn summary_of(&self, estimator: &str) -> Option<&EstimateSummary> {
        self.summary.iter().find(|s| s.estimator == estimator)
    }

    /// True when every verification passed (vacuously true without any).
    pub fn passed(&self) -> bool {
        self.verification.iter().all(|v| v.pass)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn rename(mut e: DimEstimate, name: &str) -> DimEstimate {
    e.estimator = name.to_string();
    e
}

struct CaseInputs {
    sim: Simulator<f64>,
    set: FractalSet<f64>,
    measure: crate::geometry::DiscreteMeasure<f64>,
}

impl CaseInputs {
    /// Everything that can fail before simulation: set, grid and law.
    fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let level = cfg.grid_level()?;
        let set = cfg.set.build(level)?;
        if set.cloud.is_empty() {
            return Err(Error::param("parameter set is empty"));
        }
        let measure = set.measure.snap_to_dyadic(level)?;
        let sim = Simulator::new(cfg.field.clone())?;
        Ok(CaseInputs { sim, set, measure })
    }

    fn replica(&self, cfg: &ExperimentConfig, index: usize, seed: Seed) -> Result<ReplicaReport> {
        let path = self.sim.path(seed)?;
        let cloud = image_points(&path, &self.set.cloud)?;
        let window = cfg.estimators.window;
        let mut estimates = Vec::new();
        for kind in &cfg.estimators.run {
            match kind {
                EstimatorKind::Box => estimates.push(box_dimension(&cloud, window)?),
                EstimatorKind::LowerUpperBox => {
                    let (lo, hi) = lower_upper_box(&cloud, window)?;
                    estimates.extend([lo, hi]);
                }
                EstimatorKind::LocalDims => {
                    let mu = image_measure(&path, &self.measure)?;
                    let f = measure_local_dims(&mu, &cfg.estimators.local, seed.derive(LOCAL_STREAM))?;
                    estimates.extend([
                        rename(f.dim_h, "hausdorff"),
                        rename(f.dim_h_upper, "hausdorff-upper"),
                        rename(f.dim_p, "packing"),
                        rename(f.dim_p_upper, "packing-upper"),
                    ]);
                }
            }
        }
        Ok(ReplicaReport {
            index,
            seed,
            truncation: path.meta.clone(),
            estimates,
        })
    }
}

fn summarize(replicas: &[ReplicaReport]) -> Vec<EstimateSummary> {
    let mut names: Vec<String> = Vec::new();
    for r in replicas {
        for e in &r.estimates {
            if !names.contains(&e.estimator) {
                names.push(e.estimator.clone());
            }
        }
    }
    names
        .into_iter()
        .map(|name| {
            let ests: Vec<&DimEstimate> = replicas
                .iter()
                .flat_map(|r| r.estimates.iter().filter(|e| e.estimator == name))
                .collect();
            let values: Vec<f64> = ests.iter().map(|e| e.value).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std_error = if values.len() > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            } else {
                ests[0].std_error
            };
            EstimateSummary {
                estimator: name,
                mean,
                std_error,
                values,
            }
        })
        .collect()
}

/// Simulates the replicas of a case and runs its estimators, profile and
/// verification. With a budget, replicas that would start after it runs out
/// are skipped and the report is flagged incomplete.
pub fn run_case(cfg: &ExperimentConfig, budget: Option<Duration>) -> Result<CaseReport> {
    run_case_inner(cfg, budget).map_err(|e| e.in_case(&cfg.case))
}

fn run_case_inner(cfg: &ExperimentConfig, budget: Option<Duration>) -> Result<CaseReport> {
    let inputs = CaseInputs::prepare(cfg)?;
    let deadline = budget.map(|b| Instant::now() + b);
    let master = Seed::new(cfg.seed);
    let done: Vec<Option<ReplicaReport>> = (0..cfg.replication)
        .into_par_iter()
        .map(|i| {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                return Ok(None);
            }
            inputs.replica(cfg, i, master.derive(i as u64)).map(Some)
        })
        .collect::<Result<_>>()?;
    let incomplete = done.iter().any(Option::is_none);
    let replicas: Vec<ReplicaReport> = done.into_iter().flatten().collect();
    let summary = summarize(&replicas);

    let set = &inputs.set;
    let params = &cfg.estimators.local;
    let profile_seed = master.derive(PROFILE_SEED);
    let hd = cfg.field.hurst * cfg.field.d as f64;
    let profile_at_hd = match &cfg.verify {
        Some(v) if v.tag.uses_profile() => Some(profile_set(set, hd, params, profile_seed)?),
        _ => None,
    };
    let set_profile = match &cfg.estimators.profile_s {
        Some(grid) => {
            let grid = (!grid.is_empty()).then_some(grid.as_slice());
            Some(profile_curve_set(set, grid, params, profile_seed.derive(1))?)
        }
        None => None,
    };

    let mut report = CaseReport {
        case: cfg.case.clone(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        set: set.meta.clone(),
        replicas,
        summary,
        profile_at_hd,
        set_profile,
        prediction: None,
        verification: Vec::new(),
        incomplete,
    };
    if let Some(v) = &cfg.verify {
        let input = PredictInput {
            tag: v.tag,
            hurst: cfg.field.hurst,
            d: cfg.field.d,
            n_param: 1,
            dim_h_e: set.meta.dim_h,
            dim_p_e: set.meta.dim_p,
            profile: report.profile_at_hd.as_ref().map(|e| e.value),
            alpha: cfg.field.law.alpha().copied(),
        };
        let prediction = predict(&input)?;
        let cantor = !matches!(cfg.set, SetSpec::Interval);
        let tolerance = v
            .tolerance
            .unwrap_or_else(|| default_tolerance(v.tag, cfg.field.d, prediction.value, cantor));
        for name in &v.estimators {
            let verification = match report.summary_of(name) {
                Some(s) => VerificationCase::new(&cfg.case, v.tag, &prediction, s, tolerance),
                None if report.replicas.is_empty() => VerificationCase {
                    case: cfg.case.clone(),
                    tag: v.tag,
                    predicted: prediction.value,
                    formula: prediction.formula.clone(),
                    estimator: name.clone(),
                    estimate: f64::NAN,
                    std_error: f64::NAN,
                    tolerance,
                    pass: false,
                },
                None => {
                    return Err(Error::Config(format!("estimator `{name}` is not among those run")));
                }
            };
            report.verification.push(verification);
        }
        report.prediction = Some(prediction);
    }
    Ok(report)
}

/// Runs a case and writes `config.toml`, `report.json` and plot data under
/// `out_root/<case>`. Returns the case directory.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<PathBuf> {
    let report = run_case(cfg, None)?;
    write_case(&report, out_root)
}

/// Writes a finished case report into its own directory.
pub fn write_case(report: &CaseReport, out_root: &Path) -> Result<PathBuf> {
    let dir = out_root.join(&report.case);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.toml"), report.config.to_toml()?)?;
    std::fs::write(dir.join("report.json"), report.to_json()?)?;
    emit_plot_data(report, &dir)?;
    Ok(dir)
}

/// Runs the `[probe]` section of a configuration.
pub fn run_probe(cfg: &ExperimentConfig) -> Result<ProbeReport> {
    let p = cfg
        .probe
        .as_ref()
        .ok_or_else(|| Error::Config(format!("case `{}` has no [probe] section", cfg.case)))?;
    let seed = Seed::new(cfg.seed);
    let spec = &cfg.field;
    let out = match p.condition {
        Condition::C1 => probe_c1(spec, p.parameter, &p.h_grid, &p.u_grid, p.reps, seed),
        Condition::C2 => probe_c2(spec, p.parameter, &p.r_grid, p.pairs, p.reps, seed),
        Condition::C2Fourier => fourier_c2_criterion(spec, p.parameter, &p.r_grid, p.pairs, p.reps, &p.quad, seed),
    };
    out.map_err(|e| e.in_case(&cfg.case))
}

/// A two-column table for plotting.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotTable {
    pub name: String,
    pub columns: (&'static str, &'static str),
    pub rows: Vec<(f64, f64)>,
}

impl PlotTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},{}\n", self.columns.0, self.columns.1);
        for (x, y) in &self.rows {
            s.push_str(&format!("{},{}\n", format_num(*x), format_num(*y)));
        }
        s
    }
}

/// Reports that have curves worth plotting.
pub trait PlotData {
    fn plot_tables(&self) -> Vec<PlotTable>;
}

impl PlotData for CaseReport {
    fn plot_tables(&self) -> Vec<PlotTable> {
        let mut out = Vec::new();
        for r in &self.replicas {
            if let Some(e) = r.estimates.iter().find(|e| e.estimator == "box") {
                out.push(PlotTable {
                    name: format!("box_counts_{}", r.index),
                    columns: ("log_inv_eps", "log_count"),
                    rows: e.diagnostics.curve.clone(),
                });
            }
        }
        if let Some(p) = &self.set_profile {
            out.push(PlotTable {
                name: "profile".into(),
                columns: ("s", "dim_s"),
                rows: p.s_grid.iter().copied().zip(p.values.iter().copied()).collect(),
            });
        }
        out
    }
}

impl PlotData for ProbeReport {
    fn plot_tables(&self) -> Vec<PlotTable> {
        let (name, columns) = match self.condition {
            Condition::C1 => ("tail", ("log_u", "log_tail")),
            Condition::C2 => ("small_ball", ("log_r", "log_probability")),
            Condition::C2Fourier => ("fourier", ("log_r", "log_integral")),
        };
        let rows = self
            .curve
            .iter()
            .filter(|(_, p)| *p > 0.0)
            .map(|(x, p)| (x.ln(), p.ln()))
            .collect();
        vec![PlotTable {
            name: name.into(),
            columns,
            rows,
        }]
    }
}

/// Writes every plot table of `report` as `<name>.csv` in `dir`.
pub fn emit_plot_data<R: PlotData>(report: &R, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    report
        .plot_tables()
        .into_iter()
        .map(|t| {
            let path = dir.join(format!("{}.csv", t.name));
            std::fs::write(&path, t.to_csv())?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::FieldSpec;

    fn small(case: &str) -> ExperimentConfig {
        ExperimentConfig {
            case: case.into(),
            replication: 2,
            seed: 11,
            out_dir: None,
            field: FieldSpec::fbm(0.5, 2, 1 << 12),
            set: SetSpec::Interval,
            estimators: EstimatorConfig {
                local: crate::estimators::LocalDimParams::default().with_probes(100),
                profile_s: Some(vec![0.5, 1.0]),
                ..Default::default()
            },
            verify: Some(VerifySpec {
                tag: TheoremTag::HausdorffSet,
                estimators: vec!["box".into(), "hausdorff".into()],
                tolerance: Some(0.5),
            }),
            probe: None,
        }
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("twice");
        let a = run_experiment(&cfg, &dir.path().join("a")).unwrap();
        let b = run_experiment(&cfg, &dir.path().join("b")).unwrap();
        for f in ["report.json", "config.toml", "box_counts_0.csv", "profile.csv"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let report: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("report.json")).unwrap()).unwrap();
        assert!(report["replicas"][0]["truncation"]["grid_n"].is_number());
        assert_eq!(report["verification"][0]["formula"], TheoremTag::HausdorffSet.formula());
    }

    #[test]
    fn report_carries_prediction_and_checks() {
        let r = run_case(&small("check"), None).unwrap();
        assert_eq!(r.replicas.len(), 2);
        assert_eq!(r.verification.len(), 2);
        assert_eq!(r.verification[0].predicted, 2.0);
        for v in &r.verification {
            assert_eq!(v.pass, (v.estimate - v.predicted).abs() <= v.tolerance);
        }
        assert!(r.summary_of("packing-upper").is_some());
        let csv = r.plot_tables()[0].to_csv();
        assert!(csv.starts_with("log_inv_eps,log_count\n"));
    }

    #[test]
    fn zero_replication_is_rejected() {
        let mut cfg = small("zero");
        cfg.replication = 0;
        assert!(run_case(&cfg, None).unwrap_err().is_usage());
    }

    #[test]
    fn empty_set_rejected_before_simulation() {
        let mut cfg = small("empty");
        cfg.set = SetSpec::Cantor {
            branches: 2,
            ratio: 1.0 / 3.0,
            depth: 0,
        };
        let err = run_case(&cfg, None).unwrap_err();
        assert!(err.to_string().contains("empty"), "{err}");
    }

    #[test]
    fn exhausted_budget_flags_incomplete() {
        let r = run_case(&small("late"), Some(Duration::ZERO)).unwrap();
        assert!(r.incomplete);
        assert!(r.replicas.is_empty());
        assert!(!r.passed());
    }

    #[test]
    fn prediction_is_scale_free() {
        let mut cfg = small("scaled");
        cfg.replication = 1;
        cfg.estimators.profile_s = None;
        let base = run_case(&cfg, None).unwrap();
        cfg.field = cfg.field.clone().with_scale(25.0);
        let scaled = run_case(&cfg, None).unwrap();
        assert_eq!(base.prediction, scaled.prediction);
        let (a, b) = (base.summary_of("hausdorff").unwrap().mean, scaled.summary_of("hausdorff").unwrap().mean);
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }

    #[test]
    fn probe_plot_rows_are_logs() {
        let rep = crate::probes::probe_c2(&FieldSpec::fbm(0.5, 1, 256), 0.5, &[0.5, 1.0], 2, 1000, Seed::new(1)).unwrap();
        let t = &rep.plot_tables()[0];
        assert_eq!(t.columns, ("log_r", "log_probability"));
        assert!((t.rows[0].0 - 0.5f64.ln()).abs() < 1e-12);
    }
}
