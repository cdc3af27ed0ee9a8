//! The built-in verification suite: registered theorem cases with closed-form
//! predictions, plus property checks that have no closed form.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{lower_upper_box, measure_local_dims, LocalDimParams};
use crate::fields::{image_measure, image_points, simulate, FieldSpec, Simulator};
use crate::geometry::{cantor_set, two_phase_cantor, CantorSpec, DiscreteMeasure, FractalSet, TwoPhaseSpec};
use crate::probes::{check_sandwich, fourier_c2_criterion, probe_c1, probe_c2, QuadSpec, Verdict};
use crate::profile::{default_s_grid, potential_f, profile_curve, profile_curve_set, ProfileKind};
use crate::sampling::Seed;
use crate::stats::{ks_two_sample, ks_two_sample_pvalue};

use super::{run_case, write_case, CaseReport, EstimatorConfig, EstimatorKind, ExperimentConfig, SetSpec, TheoremTag, VerifySpec};

/// Result of one suite entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

struct CaseDef {
    id: &'static str,
    field: FieldSpec<f64>,
    set: SetSpec,
    replication: usize,
    run: &'static [EstimatorKind],
    tag: TheoremTag,
    estimators: &'static [&'static str],
}

const CANTOR_DEPTH: usize = 12;

fn cantor() -> SetSpec {
    SetSpec::Cantor {
        branches: 2,
        ratio: 1.0 / 3.0,
        depth: CANTOR_DEPTH,
    }
}

fn definitions() -> Vec<CaseDef> {
    use EstimatorKind::*;
    let n17 = 1 << 17;
    vec![
        CaseDef {
            id: "fbm-saturated",
            field: FieldSpec::fbm(0.5, 2, n17),
            set: SetSpec::Interval,
            replication: 8,
            run: &[Box, LocalDims],
            tag: TheoremTag::HausdorffSet,
            estimators: &["box", "hausdorff"],
        },
        CaseDef {
            id: "fbm-unsaturated",
            field: FieldSpec::fbm(0.8, 2, n17),
            set: SetSpec::Interval,
            replication: 4,
            run: &[Box, LocalDims],
            tag: TheoremTag::HausdorffMeasure,
            estimators: &["hausdorff"],
        },
        CaseDef {
            id: "cantor-image",
            field: FieldSpec::fbm(0.5, 2, n17),
            set: cantor(),
            replication: 4,
            run: &[Box, LocalDims],
            tag: TheoremTag::HausdorffSet,
            estimators: &["hausdorff"],
        },
        CaseDef {
            id: "cantor-packing-line",
            field: FieldSpec::fbm(0.5, 1, n17),
            set: cantor(),
            replication: 4,
            run: &[LowerUpperBox],
            tag: TheoremTag::PackingSet,
            estimators: &["upper-box"],
        },
        CaseDef {
            id: "cantor-packing-plane",
            field: FieldSpec::fbm(0.5, 2, n17),
            set: cantor(),
            replication: 4,
            run: &[LowerUpperBox],
            tag: TheoremTag::PackingLowDim,
            estimators: &["upper-box"],
        },
        CaseDef {
            id: "lfsm-line",
            field: FieldSpec::lfsm(1.5, 0.8, 1, 1 << 14),
            set: SetSpec::Interval,
            replication: 4,
            run: &[Box, LocalDims],
            tag: TheoremTag::Stable,
            estimators: &["hausdorff"],
        },
        CaseDef {
            id: "lfsm-plane",
            field: FieldSpec::lfsm(1.5, 0.8, 2, 1 << 14),
            set: SetSpec::Interval,
            replication: 4,
            run: &[Box, LocalDims],
            tag: TheoremTag::Stable,
            estimators: &["hausdorff"],
        },
        CaseDef {
            id: "rosenblatt-line",
            field: FieldSpec::rosenblatt(0.35, 1, 1 << 11),
            set: SetSpec::Interval,
            replication: 8,
            run: &[Box, LocalDims],
            tag: TheoremTag::Rosenblatt,
            estimators: &["hausdorff", "packing"],
        },
        CaseDef {
            id: "fbm-unsaturated-packing",
            field: FieldSpec::fbm(0.8, 2, n17),
            set: SetSpec::Interval,
            replication: 4,
            run: &[LocalDims],
            tag: TheoremTag::PackingMeasure,
            estimators: &["packing"],
        },
    ]
}

fn to_config(def: CaseDef, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        case: def.id.to_string(),
        replication: def.replication,
        seed,
        out_dir: None,
        field: def.field,
        set: def.set,
        estimators: EstimatorConfig {
            run: def.run.to_vec(),
            ..Default::default()
        },
        verify: Some(VerifySpec {
            tag: def.tag,
            estimators: def.estimators.iter().map(|s| s.to_string()).collect(),
            tolerance: None,
        }),
        probe: None,
    }
}

/// Default master seed of the built-in cases.
pub const SUITE_SEED: u64 = 20_240_601;

/// Identifiers of the registered theorem cases.
pub fn case_ids() -> Vec<&'static str> {
    definitions().into_iter().map(|d| d.id).collect()
}

pub fn case_config(id: &str, seed: u64) -> Result<ExperimentConfig> {
    definitions()
        .into_iter()
        .find(|d| d.id == id)
        .map(|d| to_config(d, seed))
        .ok_or_else(|| Error::Config(format!("unknown case `{id}`; known: {}", case_ids().join(", "))))
}

/// Runs a registered case end to end and compares it with its prediction.
pub fn verify_theorem(id: &str, seed: u64, budget: Option<Duration>) -> Result<CaseReport> {
    run_case(&case_config(id, seed)?, budget)
}

fn outcome(id: &str, pass: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        id: id.to_string(),
        pass,
        detail,
    }
}

fn uniform_interval(level: u32) -> Result<FractalSet<f64>> {
    FractalSet::unit_cube(level, 1)
}

/// Profile of the uniform measure on `[0, 1]`: the curve against
/// `min{s, 1}`, monotonicity up to 1.5 standard errors, and the plateau
/// `s >= 1` against a packing-dimension estimate.
pub fn profile_identities(seed: u64) -> Result<CheckOutcome> {
    let set = uniform_interval(12)?;
    let params = LocalDimParams::default();
    let curve = profile_curve_set(&set, None, &params, Seed::new(seed))?;
    let local = measure_local_dims(&set.measure, &params, Seed::new(seed).derive(1))?;
    let dim_p = local.dim_p.value;

    let (mut worst_s, mut worst) = (0.0, 0.0f64);
    for (&s, &v) in curve.s_grid.iter().zip(&curve.values) {
        let dev = (v - s.min(1.0)).abs();
        if dev > worst {
            (worst_s, worst) = (s, dev);
        }
    }
    let mut drops = 0;
    for i in 1..curve.values.len() {
        let se = curve.std_errors[i].max(curve.std_errors[i - 1]);
        if curve.values[i] < curve.values[i - 1] - 1.5 * se {
            drops += 1;
        }
    }
    let plateau_dev = curve
        .s_grid
        .iter()
        .zip(&curve.values)
        .filter(|(s, _)| **s >= 1.0)
        .map(|(_, v)| (v - dim_p).abs())
        .fold(0.0, f64::max);
    let pass = worst <= 0.08 && drops == 0 && plateau_dev <= 0.10;
    Ok(outcome(
        "profile-identities",
        pass,
        format!(
            "{} s-points, max |Dim_s - min(s,1)| = {worst:.3} at s = {worst_s:.3} (tol 0.08); \
             monotonicity drops = {drops}; plateau vs dim_P = {dim_p:.3}: max dev {plateau_dev:.3} (tol 0.10)",
            curve.s_grid.len()
        ),
    ))
}

fn geom(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Tail exponent of the linear stable motion sup: fitted beta within 0.2 of
/// alpha for alpha in {1.3, 1.7}, 10^4 replicas.
pub fn lfsm_tail(seed: u64) -> Result<CheckOutcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (alpha, h) in [(1.3, 0.85), (1.7, 0.8)] {
        let spec = FieldSpec::lfsm(alpha, h, 1, 1024);
        let rep = probe_c1(
            &spec,
            h,
            &[1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0],
            &geom(1.0, 2000.0, 64),
            10_000,
            Seed::new(seed),
        )?;
        let ok = rep.fitted_exponent.is_some_and(|b| (b - alpha).abs() <= 0.2);
        pass &= ok;
        detail.push(format!(
            "alpha {alpha} (H {h}): beta = {} verdict {:?}",
            rep.fitted_exponent.map_or("none".into(), |b| format!("{b:.3}")),
            rep.verdict
        ));
    }
    Ok(outcome("lfsm-tail", pass, detail.join("; ")))
}

/// Direct and Fourier small-ball probes agree on a four-case panel, and the
/// indicator sandwich holds on 10^4-point lattices.
pub fn fourier_equivalence(seed: u64) -> Result<CheckOutcome> {
    let rs = geom(0.1, 2.0, 8);
    let panel = [
        ("fbm", FieldSpec::fbm(0.5, 1, 1024), 0.5, Verdict::Consistent),
        ("rosenblatt", FieldSpec::rosenblatt(0.35, 1, 1024), 0.7, Verdict::Consistent),
        ("fbm-mismatched", FieldSpec::fbm(0.7, 1, 1024), 0.5, Verdict::Violated),
        ("rosenblatt-mismatched", FieldSpec::rosenblatt(0.35, 1, 1024), 0.5, Verdict::Violated),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, spec, h2, expected) in panel {
        let direct = probe_c2(&spec, h2, &rs, 6, 4000, Seed::new(seed))?;
        let fourier = fourier_c2_criterion(&spec, h2, &rs, 6, 4000, &QuadSpec::default(), Seed::new(seed))?;
        let ok = direct.verdict == fourier.verdict && direct.verdict == expected;
        pass &= ok;
        detail.push(format!("{name}: {:?}/{:?}", direct.verdict, fourier.verdict));
    }
    for d in [1, 2] {
        let per_axis = if d == 1 { 10_000 } else { 100 };
        let c = check_sandwich(d, 1.0, per_axis, 4.0)?;
        let ok = c.lower_failures == 0 && c.upper_failures == 0;
        pass &= ok;
        detail.push(format!("sandwich d={d}: {} points, {} failures", c.points, c.lower_failures + c.upper_failures));
    }
    Ok(outcome("fourier-equivalence", pass, detail.join("; ")))
}

/// KS p-values for `X(1) = 2^H X(1/2)` and `X(1) - X(1/2) = X(1/2)` in law,
/// each pair of samples taken from independent paths.
pub fn sssi_ks(spec: &FieldSpec<f64>, reps: usize, seed: Seed) -> Result<(f64, f64)> {
    let sim = Simulator::new(spec.clone())?;
    let n = spec.grid_n;
    let half = n / 2;
    let c = 2f64.powf(spec.hurst);
    let draws: Vec<(f64, f64, f64, f64)> = (0..reps)
        .map(|r| {
            let a = sim.component(seed.derive(2 * r as u64))?;
            let b = sim.component(seed.derive(2 * r as u64 + 1))?;
            Ok((a[n], c * b[half], a[n] - a[half], b[half]))
        })
        .collect::<Result<_>>()?;
    let col = |k: usize| -> Vec<f64> {
        draws
            .iter()
            .map(|t| [t.0, t.1, t.2, t.3][k])
            .collect()
    };
    let scaling = ks_two_sample_pvalue(ks_two_sample(&col(0), &col(1)), reps, reps);
    let increments = ks_two_sample_pvalue(ks_two_sample(&col(2), &col(3)), reps, reps);
    Ok((scaling, increments))
}

fn property_measures(seed: u64) -> Result<Vec<(String, DiscreteMeasure<f64>)>> {
    let mut out = vec![
        ("interval".to_string(), uniform_interval(12)?.measure),
        ("cantor".to_string(), cantor_set(&CantorSpec::middle_third(10))?.measure),
        (
            "two-phase".to_string(),
            two_phase_cantor(&TwoPhaseSpec {
                phase_a: (2, 0.45),
                phase_b: (2, 1.0 / 3.0),
                block_growth: 3,
                depth: 12,
            })?
            .measure,
        ),
    ];
    let line = uniform_interval(16)?.measure;
    for (name, spec) in [
        ("fbm-0.5-plane", FieldSpec::fbm(0.5, 2, 1 << 16)),
        ("fbm-0.8-plane", FieldSpec::fbm(0.8, 2, 1 << 16)),
        ("lfsm-line", FieldSpec::lfsm(1.5, 0.8, 1, 1 << 16)),
    ] {
        let path = simulate(spec, Seed::new(seed))?;
        out.push((format!("image-{name}"), image_measure(&path, &line)?));
    }
    Ok(out)
}

/// Property suite: estimator ordering, the profile bound, potential
/// monotonicity and scale covariance, SSSI scaling for every simulator, and
/// determinism of every registered case.
pub fn property_suite(seed: u64) -> Result<CheckOutcome> {
    let mut failures: Vec<String> = Vec::new();
    let params = LocalDimParams::default();
    for (name, mu) in property_measures(seed)? {
        let f = measure_local_dims(&mu, &params, Seed::new(seed).derive(7))?;
        if f.dim_h.value > f.dim_p.value + 0.1 {
            failures.push(format!("{name}: dim_H {:.3} > dim_P {:.3} + 0.1", f.dim_h.value, f.dim_p.value));
        }
        let (lo, hi) = lower_upper_box(mu.support(), None)?;
        if f.dim_h.value > hi.value + 0.1 {
            failures.push(format!("{name}: dim_H {:.3} > upper box {:.3} + 0.1", f.dim_h.value, hi.value));
        }
        if lo.value > hi.value + 0.1 {
            failures.push(format!("{name}: lower box {:.3} > upper box {:.3} + 0.1", lo.value, hi.value));
        }
        let grid = default_s_grid(mu.dim());
        let curve = profile_curve(&mu, ProfileKind::MeasureLower, Some(&grid), &params, Seed::new(seed).derive(8))?;
        for (&s, &v) in curve.s_grid.iter().zip(&curve.values) {
            if v > s + 0.05 {
                failures.push(format!("{name}: Dim_{s:.3} = {v:.3} > s + 0.05"));
            }
        }
    }

    // potential: non-decreasing in r, invariant under x -> c x, r -> c r
    let mu = cantor_set(&CantorSpec::<f64>::homogeneous(2, 0.3, 8, 2))?.measure;
    let scaled = mu.pushforward(2, |p| p.iter().map(|v| 7.5 * v).collect())?;
    for s in [0.4, 1.3, 2.5] {
        for x in [[0.1, 0.2], [0.5, 0.5], [0.93, 0.01]] {
            let mut prev = 0.0;
            for k in 0..12 {
                let r = 2f64.powi(-k - 1);
                let v = potential_f(&mu, s, &x, 2f64.powi(-(11 - k) - 1))?;
                if v < prev {
                    failures.push(format!("potential decreases in r at s = {s}"));
                }
                prev = v;
                let a = potential_f(&mu, s, &x, r)?;
                let b = potential_f(&scaled, s, &[7.5 * x[0], 7.5 * x[1]], 7.5 * r)?;
                if (a - b).abs() > 1e-12 * a.abs().max(1e-300) {
                    failures.push(format!("scale covariance fails at s = {s}, r = {r}: {a} vs {b}"));
                }
            }
        }
    }

    let mut ks = Vec::new();
    for spec in [
        FieldSpec::fbm(0.7, 1, 256),
        FieldSpec::lfsm(1.5, 0.8, 1, 256),
        FieldSpec::hfsm(1.5, 0.6, 1, 256),
        FieldSpec::rhflm(0.6, 1, 256),
        FieldSpec::rosenblatt(0.35, 1, 256),
    ] {
        let law = spec.law.name();
        let (p_scale, p_inc) = sssi_ks(&spec, 800, Seed::new(seed).derive(9))?;
        if p_scale < 0.01 || p_inc < 0.01 {
            failures.push(format!("{law}: SSSI KS p-values {p_scale:.4}/{p_inc:.4}"));
        }
        ks.push(format!("{law} {p_scale:.3}/{p_inc:.3}"));
    }

    let mut unstable = Vec::new();
    for id in case_ids() {
        let mut cfg = case_config(id, seed)?;
        cfg.replication = 1;
        let a = run_case(&cfg, None)?.to_json()?;
        let b = run_case(&cfg, None)?.to_json()?;
        if a != b {
            unstable.push(id);
        }
    }
    let probe_spec = FieldSpec::fbm(0.5, 1, 256);
    let p1 = probe_c2(&probe_spec, 0.5, &[0.5, 1.0], 3, 1000, Seed::new(seed))?;
    let p2 = probe_c2(&probe_spec, 0.5, &[0.5, 1.0], 3, 1000, Seed::new(seed))?;
    if serde_json::to_string(&p1)? != serde_json::to_string(&p2)? {
        unstable.push("probe");
    }
    if !unstable.is_empty() {
        failures.push(format!("non-deterministic reports: {}", unstable.join(", ")));
    }

    let pass = failures.is_empty();
    let detail = if pass {
        format!("all properties hold; SSSI KS p-values (scaling/increments): {}", ks.join(", "))
    } else {
        failures.join("; ")
    };
    Ok(outcome("properties", pass, detail))
}

/// Runs every registered case (writing reports under `out` when given) and
/// every property check.
pub fn run_suite(seed: u64, out: Option<&Path>, budget: Option<Duration>) -> Result<Vec<CheckOutcome>> {
    let mut outcomes = Vec::new();
    for id in case_ids() {
        let report = verify_theorem(id, seed, budget)?;
        if let Some(dir) = out {
            write_case(&report, dir)?;
        }
        let detail = report
            .verification
            .iter()
            .map(|v| format!("{} = {:.3} vs {:.3} +- {:.2}", v.estimator, v.estimate, v.predicted, v.tolerance))
            .collect::<Vec<_>>()
            .join("; ");
        let detail = if report.incomplete {
            format!("{detail} (incomplete: {} of {} replicas)", report.replicas.len(), report.config.replication)
        } else {
            detail
        };
        outcomes.push(outcome(id, report.passed(), detail));
    }
    outcomes.push(profile_identities(seed)?);
    outcomes.push(lfsm_tail(seed)?);
    outcomes.push(fourier_equivalence(seed)?);
    outcomes.push(property_suite(seed)?);
    Ok(outcomes)
}

/// Image cloud of a registered case's first replica; used by tooling that
/// wants the raw points.
pub fn first_image(id: &str, seed: u64) -> Result<crate::geometry::PointCloud<f64>> {
    let cfg = case_config(id, seed)?;
    let set = cfg.set.build(cfg.grid_level()?)?;
    let path = simulate(cfg.field.clone(), Seed::new(seed).derive(0))?;
    image_points(&path, &set.cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_is_consistent() {
        let ids = case_ids();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
        for id in ids {
            let cfg = case_config(id, 1).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        }
        assert!(case_config("nope", 1).is_err());
    }

    #[test]
    fn gaussian_sssi_passes() {
        let (a, b) = sssi_ks(&FieldSpec::fbm(0.3, 1, 256), 500, Seed::new(4)).unwrap();
        assert!(a > 0.01 && b > 0.01, "{a} {b}");
    }

    #[test]
    fn wrong_index_fails_sssi() {
        // paths with H = 0.3 tested against the scaling of H = 0.9
        let sim = Simulator::new(FieldSpec::fbm(0.3, 1, 256)).unwrap();
        let c = 2f64.powf(0.9);
        let a: Vec<f64> = (0..500).map(|r| sim.component(Seed::new(5).derive(r)).unwrap()[256]).collect();
        let b: Vec<f64> = (500..1000).map(|r| c * sim.component(Seed::new(5).derive(r)).unwrap()[128]).collect();
        assert!(ks_two_sample_pvalue(ks_two_sample(&a, &b), 500, 500) < 0.01);
    }
}
