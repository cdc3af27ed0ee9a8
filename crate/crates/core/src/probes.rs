//! Monte Carlo probes of the local maximal inequality (C1), the small-ball
//! condition (C2) and its Fourier form.
//!
//! A probe can refute a condition on the grid it looks at but never prove it:
//! a `Consistent` verdict only means no bound failed beyond 3 sigma.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldSpec, Simulator};
use crate::geometry::format_num;
use crate::sampling::Seed;
use crate::scalar::Real;
use crate::stats::linear_fit;

/// Scale threshold below which (C1) is probed.
pub const H0: f64 = 0.25;
/// Smallest level probed in (C1).
pub const U0: f64 = 1.0;
pub const MIN_REPS: usize = 1000;
/// Cells with fewer hits than this are too noisy to fit or to test.
pub const FLOOR_COUNT: f64 = 50.0;
/// Tail probabilities above this are not yet in the power-law regime.
pub const TAIL_FIT_CEILING: f64 = 0.02;
/// Small-ball probabilities above this are not yet in the `r^d` regime.
pub const SMALL_BALL_CEILING: f64 = 0.1;
/// Smallest pair separation used by the (C2) probes.
pub const MIN_PAIR_GAP: f64 = 1.0 / 64.0;
const SIGMAS: f64 = 3.0;

pub const FLAG_TAIL_FIT: &str = "tail fit window empty";
pub const FLAG_REFERENCE_FLOOR: &str = "reference below floor";
pub const FLAG_SANDWICH: &str = "sandwich cross-check failed";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    #[serde(rename = "C2-fourier")]
    C2Fourier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Violated,
}

/// One probed grid cell: `(h, u)` for (C1), `(|s - t|, r)` for (C2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeCell {
    pub scale: f64,
    pub level: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Value the estimate is tested against, when a reference was fitted.
    pub bound: Option<f64>,
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub condition: Condition,
    pub law: String,
    pub hurst: f64,
    pub d: usize,
    pub grid_n: usize,
    /// `H1` for (C1), `H2` for (C2).
    pub parameter: f64,
    /// Tail exponent `beta` for (C1), small-ball exponent in `r` for (C2).
    pub fitted_exponent: Option<f64>,
    pub fitted_constant: Option<f64>,
    pub violations: usize,
    pub total_probes: usize,
    pub cells: Vec<ProbeCell>,
    /// Pooled curve `(u, P{sup >= u})` or `(r, P{|Z| <= r})`.
    pub curve: Vec<(f64, f64)>,
    pub verdict: Verdict,
    pub seed: Seed,
    pub reps: usize,
    pub meta: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl ProbeReport {
    fn finish(mut self) -> Self {
        self.violations = self.cells.iter().filter(|c| c.violated).count();
        self.total_probes = self.cells.len();
        self.verdict = if self.violations > 0 {
            Verdict::Violated
        } else {
            Verdict::Consistent
        };
        self
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// Pooled curve as CSV.
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head = match self.condition {
            Condition::C1 => "u,empirical_tail",
            Condition::C2 => "r,small_ball",
            Condition::C2Fourier => "r,fourier_integral",
        };
        writeln!(w, "{head}")?;
        for (x, p) in &self.curve {
            writeln!(w, "{},{}", format_num(*x), format_num(*p))?;
        }
        Ok(())
    }
}

fn check_reps(reps: usize) -> Result<()> {
    if reps < MIN_REPS {
        return Err(Error::param(format!("reps must be at least {MIN_REPS}, got {reps}")));
    }
    Ok(())
}

fn check_exponent(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn sorted_grid(name: &str, v: &[f64], ok: impl Fn(f64) -> bool) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::param(format!("{name} grid is empty")));
    }
    if let Some(bad) = v.iter().find(|&&x| !(x.is_finite() && ok(x))) {
        return Err(Error::param(format!("{name} grid value {bad} out of range")));
    }
    let mut g = v.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

fn base_report<T: Real>(condition: Condition, spec: &FieldSpec<T>, parameter: f64, reps: usize, seed: Seed) -> ProbeReport {
    ProbeReport {
        condition,
        law: spec.law.name().to_string(),
        hurst: spec.hurst.as_f64(),
        d: spec.d,
        grid_n: spec.grid_n,
        parameter,
        fitted_exponent: None,
        fitted_constant: None,
        violations: 0,
        total_probes: 0,
        cells: Vec::new(),
        curve: Vec::new(),
        verdict: Verdict::Consistent,
        seed,
        reps,
        meta: BTreeMap::new(),
        flags: Vec::new(),
    }
}

/// Log-log slope of `p` against `x` over points with `lo <= p <= hi`.
fn power_fit(curve: &[(f64, f64)], lo: f64, hi: f64) -> Option<f64> {
    let (x, y): (Vec<f64>, Vec<f64>) = curve
        .iter()
        .filter(|(_, p)| *p >= lo && *p <= hi && *p > 0.0)
        .map(|(u, p)| (u.ln(), p.ln()))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    linear_fit(&x, &y).map(|f| f.slope)
}

fn mean_sd(v: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let m = v.clone().sum::<f64>() / n as f64;
    let ss: f64 = v.map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n.max(2) - 1) as f64).sqrt())
}

/// Probes (C1): tail of the grid supremum of `|X(s) - X(t)| / h^H1` over
/// `|s - t| <= h`.
///
/// Each path contributes `floor(n / 2m)` disjoint windows of half-width
/// `m = round(h n)` steps. The bound is fitted at the largest `h`; a cell is
/// violated when its tail exceeds the fitted one by more than 3 standard
/// errors of the paired per-path difference.
pub fn probe_c1<T: Real>(
    spec: &FieldSpec<T>,
    h1: f64,
    h_grid: &[f64],
    u_grid: &[f64],
    reps: usize,
    seed: Seed,
) -> Result<ProbeReport> {
    check_reps(reps)?;
    check_exponent("H1", h1)?;
    let n = spec.grid_n;
    let mut hs = sorted_grid("h", h_grid, |h| h > 0.0 && h < H0)?;
    hs.reverse();
    let mut steps: Vec<usize> = Vec::new();
    for &h in &hs {
        let m = (h * n as f64).round() as usize;
        if m == 0 {
            return Err(Error::param(format!("h = {h} is below the grid step 1/{n}")));
        }
        if steps.last() != Some(&m) {
            steps.push(m);
        }
    }
    let us = sorted_grid("u", u_grid, |u| u >= U0)?;
    let sim = Simulator::new(spec.clone())?;
    let windows: Vec<usize> = steps.iter().map(|&m| n / (2 * m)).collect();
    let scales: Vec<f64> = steps.iter().map(|&m| m as f64 / n as f64).collect();

    // counts[rep][h][u]: windows of the path whose scaled sup reaches u.
    let counts: Vec<Vec<Vec<u32>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let path = sim.path(seed.derive(r as u64))?;
            Ok(steps
                .iter()
                .zip(&scales)
                .zip(&windows)
                .map(|((&m, &h), &w)| {
                    let norm = h.powf(h1);
                    let mut hits = vec![0u32; us.len() + 1];
                    for k in 0..w {
                        let c = (2 * k + 1) * m;
                        let xc: Vec<f64> = path.at(c).iter().map(|v| v.as_f64()).collect();
                        let mut sup = 0.0f64;
                        for j in c - m..=c + m {
                            let d2: f64 = path
                                .at(j)
                                .iter()
                                .zip(&xc)
                                .map(|(a, b)| (a.as_f64() - b).powi(2))
                                .sum();
                            sup = sup.max(d2);
                        }
                        let s = sup.sqrt() / norm;
                        hits[us.partition_point(|&u| u <= s)] += 1;
                    }
                    // suffix sums: hits at u_i = sups reaching u_i
                    let mut acc = 0;
                    let mut out = vec![0u32; us.len()];
                    for i in (0..us.len()).rev() {
                        acc += hits[i + 1];
                        out[i] = acc;
                    }
                    out
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut report = base_report(Condition::C1, spec, h1, reps, seed);
    for (hi, (&h, &w)) in scales.iter().zip(&windows).enumerate() {
        let total = (reps * w) as f64;
        for (ui, &u) in us.iter().enumerate() {
            let frac = |r: usize, k: usize| counts[r][k][ui] as f64 / windows[k] as f64;
            let (p, sd) = mean_sd((0..reps).map(|r| frac(r, hi)), reps);
            let reference = (0..reps).map(|r| frac(r, 0)).sum::<f64>() / reps as f64;
            let violated = hi > 0 && p * total >= FLOOR_COUNT && {
                let (diff, dsd) = mean_sd((0..reps).map(|r| frac(r, hi) - frac(r, 0)), reps);
                diff > 0.0 && diff > SIGMAS * dsd / (reps as f64).sqrt()
            };
            report.cells.push(ProbeCell {
                scale: h,
                level: u,
                estimate: p,
                std_error: sd / (reps as f64).sqrt(),
                bound: Some(reference),
                violated,
            });
        }
    }

    let pooled_total: f64 = windows.iter().map(|&w| (reps * w) as f64).sum();
    report.curve = us
        .iter()
        .enumerate()
        .map(|(ui, &u)| {
            let hits: u64 = counts.iter().flatten().map(|c| c[ui] as u64).sum();
            (u, hits as f64 / pooled_total)
        })
        .collect();
    let floor = FLOOR_COUNT / pooled_total;
    match power_fit(&report.curve, floor, TAIL_FIT_CEILING) {
        Some(slope) => {
            let beta = -slope;
            report.fitted_exponent = Some(beta);
            report.fitted_constant = report
                .curve
                .iter()
                .filter(|(_, p)| *p >= floor)
                .map(|(u, p)| p * u.powf(beta))
                .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
        }
        None => report.flags.push(FLAG_TAIL_FIT.into()),
    }
    report.meta = sim.meta();
    report.meta.insert("h0".into(), H0);
    report.meta.insert("u0".into(), U0);
    report.meta.insert("floor_count".into(), FLOOR_COUNT);
    report.meta.insert("tail_fit_ceiling".into(), TAIL_FIT_CEILING);
    report.meta.insert("pooled_windows".into(), pooled_total);
    Ok(report.finish())
}

/// Pair separations in grid steps: geometric from the whole interval down to
/// `MIN_PAIR_GAP` (or one step).
fn pair_gaps(n: usize, pair_count: usize) -> Result<Vec<usize>> {
    if pair_count < 2 {
        return Err(Error::param("at least two pairs are needed"));
    }
    let min_gap = MIN_PAIR_GAP.max(1.0 / n as f64);
    let octaves = (1.0 / min_gap).log2();
    let mut gaps: Vec<usize> = (0..pair_count)
        .map(|i| {
            let g = 2f64.powf(-octaves * i as f64 / (pair_count - 1) as f64);
            ((g * n as f64).round() as usize).max(1)
        })
        .collect();
    gaps.dedup();
    if gaps.len() < 2 {
        return Err(Error::param(format!("grid of {n} steps is too coarse for pair probes")));
    }
    Ok(gaps)
}

/// Normalized increments `(X(t) - X(s)) / |t - s|^H2`, `z[pair][rep * d + j]`.
struct Increments {
    gaps: Vec<f64>,
    d: usize,
    z: Vec<Vec<f64>>,
}

impl Increments {
    fn sample<T: Real>(spec: &FieldSpec<T>, h2: f64, pair_count: usize, reps: usize, seed: Seed) -> Result<(Self, Simulator<T>)> {
        let n = spec.grid_n;
        let steps = pair_gaps(n, pair_count)?;
        let sim = Simulator::new(spec.clone())?;
        let d = spec.d;
        let per_rep: Vec<Vec<f64>> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let path = sim.path(seed.derive(2 * r as u64))?;
                let mut rng = seed.derive(2 * r as u64 + 1).rng();
                let mut out = Vec::with_capacity(steps.len() * d);
                for &g in &steps {
                    let s = rng.random_range(0..=n - g);
                    let norm = (g as f64 / n as f64).powf(h2);
                    for (a, b) in path.at(s + g).iter().zip(path.at(s)) {
                        out.push((a.as_f64() - b.as_f64()) / norm);
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let z = (0..steps.len())
            .map(|p| per_rep.iter().flat_map(|v| v[p * d..(p + 1) * d].iter().copied()).collect())
            .collect();
        let gaps = steps.iter().map(|&g| g as f64 / n as f64).collect();
        Ok((Increments { gaps, d, z }, sim))
    }

    fn reps(&self) -> usize {
        self.z[0].len() / self.d
    }

    fn norms(&self, pair: usize) -> Vec<f64> {
        self.z[pair]
            .chunks(self.d)
            .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }
}

fn envelope(r: f64, d: usize) -> f64 {
    r.powi(d as i32).min(1.0)
}

/// Fills the cells of a pair probe: the constant of `K min(1, r^d)` is fitted
/// on the widest pair and every narrower pair is tested against it.
fn pair_cells(report: &mut ProbeReport, gaps: &[f64], rs: &[f64], d: usize, est: &[Vec<(f64, f64)>], floor: f64) {
    let reference = est[0]
        .iter()
        .zip(rs)
        .filter(|((p, _), _)| *p >= floor)
        .map(|((p, se), &r)| (p / envelope(r, d), se / envelope(r, d)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    if reference.is_none() {
        report.flags.push(FLAG_REFERENCE_FLOOR.into());
    }
    for (i, &g) in gaps.iter().enumerate() {
        for (&(p, se), &r) in est[i].iter().zip(rs) {
            let (bound, violated) = match reference {
                Some((k, k_se)) => {
                    let env = envelope(r, d);
                    let b = k * env;
                    let sigma = (se * se + (k_se * env).powi(2)).sqrt();
                    (Some(b), i > 0 && p >= floor && p - b > SIGMAS * sigma)
                }
                None => (None, false),
            };
            report.cells.push(ProbeCell {
                scale: g,
                level: r,
                estimate: p,
                std_error: se,
                bound,
                violated,
            });
        }
    }
}

/// Pooled small-ball constant `max p / r^d` over `r < 1` and the small-ball
/// exponent.
fn pooled_fit(report: &mut ProbeReport, d: usize, floor: f64) {
    report.fitted_constant = report
        .curve
        .iter()
        .filter(|(r, p)| *p >= floor && *r < 1.0)
        .map(|(r, p)| p / envelope(*r, d))
        .fold(None, |a: Option<f64>, v| Some(a.map_or(v, |a| a.max(v))));
    report.fitted_exponent = power_fit(&report.curve, floor, SMALL_BALL_CEILING);
}

/// Probes (C2): small-ball probabilities `P{|X(t) - X(s)| <= |t - s|^H2 r}`
/// for `pair_count` separations from 1 down to [`MIN_PAIR_GAP`].
pub fn probe_c2<T: Real>(
    spec: &FieldSpec<T>,
    h2: f64,
    r_grid: &[f64],
    pair_count: usize,
    reps: usize,
    seed: Seed,
) -> Result<ProbeReport> {
    check_reps(reps)?;
    check_exponent("H2", h2)?;
    let rs = sorted_grid("r", r_grid, |r| r > 0.0)?;
    let (inc, sim) = Increments::sample(spec, h2, pair_count, reps, seed)?;
    let d = inc.d;
    let nf = reps as f64;
    let mut pooled = vec![0usize; rs.len()];
    let est: Vec<Vec<(f64, f64)>> = (0..inc.gaps.len())
        .map(|p| {
            let mut norms = inc.norms(p);
            norms.sort_by(f64::total_cmp);
            rs.iter()
                .enumerate()
                .map(|(k, &r)| {
                    let hits = norms.partition_point(|&x| x <= r);
                    pooled[k] += hits;
                    let q = hits as f64 / nf;
                    (q, (q * (1.0 - q) / nf).sqrt())
                })
                .collect()
        })
        .collect();

    let mut report = base_report(Condition::C2, spec, h2, reps, seed);
    pair_cells(&mut report, &inc.gaps, &rs, d, &est, FLOOR_COUNT / nf);
    let total = nf * inc.gaps.len() as f64;
    report.curve = rs.iter().zip(&pooled).map(|(&r, &c)| (r, c as f64 / total)).collect();
    pooled_fit(&mut report, d, FLOOR_COUNT / total);
    report.meta = sim.meta();
    report.meta.insert("floor_count".into(), FLOOR_COUNT);
    report.meta.insert("min_pair_gap".into(), inc.gaps[inc.gaps.len() - 1]);
    Ok(report.finish())
}

/// `phi_r(x) = prod_j (1 - cos(2 r x_j)) / (2 pi r x_j^2)`, a probability
/// density whose Fourier transform is [`phi_hat`].
pub fn phi_kernel<T: Real>(x: &[T], r: T) -> T {
    let r = r.as_f64();
    debug_assert!(r > 0.0);
    let v: f64 = x.iter().map(|&xj| phi_factor(xj.as_f64(), r)).product();
    T::lit(v)
}

fn phi_factor(x: f64, r: f64) -> f64 {
    if x == 0.0 {
        return r / PI;
    }
    // 1 - cos 2rx = 2 sin^2 rx, without the cancellation near 0
    let s = (r * x).sin() / x;
    s * s / (PI * r)
}

/// `phi_hat_r(z) = prod_j (1 - |z_j| / 2r)^+`.
pub fn phi_hat<T: Real>(z: &[T], r: T) -> T {
    let r = r.as_f64();
    debug_assert!(r > 0.0);
    T::lit(z.iter().map(|&zj| phi_hat_factor(zj.as_f64(), r)).product())
}

fn phi_hat_factor(z: f64, r: f64) -> f64 {
    (1.0 - z.abs() / (2.0 * r)).max(0.0)
}

/// Pointwise check of `1{|z| <= r} <= 2^d phi_hat_r(z)` and
/// `phi_hat_r(z) <= 1{|z| <= 2 sqrt(d) r}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandwichCheck {
    pub points: usize,
    pub lower_failures: usize,
    pub upper_failures: usize,
}

/// Runs the sandwich check on the lattice of `per_axis^d` points filling
/// `[-half_width, half_width]^d`.
pub fn check_sandwich(d: usize, r: f64, per_axis: usize, half_width: f64) -> Result<SandwichCheck> {
    if d == 0 || per_axis < 2 || !(r > 0.0) || !(half_width > 0.0) {
        return Err(Error::param("sandwich lattice needs d >= 1, two points per axis, r > 0"));
    }
    let points = per_axis
        .checked_pow(d as u32)
        .ok_or_else(|| Error::param("lattice too large"))?;
    let step = 2.0 * half_width / (per_axis - 1) as f64;
    let lower_factor = 2f64.powi(d as i32);
    let upper_radius = 2.0 * (d as f64).sqrt() * r;
    let mut z = vec![0.0; d];
    let mut out = SandwichCheck {
        points,
        lower_failures: 0,
        upper_failures: 0,
    };
    for idx in 0..points {
        let mut rest = idx;
        for zj in z.iter_mut() {
            *zj = -half_width + (rest % per_axis) as f64 * step;
            rest /= per_axis;
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let hat = phi_hat(&z, r);
        let inside = |rad: f64| if norm <= rad { 1.0 } else { 0.0 };
        if inside(r) > lower_factor * hat {
            out.lower_failures += 1;
        }
        if hat > inside(upper_radius) {
            out.upper_failures += 1;
        }
    }
    Ok(out)
}

/// Quadrature controls for [`fourier_c2_criterion`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSpec {
    /// Bound on the mass of `phi_r` outside the integration domain.
    pub tolerance: f64,
    /// Nodes per period of the fastest oscillation in the integrand.
    pub points_per_period: usize,
    pub max_nodes: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            tolerance: 1e-3,
            points_per_period: 12,
            max_nodes: 1 << 21,
        }
    }
}

/// Composite Simpson rule on the uniform half-line grid `x_k = k dx`,
/// `k = 0..=K`, for the even integrand `phi_r(x) c(x)`.
struct CosineGrid {
    dx: f64,
    /// Empirical characteristic function at the nodes.
    cf: Vec<f64>,
}

impl CosineGrid {
    fn build(samples: &[f64], dx: f64, nodes: usize) -> Self {
        const RESYNC: usize = 256;
        let cf = samples
            .par_chunks(256)
            .fold(
                || vec![0.0; nodes],
                |mut acc, chunk| {
                    for &z in chunk {
                        // rotate e^{i k dx z}, resynchronizing to bound drift
                        let (ws, wc) = (dx * z).sin_cos();
                        let (mut c, mut s) = (1.0f64, 0.0f64);
                        for (k, a) in acc.iter_mut().enumerate() {
                            if k % RESYNC == 0 {
                                (s, c) = (k as f64 * dx * z).sin_cos();
                            }
                            *a += c;
                            (c, s) = (c * wc - s * ws, s * wc + c * ws);
                        }
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0; nodes],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let m = samples.len() as f64;
        CosineGrid {
            dx,
            cf: cf.into_iter().map(|v| v / m).collect(),
        }
    }

    /// `int_R phi_r(x) c(x) dx` (one coordinate).
    fn integral(&self, r: f64) -> f64 {
        let k = self.cf.len() - 1;
        let mut s = 0.0;
        for (i, c) in self.cf.iter().enumerate() {
            let w = if i == 0 || i == k {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * phi_factor(i as f64 * self.dx, r) * c;
        }
        2.0 * s * self.dx / 3.0
    }
}

/// Evaluates the left side of the Fourier form of (C2),
/// `int phi_r(x) E cos<x, Z> dx` with `Z = (X(t) - X(s)) / |t - s|^H2`, by
/// quadrature of the Monte Carlo characteristic function.
///
/// Components of a vector field are independent copies, so the integral is
/// the product of one-dimensional integrals, each over `[-L, L]` with `L`
/// chosen so that the mass of `phi_r` outside is at most the tolerance.
/// Pairs and seeds match [`probe_c2`], so both probes see the same increments.
pub fn fourier_c2_criterion<T: Real>(
    spec: &FieldSpec<T>,
    h2: f64,
    r_grid: &[f64],
    pairs: usize,
    mc_reps: usize,
    quad: &QuadSpec,
    seed: Seed,
) -> Result<ProbeReport> {
    check_reps(mc_reps)?;
    check_exponent("H2", h2)?;
    if !(quad.tolerance > 0.0 && quad.tolerance < 1.0) || quad.points_per_period < 4 {
        return Err(Error::param("quadrature tolerance must lie in (0, 1) with at least 4 points per period"));
    }
    let rs = sorted_grid("r", r_grid, |r| r > 0.0)?;
    let (inc, sim) = Increments::sample(spec, h2, pairs, mc_reps, seed)?;
    let d = inc.d;
    let m = inc.reps();
    let r_min = rs[0];
    let r_max = rs[rs.len() - 1];
    // outside [-L, L] one factor of phi_r has mass <= 2 / (pi r L)
    let half_width = 2.0 * d as f64 / (PI * r_min * quad.tolerance);

    let mut report = base_report(Condition::C2Fourier, spec, h2, mc_reps, seed);
    let mut sandwich_failures = 0usize;
    let mut max_nodes_used = 0usize;
    let mut est = Vec::with_capacity(inc.gaps.len());
    for p in 0..inc.gaps.len() {
        let mut factors: Vec<Vec<(f64, f64)>> = Vec::with_capacity(d);
        for j in 0..d {
            let samples: Vec<f64> = inc.z[p].iter().skip(j).step_by(d).copied().collect();
            let zmax = samples.iter().fold(0.0f64, |a, z| a.max(z.abs()));
            let freq = (2.0 * r_max).max(zmax);
            let dx = 2.0 * PI / (freq * quad.points_per_period as f64);
            let mut nodes = (half_width / dx).ceil() as usize + 1;
            nodes += 1 - nodes % 2;
            if nodes > quad.max_nodes {
                return Err(Error::Estimation(format!(
                    "quadrature needs {nodes} nodes (limit {}) for r = {r_min} and |Z| up to {zmax:.3e}",
                    quad.max_nodes
                )));
            }
            max_nodes_used = max_nodes_used.max(nodes);
            let grid = CosineGrid::build(&samples, dx, nodes);
            factors.push(
                rs.iter()
                    .map(|&r| {
                        let (_, sd) = mean_sd(samples.iter().map(|&z| phi_hat_factor(z, r)), m);
                        (grid.integral(r), sd / (m as f64).sqrt())
                    })
                    .collect(),
            );
        }
        let norms = inc.norms(p);
        let row: Vec<(f64, f64)> = rs
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let value: f64 = factors.iter().map(|f| f[k].0).product();
                let rel: f64 = factors
                    .iter()
                    .map(|f| (f[k].1 / f[k].0.abs().max(f64::MIN_POSITIVE)).powi(2))
                    .sum();
                let se = value.abs() * rel.sqrt();
                // both sides of the indicator sandwich on the same increments
                let slack = SIGMAS * se + quad.tolerance;
                let inner = norms.iter().filter(|&&x| x <= r).count() as f64 / m as f64;
                let outer = norms.iter().filter(|&&x| x <= 2.0 * (d as f64).sqrt() * r).count() as f64 / m as f64;
                if inner > 2f64.powi(d as i32) * value + slack || value > outer + slack {
                    sandwich_failures += 1;
                }
                (value, se)
            })
            .collect();
        est.push(row);
    }

    pair_cells(&mut report, &inc.gaps, &rs, d, &est, FLOOR_COUNT / m as f64);
    report.curve = rs
        .iter()
        .enumerate()
        .map(|(k, &r)| (r, est.iter().map(|row| row[k].0).sum::<f64>() / est.len() as f64))
        .collect();
    pooled_fit(&mut report, d, FLOOR_COUNT / (m * inc.gaps.len()) as f64);
    if sandwich_failures > 0 {
        report.flags.push(FLAG_SANDWICH.into());
    }
    report.meta = sim.meta();
    report.meta.insert("floor_count".into(), FLOOR_COUNT);
    report.meta.insert("min_pair_gap".into(), inc.gaps[inc.gaps.len() - 1]);
    report.meta.insert("quad_half_width".into(), half_width);
    report.meta.insert("quad_tolerance".into(), quad.tolerance);
    report.meta.insert("quad_nodes".into(), max_nodes_used as f64);
    report.meta.insert("sandwich_lower_factor".into(), 2f64.powi(d as i32));
    report.meta.insert("sandwich_upper_factor".into(), 2.0 * (d as f64).sqrt());
    report.meta.insert("sandwich_failures".into(), sandwich_failures as f64);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::integrate;

    fn geom(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
            .collect()
    }

    #[test]
    fn kernel_special_values() {
        let r = 0.7;
        assert!((phi_kernel(&[0.0, 0.0], r) - (r / PI).powi(2)).abs() < 1e-15);
        assert_eq!(phi_hat(&[0.0, 0.0], r), 1.0);
        assert_eq!(phi_hat(&[0.1, 1.4], r), 0.0);
        assert_eq!(phi_hat(&[2.0], r), 0.0);
        // continuity across the Taylor switch
        let a = phi_kernel(&[0.99e-4 / (2.0 * r)], r);
        let b = phi_kernel(&[1.01e-4 / (2.0 * r)], r);
        assert!((a - b).abs() < 1e-10);
        for x in [-30.0, -1.0, 0.3, 5.0, 1e3] {
            assert!(phi_kernel(&[x], r) >= 0.0);
        }
    }

    #[test]
    fn kernel_integrates_to_one() {
        for r in [0.2, 1.0, 3.0] {
            let l = 2000.0 / r;
            let pieces = (l * r * 4.0) as usize;
            let total = 2.0 * integrate(|x| phi_kernel(&[x], r), 0.0, l, pieces, 8);
            assert!((total - 1.0).abs() < 0.01, "r={r} total={total}");
        }
    }

    #[test]
    fn sandwich_on_lattice() {
        for d in [1, 2] {
            for r in [0.3, 1.0] {
                let per = if d == 1 { 10_000 } else { 100 };
                let c = check_sandwich(d, r, per, 3.0 * r).unwrap();
                assert_eq!(c.points, 10_000);
                assert_eq!((c.lower_failures, c.upper_failures), (0, 0));
            }
        }
    }

    #[test]
    fn reps_below_minimum_rejected() {
        let spec = FieldSpec::<f64>::fbm(0.5, 1, 256);
        assert!(probe_c1(&spec, 0.5, &[0.1], &[1.0], 999, Seed::new(1)).is_err());
        assert!(probe_c2(&spec, 0.5, &[1.0], 4, 10, Seed::new(1)).is_err());
        assert!(probe_c1(&spec, 0.5, &[0.3], &[1.0], 1000, Seed::new(1)).is_err());
        assert!(probe_c1(&spec, 0.5, &[0.1], &[0.5], 1000, Seed::new(1)).is_err());
    }

    #[test]
    fn brownian_small_ball_constant() {
        let spec = FieldSpec::<f64>::fbm(0.5, 1, 256);
        let rs = geom(0.02, 4.0, 16);
        let rep = probe_c2(&spec, 0.5, &rs, 4, 4000, Seed::new(3)).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent, "{:?}", rep.cells.iter().filter(|c| c.violated).collect::<Vec<_>>());
        let k = rep.fitted_constant.unwrap();
        assert!((k - (2.0 / PI).sqrt()).abs() < 0.06, "K = {k}");
        assert!(rep.violations <= rep.total_probes);
    }

    #[test]
    fn mismatched_small_ball_exponent_is_violated() {
        let spec = FieldSpec::<f64>::fbm(0.7, 1, 256);
        let rs = geom(0.05, 2.0, 8);
        let rep = probe_c2(&spec, 0.5, &rs, 4, 2000, Seed::new(4)).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
    }

    #[test]
    fn planar_small_ball_slope() {
        let spec = FieldSpec::<f64>::fbm(0.5, 2, 256);
        let rs = geom(0.03, 1.0, 10);
        let rep = probe_c2(&spec, 0.5, &rs, 3, 4000, Seed::new(5)).unwrap();
        let s = rep.fitted_exponent.unwrap();
        assert!((s - 2.0).abs() < 0.15, "slope {s}");
    }

    #[test]
    fn gaussian_sup_tail_is_steep() {
        let spec = FieldSpec::<f64>::fbm(0.5, 1, 256);
        let us = geom(1.0, 6.0, 30);
        let rep = probe_c1(&spec, 0.5, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], &us, 1000, Seed::new(6)).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert!(rep.fitted_exponent.unwrap() > 5.0, "{:?}", rep.fitted_exponent);
        assert_eq!(rep.meta["h0"], 0.25);
        assert_eq!(rep.meta["u0"], 1.0);
    }

    #[test]
    fn too_large_h1_is_violated_at_any_scale() {
        let us = geom(1.0, 6.0, 20);
        let hs = [1.0 / 8.0, 1.0 / 32.0, 1.0 / 128.0];
        for scale in [1.0, 5.0] {
            let spec = FieldSpec::<f64>::fbm(0.5, 1, 1024).with_scale(scale);
            let bad = probe_c1(&spec, 0.7, &hs, &us, 1000, Seed::new(7)).unwrap();
            assert_eq!(bad.verdict, Verdict::Violated, "scale {scale}");
            let good = probe_c1(&spec, 0.5, &hs, &us, 1000, Seed::new(7)).unwrap();
            assert_eq!(good.verdict, Verdict::Consistent, "scale {scale}");
        }
    }

    #[test]
    fn fourier_matches_gaussian_oracle() {
        let spec = FieldSpec::<f64>::fbm(0.5, 1, 256);
        let rs = [0.5, 1.0, 2.0];
        let rep = fourier_c2_criterion(&spec, 0.5, &rs, 2, 10_000, &QuadSpec::default(), Seed::new(8)).unwrap();
        for &r in &rs {
            let oracle = 2.0 * integrate(|x| phi_kernel(&[x], r) * (-x * x / 2.0).exp(), 0.0, 40.0, 400, 8);
            for c in rep.cells.iter().filter(|c| c.level == r) {
                assert!((c.estimate / oracle - 1.0).abs() < 0.02, "r={r} {} vs {oracle}", c.estimate);
            }
        }
        assert!(!rep.has_flag(FLAG_SANDWICH));
    }

    #[test]
    fn fourier_bounded_for_large_r() {
        let spec = FieldSpec::<f64>::fbm(0.5, 1, 256);
        let rep = fourier_c2_criterion(&spec, 0.5, &[5.0, 20.0, 80.0], 2, 1000, &QuadSpec::default(), Seed::new(9)).unwrap();
        for c in &rep.cells {
            assert!(c.estimate <= 1.0 + 1e-3, "{c:?}");
        }
    }

    #[test]
    fn fourier_and_direct_verdicts_agree() {
        let rs = geom(0.1, 2.0, 6);
        for (h, h2) in [(0.5, 0.5), (0.7, 0.5)] {
            let spec = FieldSpec::<f64>::fbm(h, 1, 256);
            let a = probe_c2(&spec, h2, &rs, 4, 2000, Seed::new(10)).unwrap();
            let b = fourier_c2_criterion(&spec, h2, &rs, 4, 2000, &QuadSpec::default(), Seed::new(10)).unwrap();
            assert_eq!(a.verdict, b.verdict, "H={h} H2={h2}");
            assert_eq!(b.meta["sandwich_lower_factor"], 2.0);
        }
    }

    #[test]
    fn report_round_trips_and_writes_curve() {
        let spec = FieldSpec::<f64>::fbm(0.5, 1, 256);
        let rep = probe_c2(&spec, 0.5, &[0.5, 1.0], 2, 1000, Seed::new(11)).unwrap();
        let back: ProbeReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back.condition, Condition::C2);
        let mut buf = Vec::new();
        rep.write_curve_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("r,small_ball\n"));
    }
}
