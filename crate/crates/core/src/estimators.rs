//! Box-counting and local-scaling dimension estimators.
//!
//! Set estimators work on dyadic meshes `eps = 2^-k` anchored at the origin.
//! Measure estimators regress `log mu(B(x, r))` on `log r` at probe points
//! drawn from the measure. All estimates are reported in `f64` whatever the
//! scalar type of the input.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiscreteMeasure, PointCloud};
use crate::sampling::Seed;
use crate::scalar::Real;
use crate::stats::{linear_fit, lower_envelope, quantile_sorted, sliding_slopes, upper_envelope, variance, LineFit};

pub const FLAG_WINDOW_INSUFFICIENT: &str = "window insufficient";
pub const FLAG_RESOLUTION_FLOOR: &str = "window touches resolution floor";
pub const FLAG_DEGENERATE: &str = "degenerate cloud";
pub const FLAG_DISCARDED: &str = "probes discarded";

/// Guards `floor(x / eps)` against rounding of points that sit on a cell
/// boundary by construction.
const ROUNDING_GUARD: f64 = 1e-9;
/// Deepest dyadic level scanned for the resolution floor.
const MAX_LEVEL_SPAN: i32 = 48;
/// Minimum median number of atoms in the smallest default ball.
const FLOOR_ATOMS: f64 = 8.0;
/// Smallest count at which a coarse mesh enters the default window.
pub const SATURATION_COUNT: usize = 32;
/// Width in scales of the local fits behind the lower and upper box estimates.
const LOCAL_FIT_WIDTH: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub residual_rms: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
    /// Regression points `(log x, log y)` behind the estimate.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curve: Vec<(f64, f64)>,
    /// Uncorrected quantile behind a local-dimension summary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_quantile: Option<f64>,
    /// Noise shrinkage factor applied to that quantile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_shrink: Option<f64>,
}

/// A dimension estimate with its regression window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimEstimate {
    pub estimator: String,
    pub value: f64,
    pub std_error: f64,
    /// `(scale_min, scale_max)`.
    pub window: (f64, f64),
    pub n_scales: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub diagnostics: Diagnostics,
}

impl DimEstimate {
    pub fn with_depth(mut self, depth: usize) -> Self {
        self.depth = Some(depth);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.diagnostics.flags.iter().any(|f| f == flag)
    }

    fn flag(&mut self, flag: &str) {
        if !self.has_flag(flag) {
            self.diagnostics.flags.push(flag.to_string());
        }
    }

    fn degenerate(estimator: &str) -> Self {
        DimEstimate {
            estimator: estimator.to_string(),
            value: 0.0,
            std_error: 0.0,
            window: (0.0, 0.0),
            n_scales: 0,
            depth: None,
            seed: None,
            diagnostics: Diagnostics {
                residual_rms: 0.0,
                flags: vec![FLAG_DEGENERATE.to_string()],
                ..Default::default()
            },
        }
    }
}

fn to_f64<T: Real>(cloud: &PointCloud<T>) -> Vec<f64> {
    cloud.coords().iter().map(|v| v.as_f64()).collect()
}

/// Number of distinct `eps`-mesh cells hit by `coords` (flat, `dim` per point).
fn count_cells(coords: &[f64], dim: usize, eps: f64) -> usize {
    let n = coords.len() / dim;
    let mut keys: Vec<i64> = coords
        .iter()
        .map(|&x| (x / eps + ROUNDING_GUARD).floor() as i64)
        .collect();
    if dim == 1 {
        keys.sort_unstable();
        keys.dedup();
        return keys.len();
    }
    let mut idx: Vec<u32> = (0..n as u32).collect();
    let key = |i: u32| &keys[i as usize * dim..(i as usize + 1) * dim];
    idx.sort_unstable_by(|&a, &b| key(a).cmp(key(b)));
    1 + idx.windows(2).filter(|w| key(w[0]) != key(w[1])).count()
}

fn distinct_points(coords: &[f64], dim: usize) -> usize {
    let n = coords.len() / dim;
    let key = |i: usize| &coords[i * dim..(i + 1) * dim];
    let cmp = |a: usize, b: usize| {
        key(a)
            .iter()
            .zip(key(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_unstable_by(|&a, &b| cmp(a, b));
    1 + idx.windows(2).filter(|w| cmp(w[0], w[1]).is_ne()).count()
}

/// Number of `eps`-mesh cells (half-open, anchored at the origin) meeting the
/// cloud, for every `eps` in `scales`.
pub fn box_counts<T: Real>(cloud: &PointCloud<T>, scales: &[T]) -> Result<Vec<usize>> {
    if cloud.is_empty() {
        return Err(Error::param("box counting needs a non-empty cloud"));
    }
    if scales.len() < 2 {
        return Err(Error::param("box counting needs at least two scales"));
    }
    if scales.iter().any(|e| !(*e > T::zero()) || !e.is_finite()) {
        return Err(Error::param("box sizes must be positive and finite"));
    }
    let coords = to_f64(cloud);
    let dim = cloud.dim();
    Ok(scales
        .par_iter()
        .map(|e| count_cells(&coords, dim, e.as_f64()))
        .collect())
}

/// Dyadic regression window: mesh sizes `2^-k` for `coarsest <= k <= finest`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxWindow {
    pub coarsest: i32,
    pub finest: i32,
}

impl BoxWindow {
    pub fn levels(&self) -> impl Iterator<Item = i32> {
        self.coarsest..=self.finest
    }

    pub fn len(&self) -> usize {
        (self.finest - self.coarsest + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(scale_min, scale_max)`.
    pub fn scales(&self) -> (f64, f64) {
        (2f64.powi(-self.finest), 2f64.powi(-self.coarsest))
    }
}

/// Dyadic count curve from the diameter down to the resolution floor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountCurve {
    pub levels: Vec<i32>,
    pub counts: Vec<usize>,
    pub distinct_points: usize,
    /// Level whose mesh is no finer than the diameter.
    pub diameter_level: i32,
    /// First level at which at least half of the distinct points sit in
    /// separate cells.
    pub floor_level: i32,
}

impl CountCurve {
    pub fn scan<T: Real>(cloud: &PointCloud<T>) -> Result<Self> {
        if cloud.is_empty() {
            return Err(Error::param("box counting needs a non-empty cloud"));
        }
        let coords = to_f64(cloud);
        let dim = cloud.dim();
        let distinct = distinct_points(&coords, dim);
        let extent = cloud.extent().as_f64();
        if distinct <= 1 || !(extent > 0.0) {
            return Ok(CountCurve {
                levels: vec![0],
                counts: vec![1],
                distinct_points: distinct.max(1),
                diameter_level: 0,
                floor_level: 0,
            });
        }
        let diameter_level = (1.0 / extent).log2().ceil() as i32;
        let mut levels = Vec::new();
        let mut counts = Vec::new();
        let mut floor_level = diameter_level + MAX_LEVEL_SPAN;
        for k in diameter_level..=diameter_level + MAX_LEVEL_SPAN {
            let c = count_cells(&coords, dim, 2f64.powi(-k));
            levels.push(k);
            counts.push(c);
            if 2 * c >= distinct {
                floor_level = k;
                break;
            }
        }
        Ok(CountCurve {
            levels,
            counts,
            distinct_points: distinct,
            diameter_level,
            floor_level,
        })
    }

    /// Drops the two finest octaves above the floor, and every coarse octave
    /// with fewer than [`SATURATION_COUNT`] cells, where the `O(1)` boundary
    /// term of the count is still comparable to the count itself.
    pub fn default_window(&self) -> BoxWindow {
        let coarsest = self
            .levels
            .iter()
            .zip(&self.counts)
            .find(|(_, &c)| c >= SATURATION_COUNT)
            .map(|(&l, _)| l)
            .unwrap_or(self.floor_level);
        BoxWindow {
            coarsest: coarsest.max(self.diameter_level + 1),
            finest: self.floor_level - 2,
        }
    }

    fn count_at(&self, level: i32) -> Option<usize> {
        let i = level - self.levels.first().copied()?;
        if i < 0 {
            return None;
        }
        self.counts.get(i as usize).copied()
    }

    fn is_degenerate(&self) -> bool {
        self.distinct_points <= 1
    }
}

/// Log-log points `(log(1/eps), log N)` over the window, counting levels
/// outside the scanned range directly.
fn window_curve(coords: &[f64], dim: usize, scan: &CountCurve, window: &BoxWindow) -> (Vec<f64>, Vec<f64>) {
    let ln2 = std::f64::consts::LN_2;
    window
        .levels()
        .map(|k| {
            let c = scan
                .count_at(k)
                .unwrap_or_else(|| count_cells(coords, dim, 2f64.powi(-k)));
            (k as f64 * ln2, (c as f64).ln())
        })
        .unzip()
}

fn window_checks(est: &mut DimEstimate, scan: &CountCurve, window: &BoxWindow) {
    if window.len() < 4 {
        est.flag(FLAG_WINDOW_INSUFFICIENT);
    }
    if window.finest >= scan.floor_level {
        est.flag(FLAG_RESOLUTION_FLOOR);
    }
}

fn estimate_from_fit(name: &str, fit: &LineFit<f64>, window: (f64, f64), n_scales: usize) -> DimEstimate {
    DimEstimate {
        estimator: name.to_string(),
        value: fit.slope,
        std_error: fit.slope_se,
        window,
        n_scales,
        depth: None,
        seed: None,
        diagnostics: Diagnostics {
            residual_rms: fit.residual_rms,
            ..Default::default()
        },
    }
}

fn resolve_window<T: Real>(cloud: &PointCloud<T>, window: Option<BoxWindow>) -> Result<(CountCurve, BoxWindow)> {
    let scan = CountCurve::scan(cloud)?;
    let window = window.unwrap_or_else(|| scan.default_window());
    Ok((scan, window))
}

/// Least-squares slope of `log N(eps)` against `log(1/eps)`.
pub fn box_dimension<T: Real>(cloud: &PointCloud<T>, window: Option<BoxWindow>) -> Result<DimEstimate> {
    let (scan, window) = resolve_window(cloud, window)?;
    if scan.is_degenerate() {
        return Ok(DimEstimate::degenerate("box"));
    }
    if window.len() < 2 {
        let mut est = DimEstimate::degenerate("box");
        est.diagnostics.flags = vec![FLAG_WINDOW_INSUFFICIENT.to_string()];
        return Ok(est);
    }
    let coords = to_f64(cloud);
    let (x, y) = window_curve(&coords, cloud.dim(), &scan, &window);
    let fit = linear_fit(&x, &y).ok_or_else(|| Error::Estimation("box regression failed".into()))?;
    let mut est = estimate_from_fit("box", &fit, window.scales(), window.len());
    est.diagnostics.curve = x.into_iter().zip(y).collect();
    window_checks(&mut est, &scan, &window);
    Ok(est)
}

/// Lower and upper box dimensions as the smallest and largest local slopes
/// of the count curve, each fitted over runs of four consecutive octaves.
pub fn lower_upper_box<T: Real>(
    cloud: &PointCloud<T>,
    window: Option<BoxWindow>,
) -> Result<(DimEstimate, DimEstimate)> {
    let (scan, window) = resolve_window(cloud, window)?;
    if scan.is_degenerate() {
        return Ok((DimEstimate::degenerate("lower-box"), DimEstimate::degenerate("upper-box")));
    }
    if window.len() < 2 {
        let mut lo = DimEstimate::degenerate("lower-box");
        lo.diagnostics.flags = vec![FLAG_WINDOW_INSUFFICIENT.to_string()];
        let mut hi = lo.clone();
        hi.estimator = "upper-box".into();
        return Ok((lo, hi));
    }
    let coords = to_f64(cloud);
    let (x, y) = window_curve(&coords, cloud.dim(), &scan, &window);
    let width = LOCAL_FIT_WIDTH.min(x.len());
    let fits = sliding_slopes(&x, &y, width);
    let pick = |upper: bool| {
        fits.iter()
            .enumerate()
            .min_by(|a, b| {
                let o = a.1.slope.total_cmp(&b.1.slope);
                if upper {
                    o.reverse()
                } else {
                    o
                }
            })
            .map(|(i, f)| (i, *f))
            .expect("window has at least two scales")
    };
    let curve: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    let build = |name: &str, (i, fit): (usize, LineFit<f64>)| {
        let local = BoxWindow {
            coarsest: window.coarsest + i as i32,
            finest: window.coarsest + (i + width) as i32 - 1,
        };
        let mut est = estimate_from_fit(name, &fit, local.scales(), width);
        est.diagnostics.curve = curve.clone();
        window_checks(&mut est, &scan, &window);
        est
    };
    Ok((build("lower-box", pick(false)), build("upper-box", pick(true))))
}

/// Parameters of the local-dimension estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalDimParams {
    /// Increasing radii; `None` picks dyadic radii from the resolution floor
    /// up to `outer_fraction` of the diameter.
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default = "default_probes")]
    pub n_probe: usize,
    /// Lower summary level; the upper summary uses `1 - quantile`.
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    /// Largest default radius as a fraction of the support diameter.
    #[serde(default = "default_outer_fraction")]
    pub outer_fraction: f64,
}

fn default_outer_fraction() -> f64 {
    1.0 / 32.0
}

fn default_probes() -> usize {
    400
}

fn default_quantile() -> f64 {
    0.05
}

fn default_bootstrap() -> usize {
    200
}

impl Default for LocalDimParams {
    fn default() -> Self {
        LocalDimParams {
            radii: None,
            n_probe: default_probes(),
            quantile: default_quantile(),
            bootstrap: default_bootstrap(),
            outer_fraction: default_outer_fraction(),
        }
    }
}

impl LocalDimParams {
    pub fn with_radii(mut self, radii: Vec<f64>) -> Self {
        self.radii = Some(radii);
        self
    }

    pub fn with_probes(mut self, n: usize) -> Self {
        self.n_probe = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_probe == 0 {
            return Err(Error::param("n_probe must be positive"));
        }
        if !(self.quantile > 0.0 && self.quantile < 0.5) {
            return Err(Error::param("quantile level must lie in (0, 1/2)"));
        }
        if !(self.outer_fraction > 0.0 && self.outer_fraction <= 1.0) {
            return Err(Error::param("outer radius fraction must lie in (0, 1]"));
        }
        if let Some(r) = &self.radii {
            check_radii(r)?;
        }
        Ok(())
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.len() < 4 {
        return Err(Error::param("at least four radii are required"));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::param("radii must be positive and finite"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii must be strictly increasing"));
    }
    if radii[radii.len() - 1] / radii[0] < 8.0 * (1.0 - 1e-12) {
        return Err(Error::param("radii must span at least three octaves"));
    }
    Ok(())
}

/// Probe locations and per-radius ball masses shared by the measure
/// estimators.
pub(crate) struct ProbeSet {
    pub coords: Vec<f64>,
    pub masses: Vec<f64>,
    pub dim: usize,
}

impl ProbeSet {
    pub fn from_measure<T: Real>(mu: &DiscreteMeasure<T>) -> Self {
        ProbeSet {
            coords: to_f64(mu.support()),
            masses: mu.masses().iter().map(|m| m.as_f64()).collect(),
            dim: mu.dim(),
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Atom indices drawn from the normalized measure.
    pub fn draw(&self, n: usize, seed: Seed) -> Result<Vec<usize>> {
        let dist = WeightedIndex::new(&self.masses).map_err(|e| Error::Estimation(e.to_string()))?;
        let mut rng = seed.rng();
        Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
    }

    pub fn sq_dist(&self, i: usize, x: &[f64]) -> f64 {
        self.atom(i).iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// `mu(B(x, r))` for every radius (closed balls, radii increasing).
    pub fn ball_masses(&self, x: &[f64], radii: &[f64]) -> Vec<f64> {
        let r2: Vec<f64> = radii.iter().map(|r| r * r).collect();
        let outer = r2[r2.len() - 1];
        let mut bins = vec![0.0; radii.len()];
        for i in 0..self.len() {
            let d2 = self.sq_dist(i, x);
            if d2 <= outer {
                let j = r2.partition_point(|&v| v < d2);
                bins[j] += self.masses[i];
            }
        }
        let mut acc = 0.0;
        for b in &mut bins {
            acc += *b;
            *b = acc;
        }
        bins
    }

    /// Ball masses around atom `p` without the atom itself. An atomic
    /// approximation of a diffuse measure would otherwise carry a mass floor
    /// of one atom at small radii. A single-atom measure keeps its atom.
    pub fn probe_masses(&self, p: usize, radii: &[f64]) -> Vec<f64> {
        let mut m = self.ball_masses(self.atom(p), radii);
        if self.len() > 1 {
            for v in &mut m {
                *v = (*v - self.masses[p]).max(0.0);
            }
        }
        m
    }

    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for axis in 0..self.dim {
            let (lo, hi) = (0..self.len()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                let v = self.coords[i * self.dim + axis];
                (lo.min(v), hi.max(v))
            });
            best = best.max(hi - lo);
        }
        best
    }

    /// Dyadic radii `D 2^-j` from the smallest one whose median ball holds
    /// [`FLOOR_ATOMS`] mean atoms up to `outer_fraction * D`. At least four radii are
    /// returned; the flag reports whether the floor had to be undercut.
    pub fn default_radii(&self, probes: &[usize], outer_fraction: f64) -> (Vec<f64>, bool) {
        let diam = self.diameter();
        if !(diam > 0.0) {
            return (vec![1.0, 2.0, 4.0, 8.0], false);
        }
        let outer = diam * outer_fraction;
        let target = FLOOR_ATOMS * self.total() / self.len() as f64;
        let candidates: Vec<f64> = (0..40).map(|j| outer * 2f64.powi(-j)).rev().collect();
        let sample: Vec<usize> = probes.iter().copied().take(64).collect();
        let per_probe: Vec<Vec<f64>> = sample
            .par_iter()
            .map(|&p| self.probe_masses(p, &candidates))
            .collect();
        let mut first = candidates.len() - 1;
        for j in 0..candidates.len() {
            let mut m: Vec<f64> = per_probe.iter().map(|v| v[j]).collect();
            m.sort_by(f64::total_cmp);
            if quantile_sorted(&m, 0.5).unwrap_or(0.0) >= target {
                first = j;
                break;
            }
        }
        let undercut = first + 3 >= candidates.len();
        let first = first.min(candidates.len() - 4);
        (candidates[first..].to_vec(), undercut)
    }
}

/// Per-probe scaling exponents and their quantile summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalExponentField {
    pub probes: Vec<Vec<f64>>,
    pub radii: Vec<f64>,
    /// Slopes of the upper envelope of `log mu(B(x_i, r))` against `log r`.
    /// The summaries below are noise-corrected quantiles of these; the raw
    /// quantiles are kept in their diagnostics.
    pub lower_exponents: Vec<f64>,
    /// Slopes of the lower envelope; their quantiles estimate packing
    /// dimensions of the measure.
    pub upper_exponents: Vec<f64>,
    pub quantile: f64,
    pub discarded: usize,
    /// `log mu(B(x_i, r_j))` for every kept probe.
    #[serde(skip)]
    pub log_masses: Vec<Vec<f64>>,
    /// Lower quantile of `lower_exponents` (Hausdorff dimension of mu).
    pub dim_h: DimEstimate,
    /// Upper quantile of `lower_exponents` (upper Hausdorff dimension).
    pub dim_h_upper: DimEstimate,
    /// Lower quantile of `upper_exponents` (packing dimension of mu).
    pub dim_p: DimEstimate,
    /// Upper quantile of `upper_exponents` (upper packing dimension).
    pub dim_p_upper: DimEstimate,
}

pub(crate) fn envelope_slope(x: &[f64], y: &[f64], upper: bool) -> Option<LineFit<f64>> {
    let env = if upper {
        upper_envelope(x, y)
    } else {
        lower_envelope(x, y)
    };
    linear_fit(x, &env)
}

/// Envelope slope over all radii, plus the difference between the slopes
/// over the coarse and the fine half of the radii (sharing the middle one).
#[derive(Clone, Copy, Debug)]
pub(crate) struct ProbeSlope {
    pub slope: f64,
    pub split: f64,
}

pub(crate) fn probe_slope(x: &[f64], y: &[f64], upper: bool) -> Option<ProbeSlope> {
    let slope = envelope_slope(x, y, upper)?.slope;
    let h = x.len() / 2;
    let fine = envelope_slope(&x[..=h], &y[..=h], upper)?.slope;
    let coarse = envelope_slope(&x[h..], &y[h..], upper)?.slope;
    Some(ProbeSlope {
        slope,
        split: coarse - fine,
    })
}

/// Quantile of the probe exponents after removing the spread caused by
/// finite-range regression noise.
///
/// Under a common true exponent the coarse and fine half-range slopes carry
/// independent noise, so `Var(coarse - fine) / 4` estimates the noise
/// variance of the full-range slope. The deviation of the raw quantile from
/// the median is shrunk by `sqrt(1 - noise / observed)`, the factor that maps
/// the observed spread onto the spread of the underlying exponents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct CorrectedQuantile {
    pub value: f64,
    pub raw: f64,
    pub shrink: f64,
}

pub(crate) fn corrected_quantile(slopes: &[ProbeSlope], level: f64) -> CorrectedQuantile {
    let mut v: Vec<f64> = slopes.iter().map(|p| p.slope).collect();
    v.sort_by(f64::total_cmp);
    let raw = quantile_sorted(&v, level).unwrap_or(f64::NAN);
    let median = quantile_sorted(&v, 0.5).unwrap_or(f64::NAN);
    let splits: Vec<f64> = slopes.iter().map(|p| p.split).collect();
    let noise = variance(&splits) / 4.0;
    let observed = variance(&v);
    let shrink = if observed > 0.0 {
        (1.0 - noise / observed).max(0.0).sqrt()
    } else {
        0.0
    };
    CorrectedQuantile {
        value: median + (raw - median) * shrink,
        raw,
        shrink,
    }
}

/// Corrected quantile with a bootstrap standard error over probes.
pub(crate) fn bootstrap_quantile(slopes: &[ProbeSlope], level: f64, reps: usize, seed: Seed) -> (CorrectedQuantile, f64) {
    let point = corrected_quantile(slopes, level);
    if reps < 2 || slopes.len() < 2 {
        return (point, 0.0);
    }
    let mut rng = seed.rng();
    let mut boot = Vec::with_capacity(reps);
    let mut buf = slopes.to_vec();
    for _ in 0..reps {
        for slot in buf.iter_mut() {
            *slot = slopes[rng.random_range(0..slopes.len())];
        }
        boot.push(corrected_quantile(&buf, level).value);
    }
    (point, variance(&boot).sqrt())
}

pub(crate) fn summarize(
    name: &str,
    slopes: &[ProbeSlope],
    level: f64,
    radii: &[f64],
    bootstrap: usize,
    seed: Seed,
    flags: &[String],
) -> DimEstimate {
    let (q, se) = bootstrap_quantile(slopes, level, bootstrap, seed);
    DimEstimate {
        estimator: name.to_string(),
        value: q.value,
        std_error: se,
        window: (radii[0], radii[radii.len() - 1]),
        n_scales: radii.len(),
        depth: None,
        seed: Some(seed.seed),
        diagnostics: Diagnostics {
            residual_rms: 0.0,
            flags: flags.to_vec(),
            curve: Vec::new(),
            raw_quantile: Some(q.raw),
            noise_shrink: Some(q.shrink),
        },
    }
}

/// Local dimension exponents of `mu` at `n_probe` points drawn from `mu`.
pub fn measure_local_dims<T: Real>(
    mu: &DiscreteMeasure<T>,
    params: &LocalDimParams,
    seed: Seed,
) -> Result<LocalExponentField> {
    params.validate()?;
    let atoms = ProbeSet::from_measure(mu);
    let probe_idx = atoms.draw(params.n_probe, seed.derive(0))?;
    let mut flags = Vec::new();
    let radii = match &params.radii {
        Some(r) => r.clone(),
        None => {
            let (r, undercut) = atoms.default_radii(&probe_idx, params.outer_fraction);
            if undercut {
                flags.push(FLAG_RESOLUTION_FLOOR.to_string());
            }
            r
        }
    };
    let logr: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let results: Vec<Option<(ProbeSlope, ProbeSlope, Vec<f64>)>> = probe_idx
        .par_iter()
        .map(|&p| {
            let masses = atoms.probe_masses(p, &radii);
            if !(masses[0] > 0.0) {
                return None;
            }
            let logm: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
            let lo = probe_slope(&logr, &logm, true)?;
            let hi = probe_slope(&logr, &logm, false)?;
            Some((lo, hi, logm))
        })
        .collect();
    let mut probes = Vec::new();
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut log_masses = Vec::new();
    for (&p, r) in probe_idx.iter().zip(results) {
        if let Some((lo, hi, logm)) = r {
            probes.push(atoms.atom(p).to_vec());
            lower.push(lo);
            upper.push(hi);
            log_masses.push(logm);
        }
    }
    let discarded = probe_idx.len() - probes.len();
    if discarded > 0 {
        flags.push(FLAG_DISCARDED.to_string());
    }
    if probes.is_empty() {
        return Err(Error::Estimation("every probe has an empty smallest ball".into()));
    }
    let q = params.quantile;
    let b = params.bootstrap;
    let s = |name, level, slopes: &[ProbeSlope], k| summarize(name, slopes, level, &radii, b, seed.derive(k), &flags);
    Ok(LocalExponentField {
        dim_h: s("measure-hausdorff", q, &lower, 1),
        dim_h_upper: s("measure-hausdorff-upper", 1.0 - q, &lower, 2),
        dim_p: s("measure-packing", q, &upper, 3),
        dim_p_upper: s("measure-packing-upper", 1.0 - q, &upper, 4),
        probes,
        radii,
        lower_exponents: lower.iter().map(|p| p.slope).collect(),
        upper_exponents: upper.iter().map(|p| p.slope).collect(),
        quantile: q,
        discarded,
        log_masses,
    })
}

/// Hausdorff dimension of a cloud through the lower local-dimension summary
/// of its natural measure (the cloud's weights, or uniform mass).
pub fn hausdorff_dim_cloud<T: Real>(
    cloud: &PointCloud<T>,
    measure: Option<&DiscreteMeasure<T>>,
    params: &LocalDimParams,
    seed: Seed,
) -> Result<DimEstimate> {
    let owned;
    let mu = match measure {
        Some(m) => {
            if m.support().dim() != cloud.dim() {
                return Err(Error::param("measure and cloud live in different dimensions"));
            }
            m
        }
        None => {
            owned = match cloud.weights() {
                Some(w) => DiscreteMeasure::new(PointCloud::from_flat(cloud.dim(), cloud.coords().to_vec())?, w.to_vec())?,
                None => DiscreteMeasure::uniform(cloud.clone())?,
            };
            &owned
        }
    };
    let mut est = measure_local_dims(mu, params, seed)?.dim_h;
    est.estimator = "hausdorff".into();
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cantor_set, make_dyadic_grid, CantorSpec, FractalSet, TwoPhaseSpec};

    fn unit_interval(level: u32) -> PointCloud<f64> {
        make_dyadic_grid::<f64>(level, 1).unwrap().to_cloud()
    }

    #[test]
    fn counts_on_interval_grid() {
        let cloud = unit_interval(10);
        let scales: Vec<f64> = (1..=10).map(|k| 2f64.powi(-k)).collect();
        let c = box_counts(&cloud, &scales).unwrap();
        for (k, n) in (1..=10).zip(c) {
            assert_eq!(n, 1 << k);
        }
    }

    #[test]
    fn single_point_counts() {
        let cloud = PointCloud::new(vec![vec![0.3, 0.7]]).unwrap();
        let c = box_counts(&cloud, &[0.5, 0.01, 1e-6]).unwrap();
        assert_eq!(c, vec![1, 1, 1]);
        let est = box_dimension(&cloud, None).unwrap();
        assert_eq!(est.value, 0.0);
        assert!(est.has_flag(FLAG_DEGENERATE));
    }

    #[test]
    fn cantor_counts_at_triadic_scales() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(12)).unwrap();
        let scales: Vec<f64> = (1..=12).map(|j| 3f64.powi(-j)).collect();
        let c = box_counts(&set.cloud, &scales).unwrap();
        for (j, n) in (1..=12).zip(c) {
            assert_eq!(n, 1 << j, "j={j}");
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let cloud = unit_interval(3);
        assert!(box_counts(&cloud, &[0.5]).is_err());
        assert!(box_counts(&cloud, &[0.5, -1.0]).is_err());
    }

    #[test]
    fn full_square() {
        let cloud = make_dyadic_grid::<f64>(8, 2).unwrap().to_cloud();
        assert_eq!(cloud.len(), 1 << 16);
        let est = box_dimension(&cloud, None).unwrap();
        assert!((est.value - 2.0).abs() < 0.05, "{est:?}");
        assert!(est.n_scales >= 4);
    }

    #[test]
    fn cantor_box_dimension() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(12)).unwrap();
        let est = box_dimension(&set.cloud, None).unwrap();
        let target = 2f64.ln() / 3f64.ln();
        assert!((est.value - target).abs() < 0.03, "{est:?}");
        let (lo, hi) = lower_upper_box(&set.cloud, None).unwrap();
        assert!(lo.value <= hi.value);
        assert!(hi.value - lo.value < 0.15, "{lo:?} {hi:?}");
    }

    #[test]
    fn shallow_cantor_flags_window() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(4)).unwrap();
        let est = box_dimension(&set.cloud, None).unwrap();
        assert!(est.has_flag(FLAG_WINDOW_INSUFFICIENT), "{est:?}");
    }

    #[test]
    fn interval_lower_upper() {
        let (lo, hi) = lower_upper_box(&unit_interval(14), None).unwrap();
        assert!((lo.value - 1.0).abs() < 0.02 && (hi.value - 1.0).abs() < 0.02);
    }

    #[test]
    fn two_phase_envelopes() {
        // Blocks of 3, 9 and 8 levels; the first block sits above the
        // coarse cutoff.
        let spec = TwoPhaseSpec {
            phase_a: (2usize, 0.45),
            phase_b: (2usize, 1.0 / 3.0),
            block_growth: 3,
            depth: 20,
        };
        let set = two_phase_cantor(&spec);
        let da = 2f64.ln() / 3f64.ln();
        let db = 2f64.ln() / (1.0 / 0.45f64).ln();
        let (lo, hi) = lower_upper_box(&set.cloud, None).unwrap();
        assert!((lo.value - da.min(db)).abs() < 0.08, "{lo:?}");
        assert!((hi.value - da.max(db)).abs() < 0.08, "{hi:?}");

        fn two_phase_cantor(s: &TwoPhaseSpec<f64>) -> FractalSet<f64> {
            crate::geometry::two_phase_cantor(s).unwrap()
        }
    }

    #[test]
    fn point_mass_local_dims() {
        let mu = DiscreteMeasure::point_mass(vec![0.25], 2.0).unwrap();
        let params = LocalDimParams::default().with_radii(vec![1e-3, 1e-2, 1e-1, 1.0]);
        let f = measure_local_dims(&mu, &params, Seed::new(1)).unwrap();
        assert_eq!(f.dim_h.value, 0.0);
        assert_eq!(f.dim_h_upper.value, 0.0);
    }

    #[test]
    fn uniform_interval_local_dims() {
        let mu = DiscreteMeasure::uniform(unit_interval(12)).unwrap();
        let f = measure_local_dims(&mu, &LocalDimParams::default(), Seed::new(2)).unwrap();
        assert!((f.dim_h.value - 1.0).abs() < 0.08, "{:?}", f.dim_h);
        assert!((f.dim_h_upper.value - 1.0).abs() < 0.08, "{:?}", f.dim_h_upper);
        assert!(f.dim_h.value <= f.dim_h_upper.value);
    }

    #[test]
    fn cantor_measure_local_dims() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(12)).unwrap();
        let f = measure_local_dims(&set.measure, &LocalDimParams::default(), Seed::new(3)).unwrap();
        let target = 2f64.ln() / 3f64.ln();
        assert!((f.dim_h.value - target).abs() < 0.08, "{:?}", f.dim_h);
        assert!((f.dim_h_upper.value - target).abs() < 0.08, "{:?}", f.dim_h_upper);
    }

    #[test]
    fn hausdorff_of_interval() {
        let est = hausdorff_dim_cloud(&unit_interval(12), None, &LocalDimParams::default(), Seed::new(4)).unwrap();
        assert!((est.value - 1.0).abs() < 0.08, "{est:?}");
    }

    #[test]
    fn short_radius_span_rejected() {
        let mu = DiscreteMeasure::uniform(unit_interval(8)).unwrap();
        let params = LocalDimParams::default().with_radii(vec![0.1, 0.2, 0.3, 0.4]);
        assert!(measure_local_dims(&mu, &params, Seed::new(0)).is_err());
    }

    #[test]
    fn product_exponents_add() {
        let radii: Vec<f64> = (4..=7).rev().map(|k| 2f64.powi(-k)).collect();
        let params = LocalDimParams::default().with_radii(radii);
        let line = FractalSet::<f64>::unit_cube(9, 1).unwrap();
        let square = FractalSet::<f64>::unit_cube(9, 2).unwrap();
        let a = measure_local_dims(&line.measure, &params, Seed::new(5)).unwrap();
        let b = measure_local_dims(&square.measure, &params, Seed::new(6)).unwrap();
        assert!((b.dim_h.value - 2.0 * a.dim_h.value).abs() < 0.1, "{} {}", a.dim_h.value, b.dim_h.value);
        assert!((b.dim_p.value - 2.0 * a.dim_p.value).abs() < 0.1);
    }

    #[test]
    fn corrected_quantile_is_median_for_pure_noise() {
        // Identical true exponents, independent noise on both halves.
        let mut rng = Seed::new(9).rng();
        let slopes: Vec<ProbeSlope> = (0..4000)
            .map(|_| {
                let u = rng.random::<f64>() - 0.5;
                let w = rng.random::<f64>() - 0.5;
                ProbeSlope {
                    slope: 1.0 + 0.5 * (u + w),
                    split: u - w,
                }
            })
            .collect();
        let q = corrected_quantile(&slopes, 0.05);
        assert!(q.raw < 0.9);
        assert!((q.value - 1.0).abs() < 0.02, "{q:?}");
    }

    #[test]
    fn corrected_quantile_keeps_real_spread() {
        let slopes: Vec<ProbeSlope> = (0..201)
            .map(|i| ProbeSlope {
                slope: i as f64 / 200.0,
                split: 0.0,
            })
            .collect();
        let q = corrected_quantile(&slopes, 0.05);
        assert_eq!(q.shrink, 1.0);
        assert!((q.value - 0.05).abs() < 1e-12);
    }

    #[test]
    fn estimates_round_trip_json() {
        let est = box_dimension(&unit_interval(10), None).unwrap().with_depth(10).with_seed(3);
        let text = serde_json::to_string(&est).unwrap();
        let back: DimEstimate = serde_json::from_str(&text).unwrap();
        assert_eq!(est, back);
    }

    #[test]
    fn single_precision_cloud() {
        let cloud = make_dyadic_grid::<f32>(10, 1).unwrap().to_cloud();
        let est = box_dimension(&cloud, None).unwrap();
        assert!((est.value - 1.0).abs() < 0.02);
    }

    #[test]
    fn ball_masses_match_direct_sum() {
        let set = FractalSet::<f64>::unit_cube(5, 2).unwrap();
        let atoms = ProbeSet::from_measure(&set.measure);
        let radii = [0.05, 0.1, 0.2, 0.4];
        let x = [0.3, 0.55];
        let bins = atoms.ball_masses(&x, &radii);
        for (r, b) in radii.iter().zip(bins) {
            let direct = crate::geometry::ball_mass(&set.measure, &x, *r);
            assert!((b - direct).abs() < 1e-12);
        }
    }
}
