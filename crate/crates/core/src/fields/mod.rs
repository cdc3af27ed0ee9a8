//! Sample paths of self-similar processes on the dyadic grid `k / n` of
//! `[0, 1]`, their vectorization into `R^d`, and image sets and measures.
//!
//! Every simulator produces `n + 1` values `X(0), X(1/n), ..., X(1)` with
//! `X(0) = 0`. A [`Simulator`] does the law-specific precomputation once and
//! then draws independent paths from seeds.

mod fbm;
mod fft;
mod hfsm;
mod lfsm;
mod rhflm;
mod rosenblatt;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DiscreteMeasure, PointCloud};
use crate::sampling::{Annulus, MarkLaw, Seed};
use crate::scalar::Real;

pub use rosenblatt::{discrete_variance as rosenblatt_discrete_variance, RosenblattModel};

/// Default moving-average history of the linear stable motion, in units of
/// the time horizon.
pub const DEFAULT_BURN_IN: f64 = 8.0;
/// Default number of LePage terms for the harmonizable stable motion.
pub const DEFAULT_LEPAGE_TERMS: usize = 10_000;
pub const MAX_ROSENBLATT_GRID: usize = 1 << 12;

/// Process family and its law-specific parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    tag = "law",
    rename_all = "lowercase",
    deny_unknown_fields,
    bound(deserialize = "T: Real + Deserialize<'de>")
)]
pub enum Law<T> {
    Fbm,
    Lfsm {
        alpha: T,
        #[serde(default = "default_burn_in")]
        burn_in: T,
    },
    Hfsm {
        alpha: T,
        #[serde(default = "default_terms")]
        terms: usize,
    },
    Rhflm {
        /// Frequency window; defaults to the band resolvable on the grid.
        #[serde(default)]
        window: Option<Annulus<T>>,
        #[serde(default)]
        marks: Option<MarkLaw<T>>,
    },
    Rosenblatt { kappa: T },
}

fn default_burn_in<T: Real>() -> T {
    T::lit(DEFAULT_BURN_IN)
}

fn default_terms() -> usize {
    DEFAULT_LEPAGE_TERMS
}

impl<T> Law<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Fbm => "fbm",
            Law::Lfsm { .. } => "lfsm",
            Law::Hfsm { .. } => "hfsm",
            Law::Rhflm { .. } => "rhflm",
            Law::Rosenblatt { .. } => "rosenblatt",
        }
    }

    /// Stability index for the stable laws.
    pub fn alpha(&self) -> Option<&T> {
        match self {
            Law::Lfsm { alpha, .. } | Law::Hfsm { alpha, .. } => Some(alpha),
            _ => None,
        }
    }
}

/// Law, self-similarity index, target dimension and grid of a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct FieldSpec<T> {
    pub law: Law<T>,
    pub hurst: T,
    #[serde(default = "one")]
    pub d: usize,
    /// Number of grid steps; the path has `grid_n + 1` time points.
    pub grid_n: usize,
    /// Constant multiplier applied to every path.
    #[serde(default = "unit_scale")]
    pub scale: T,
}

fn one() -> usize {
    1
}

fn unit_scale<T: Real>() -> T {
    T::one()
}

impl<T: Real> FieldSpec<T> {
    pub fn new(law: Law<T>, hurst: T, d: usize, grid_n: usize) -> Self {
        FieldSpec {
            law,
            hurst,
            d,
            grid_n,
            scale: T::one(),
        }
    }

    pub fn fbm(hurst: T, d: usize, grid_n: usize) -> Self {
        Self::new(Law::Fbm, hurst, d, grid_n)
    }

    pub fn lfsm(alpha: T, hurst: T, d: usize, grid_n: usize) -> Self {
        Self::new(
            Law::Lfsm {
                alpha,
                burn_in: default_burn_in(),
            },
            hurst,
            d,
            grid_n,
        )
    }

    pub fn hfsm(alpha: T, hurst: T, d: usize, grid_n: usize) -> Self {
        Self::new(
            Law::Hfsm {
                alpha,
                terms: DEFAULT_LEPAGE_TERMS,
            },
            hurst,
            d,
            grid_n,
        )
    }

    pub fn rhflm(hurst: T, d: usize, grid_n: usize) -> Self {
        Self::new(
            Law::Rhflm {
                window: None,
                marks: None,
            },
            hurst,
            d,
            grid_n,
        )
    }

    /// Rosenblatt process; the index is tied to `kappa` by `H = 2 kappa`.
    pub fn rosenblatt(kappa: T, d: usize, grid_n: usize) -> Self {
        Self::new(Law::Rosenblatt { kappa }, kappa + kappa, d, grid_n)
    }

    pub fn with_scale(mut self, scale: T) -> Self {
        self.scale = scale;
        self
    }

    pub fn step(&self) -> T {
        T::one() / T::from_count(self.grid_n)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hurst;
        if !(h > T::zero() && h < T::one()) {
            return Err(Error::param(format!("self-similarity index {h} outside (0, 1)")));
        }
        if self.d == 0 {
            return Err(Error::param("target dimension must be at least 1"));
        }
        let n = self.grid_n;
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::param(format!("grid size {n} is not a power of two >= 2")));
        }
        if !(self.scale > T::zero()) || !self.scale.is_finite() {
            return Err(Error::param("path scale must be positive and finite"));
        }
        match &self.law {
            Law::Fbm => {
                if !(1 << 8..=1 << 22).contains(&n) {
                    return Err(Error::param(format!(
                        "fbm grid size {n} outside [2^8, 2^22]"
                    )));
                }
            }
            Law::Lfsm { alpha, burn_in } => {
                let a = *alpha;
                if !(a > T::one() && a <= T::lit(2.0)) {
                    return Err(Error::param(format!(
                        "linear stable motion needs 1 < alpha <= 2, got {a}"
                    )));
                }
                if a * h <= T::one() {
                    return Err(Error::param(format!(
                        "alpha * H = {} <= 1: linear fractional stable motion has paths that are \
                         almost surely unbounded on every interval",
                        a * h
                    )));
                }
                if !(*burn_in > T::zero()) || !burn_in.is_finite() {
                    return Err(Error::param("burn-in must be positive"));
                }
            }
            Law::Hfsm { alpha, terms } => {
                let a = *alpha;
                if !(a > T::zero() && a < T::lit(2.0)) {
                    return Err(Error::param(format!(
                        "harmonizable stable motion needs 0 < alpha < 2, got {a}"
                    )));
                }
                if *terms < crate::sampling::MIN_LEPAGE_TERMS {
                    return Err(Error::param(format!(
                        "LePage truncation {terms} below the floor of {}",
                        crate::sampling::MIN_LEPAGE_TERMS
                    )));
                }
            }
            Law::Rhflm { window, marks } => {
                if let Some(w) = window {
                    Annulus::new(w.inner, w.outer, w.dim)?;
                    if w.dim != 1 {
                        return Err(Error::param("frequency window must be one-dimensional"));
                    }
                }
                if let Some(m) = marks {
                    if !(m.modulus > T::zero() && m.total_mass > T::zero()) {
                        return Err(Error::param("mark law needs positive mass and modulus"));
                    }
                }
            }
            Law::Rosenblatt { kappa } => {
                let k = *kappa;
                if !(k > T::lit(0.25) && k < T::lit(0.5)) {
                    return Err(Error::param(format!("kappa {k} outside (1/4, 1/2)")));
                }
                if (h - (k + k)).abs() > T::lit(1e-6) {
                    return Err(Error::param(format!(
                        "Rosenblatt index must equal 2 kappa = {}, got {h}",
                        k + k
                    )));
                }
                if n > MAX_ROSENBLATT_GRID {
                    return Err(Error::param(format!(
                        "Rosenblatt grid {n} above the limit {MAX_ROSENBLATT_GRID}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Law-specific path generator for one scalar component.
trait PathEngine<T>: Send + Sync {
    /// `n + 1` values starting at zero.
    fn sample(&self, seed: Seed) -> Result<Vec<T>>;
    fn meta(&self) -> Vec<(String, f64)>;
}

/// Prepared simulator for one [`FieldSpec`].
pub struct Simulator<T: Real> {
    spec: FieldSpec<T>,
    engine: Box<dyn PathEngine<T>>,
}

impl<T: Real> std::fmt::Debug for Simulator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulator").field("spec", &self.spec).finish()
    }
}

impl<T: Real> Simulator<T> {
    pub fn new(spec: FieldSpec<T>) -> Result<Self> {
        spec.validate()?;
        let n = spec.grid_n;
        let h = spec.hurst;
        let engine: Box<dyn PathEngine<T>> = match &spec.law {
            Law::Fbm => Box::new(fbm::Fbm::new(h, n)?),
            Law::Lfsm { alpha, burn_in } => Box::new(lfsm::Lfsm::new(*alpha, h, n, *burn_in)?),
            Law::Hfsm { alpha, terms } => Box::new(hfsm::Hfsm::new(*alpha, h, n, *terms)?),
            Law::Rhflm { window, marks } => {
                let window = match window {
                    Some(w) => *w,
                    None => Annulus::for_grid(n)?,
                };
                Box::new(rhflm::Rhflm::new(h, n, window, marks.unwrap_or_default())?)
            }
            Law::Rosenblatt { kappa } => Box::new(RosenblattModel::new(*kappa, n)?),
        };
        Ok(Simulator { spec, engine })
    }

    pub fn spec(&self) -> &FieldSpec<T> {
        &self.spec
    }

    /// One scalar component (`n + 1` values).
    pub fn component(&self, seed: Seed) -> Result<Vec<T>> {
        let mut v = self.engine.sample(seed)?;
        if self.spec.scale != T::one() {
            for x in &mut v {
                *x = *x * self.spec.scale;
            }
        }
        if let Some(bad) = v.iter().position(|x| !x.is_finite()) {
            return Err(Error::Simulation(format!(
                "{} produced a non-finite value at grid index {bad}",
                self.spec.law.name()
            )));
        }
        Ok(v)
    }

    /// A `d`-dimensional path; component `j` uses `seed.derive(j)`.
    pub fn path(&self, seed: Seed) -> Result<SamplePath<T>> {
        let comps = (0..self.spec.d)
            .map(|j| {
                let s = seed.derive(j as u64);
                Ok((s, self.component(s)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut spec1 = self.spec.clone();
        spec1.d = 1;
        let parts: Vec<SamplePath<T>> = comps
            .into_iter()
            .map(|(s, v)| SamplePath::from_component(spec1.clone(), s, v, self.meta()))
            .collect();
        let mut out = vectorize(&parts)?;
        out.seed = seed;
        Ok(out)
    }

    /// Truncation parameters and normalization constants.
    pub fn meta(&self) -> BTreeMap<String, f64> {
        let mut m: BTreeMap<String, f64> = self.engine.meta().into_iter().collect();
        m.insert("grid_n".into(), self.spec.grid_n as f64);
        m.insert("hurst".into(), self.spec.hurst.as_f64());
        m.insert("scale".into(), self.spec.scale.as_f64());
        m
    }
}

/// A trajectory `t -> X(t)` in `R^d` on the grid `k / n`, `k = 0..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct SamplePath<T> {
    pub spec: FieldSpec<T>,
    /// Seed of the whole path. Component seeds are recorded separately.
    pub seed: Seed,
    pub component_seeds: Vec<Seed>,
    pub meta: BTreeMap<String, f64>,
    times: Vec<T>,
    /// Row-major `(n + 1) x d`.
    values: Vec<T>,
}

impl<T: Real> SamplePath<T> {
    fn from_component(spec: FieldSpec<T>, seed: Seed, values: Vec<T>, meta: BTreeMap<String, f64>) -> Self {
        let n = spec.grid_n;
        let times = (0..=n)
            .map(|k| T::from_count(k) / T::from_count(n))
            .collect();
        SamplePath {
            spec,
            seed,
            component_seeds: vec![seed],
            meta,
            times,
            values,
        }
    }

    pub fn d(&self) -> usize {
        self.spec.d
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `X(k / n)`.
    pub fn at(&self, k: usize) -> &[T] {
        let d = self.d();
        &self.values[k * d..(k + 1) * d]
    }

    /// Values of component `j` along the grid.
    pub fn component(&self, j: usize) -> Vec<T> {
        self.values.iter().skip(j).step_by(self.d()).copied().collect()
    }

    /// Grid index of a time in `[0, 1]`, rounding to the nearest grid point.
    pub fn grid_index(&self, t: T) -> Result<usize> {
        let tol = T::lit(1e-9);
        if !(t >= -tol && t <= T::one() + tol) {
            return Err(Error::param(format!("time {t} outside [0, 1]")));
        }
        let n = self.spec.grid_n;
        let k = (t * T::from_count(n)).round().to_usize().unwrap_or(0);
        Ok(k.min(n))
    }

    /// Writes `t,x1,...,xd` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let head: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.d()).map(|j| format!("x{j}")))
            .collect();
        writeln!(w, "{}", head.join(","))?;
        for (k, t) in self.times.iter().enumerate() {
            let row: Vec<String> = std::iter::once(format!("{:?}", t.as_f64()))
                .chain(self.at(k).iter().map(|v| format!("{:?}", v.as_f64())))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads values written by [`SamplePath::write_csv`] and attaches them to
    /// the metadata of `header`.
    pub fn read_csv<R: BufRead>(header: PathHeader<T>, r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::param("empty path file"))??;
        let cols = first.split(',').count();
        if cols != header.spec.d + 1 {
            return Err(Error::param("path file column count does not match dimension"));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',').map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::param(format!("bad path value `{c}`: {e}")))
            });
            times.push(it.next().unwrap()?);
            for v in it {
                values.push(v?);
            }
        }
        if times.len() != header.spec.grid_n + 1 || values.len() != times.len() * header.spec.d {
            return Err(Error::param("path file does not match its grid"));
        }
        Ok(SamplePath {
            spec: header.spec,
            seed: header.seed,
            component_seeds: header.component_seeds,
            meta: header.meta,
            times,
            values,
        })
    }

    /// Metadata envelope written next to the CSV values.
    pub fn header(&self) -> PathHeader<T> {
        PathHeader {
            spec: self.spec.clone(),
            seed: self.seed,
            component_seeds: self.component_seeds.clone(),
            meta: self.meta.clone(),
        }
    }
}

/// JSON metadata of a serialized path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct PathHeader<T> {
    pub spec: FieldSpec<T>,
    pub seed: Seed,
    pub component_seeds: Vec<Seed>,
    pub meta: BTreeMap<String, f64>,
}

pub fn simulate<T: Real>(spec: FieldSpec<T>, seed: Seed) -> Result<SamplePath<T>> {
    Simulator::new(spec)?.path(seed)
}

pub fn simulate_fbm<T: Real>(hurst: T, n: usize, seed: Seed) -> Result<SamplePath<T>> {
    simulate(FieldSpec::fbm(hurst, 1, n), seed)
}

pub fn simulate_lfsm<T: Real>(alpha: T, hurst: T, n: usize, seed: Seed) -> Result<SamplePath<T>> {
    simulate(FieldSpec::lfsm(alpha, hurst, 1, n), seed)
}

pub fn simulate_hfsm<T: Real>(alpha: T, hurst: T, n: usize, seed: Seed) -> Result<SamplePath<T>> {
    simulate(FieldSpec::hfsm(alpha, hurst, 1, n), seed)
}

pub fn simulate_rhflm<T: Real>(
    hurst: T,
    n: usize,
    seed: Seed,
    window: Option<Annulus<T>>,
) -> Result<SamplePath<T>> {
    let mut spec = FieldSpec::rhflm(hurst, 1, n);
    spec.law = Law::Rhflm {
        window,
        marks: None,
    };
    simulate(spec, seed)
}

pub fn simulate_rosenblatt<T: Real>(kappa: T, n: usize, seed: Seed) -> Result<SamplePath<T>> {
    simulate(FieldSpec::rosenblatt(kappa, 1, n), seed)
}

/// Stacks independent scalar paths into one path in `R^d`.
pub fn vectorize<T: Real>(components: &[SamplePath<T>]) -> Result<SamplePath<T>> {
    let first = components
        .first()
        .ok_or_else(|| Error::param("vectorize needs at least one component"))?;
    let mut base = first.spec.clone();
    base.d = 1;
    let mut seeds = Vec::with_capacity(components.len());
    for c in components {
        let mut s = c.spec.clone();
        s.d = 1;
        if c.d() != 1 || s != base || c.times != first.times {
            return Err(Error::param("components must be scalar paths on identical grids and specs"));
        }
        if seeds.contains(&c.seed) {
            return Err(Error::param(
                "components share a seed and would not be independent",
            ));
        }
        seeds.push(c.seed);
    }
    let d = components.len();
    let len = first.len();
    let mut values = Vec::with_capacity(len * d);
    for k in 0..len {
        for c in components {
            values.push(c.values[k]);
        }
    }
    let mut spec = base;
    spec.d = d;
    Ok(SamplePath {
        spec,
        seed: first.seed,
        component_seeds: seeds,
        meta: first.meta.clone(),
        times: first.times.clone(),
        values,
    })
}

/// `{X(t) : t in E}` with `E` snapped to the nearest grid points; duplicates
/// are kept.
pub fn image_points<T: Real>(path: &SamplePath<T>, set: &PointCloud<T>) -> Result<PointCloud<T>> {
    if set.dim() != 1 {
        return Err(Error::param("parameter set must lie in [0, 1]"));
    }
    let d = path.d();
    let mut coords = Vec::with_capacity(set.len() * d);
    for p in set.points() {
        let k = path.grid_index(p[0])?;
        coords.extend_from_slice(path.at(k));
    }
    PointCloud::from_flat(d, coords)
}

/// Pushforward of `mu` through the path. Every atom must sit on the grid.
pub fn image_measure<T: Real>(
    path: &SamplePath<T>,
    mu: &DiscreteMeasure<T>,
) -> Result<DiscreteMeasure<T>> {
    if mu.dim() != 1 {
        return Err(Error::param("parameter measure must live on [0, 1]"));
    }
    let n = T::from_count(path.spec.grid_n);
    let tol = T::lit(1e-6);
    let mut idx = Vec::with_capacity(mu.len());
    for (p, _) in mu.atoms() {
        let k = path.grid_index(p[0])?;
        if (p[0] * n - T::from_count(k)).abs() > tol {
            return Err(Error::param(format!(
                "measure atom at {} is not a grid point of the path",
                p[0]
            )));
        }
        idx.push(k);
    }
    let mut it = idx.into_iter();
    mu.pushforward(path.d(), |_| path.at(it.next().expect("one index per atom")).to_vec())
}
