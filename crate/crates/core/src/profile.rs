//! Packing dimension profiles through the potential
//! `F_s(x, r) = int psi_s((x - y) / r) dmu(y)` with `psi_s(x) = min(1, |x|^-s)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{probe_slope, summarize, DimEstimate, LocalDimParams, ProbeSet, ProbeSlope, FLAG_DISCARDED, FLAG_RESOLUTION_FLOOR};
use crate::geometry::{format_num, DiscreteMeasure, FractalSet};
use crate::sampling::Seed;
use crate::scalar::{norm, Real};

pub const FLAG_DEGENERATE_POTENTIAL: &str = "degenerate potential";
pub const FLAG_PROFILE_LOWER_BOUND: &str = "profile lower bound";

pub fn kernel_psi<T: Real>(s: T, x: &[T]) -> T {
    let r = norm(x);
    if r <= T::one() {
        T::one()
    } else {
        r.powf(-s)
    }
}

pub fn potential_f<T: Real>(mu: &DiscreteMeasure<T>, s: T, x: &[T], r: T) -> Result<T> {
    if !(s > T::zero()) || !(r > T::zero()) {
        return Err(Error::param("potential needs s > 0 and r > 0"));
    }
    if x.len() != mu.dim() {
        return Err(Error::param("evaluation point has the wrong dimension"));
    }
    let mut z = vec![T::zero(); x.len()];
    Ok(mu
        .atoms()
        .map(|(y, m)| {
            for ((zi, xi), yi) in z.iter_mut().zip(x).zip(y) {
                *zi = (*xi - *yi) / r;
            }
            m * kernel_psi(s, &z)
        })
        .sum())
}

/// `32` log-spaced exponents in `[0.05, N + 1]`.
pub fn default_s_grid(ambient_dim: usize) -> Vec<f64> {
    let (lo, hi) = (0.05f64.ln(), (ambient_dim as f64 + 1.0).ln());
    (0..32).map(|i| (lo + (hi - lo) * i as f64 / 31.0).exp()).collect()
}

impl ProbeSet {
    /// `log F_s(x_p, r)` for every `s` (outer) and radius (inner), leaving
    /// out the probe's own atom unless it is the only one.
    fn log_potentials(&self, p: usize, radii: &[f64], s_values: &[f64]) -> Vec<Vec<f64>> {
        let x = self.atom(p);
        let skip_self = self.len() > 1;
        let mut atoms: Vec<(f64, f64)> = (0..self.len())
            .filter(|&i| !(skip_self && i == p))
            .map(|i| (self.sq_dist(i, x).sqrt(), self.masses[i]))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        // prefix[j] = mass of the j nearest atoms.
        let mut prefix = Vec::with_capacity(atoms.len() + 1);
        prefix.push(0.0);
        for a in &atoms {
            prefix.push(prefix[prefix.len() - 1] + a.1);
        }
        let split: Vec<usize> = radii.iter().map(|&r| atoms.partition_point(|a| a.0 <= r)).collect();
        let first = split[0];
        s_values
            .iter()
            .map(|&s| {
                // tail[j] = sum over atoms j.. beyond the smallest radius of m d^-s.
                let mut tail = vec![0.0; atoms.len() + 1];
                for j in (first..atoms.len()).rev() {
                    let (d, m) = atoms[j];
                    tail[j] = tail[j + 1] + m * (-s * d.ln()).exp();
                }
                radii
                    .iter()
                    .zip(&split)
                    .map(|(&r, &j)| (prefix[j] + r.powf(s) * tail[j]).ln())
                    .collect()
            })
            .collect()
    }
}

/// Lower and upper profile estimates at one exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub s: f64,
    /// `Dim_s mu`: lower quantile of the per-probe exponents.
    pub lower: DimEstimate,
    /// `Dim*_s mu`: upper quantile.
    pub upper: DimEstimate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    MeasureLower,
    MeasureUpper,
    Set,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub kind: ProfileKind,
    pub s_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub radii: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

impl ProfileCurve {
    /// Rows `s,value,std_error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,value,std_error")?;
        for ((s, v), e) in self.s_grid.iter().zip(&self.values).zip(&self.std_errors) {
            writeln!(w, "{},{},{}", format_num(*s), format_num(*v), format_num(*e))?;
        }
        Ok(())
    }

    /// Value at the grid point nearest to `s`.
    pub fn at(&self, s: f64) -> Option<f64> {
        let i = self
            .s_grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s).abs().total_cmp(&(b.1 - s).abs()))?
            .0;
        Some(self.values[i])
    }
}

/// Profile estimates for every `s` in `s_grid`, sharing probes and radii.
pub fn profile_points<T: Real>(
    mu: &DiscreteMeasure<T>,
    s_grid: &[f64],
    params: &LocalDimParams,
    seed: Seed,
) -> Result<(Vec<ProfilePoint>, Vec<f64>)> {
    params.validate()?;
    if s_grid.is_empty() {
        return Err(Error::param("empty s grid"));
    }
    if s_grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::param("profile exponents must be positive"));
    }
    if s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("s grid must be strictly increasing"));
    }
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
    let per_probe: Vec<Option<Vec<(ProbeSlope, bool)>>> = probe_idx
        .par_iter()
        .map(|&p| {
            let logf = atoms.log_potentials(p, &radii, s_grid);
            if logf.iter().any(|row| !row[0].is_finite()) {
                return None;
            }
            logf.iter()
                .map(|row| {
                    let constant = row.iter().all(|v| (v - row[0]).abs() <= 1e-12 * v.abs().max(1.0));
                    if constant {
                        Some((ProbeSlope { slope: 0.0, split: 0.0 }, true))
                    } else {
                        probe_slope(&logr, row, false).map(|p| (p, false))
                    }
                })
                .collect()
        })
        .collect();
    let kept: Vec<&Vec<(ProbeSlope, bool)>> = per_probe.iter().flatten().collect();
    if kept.is_empty() {
        return Err(Error::Estimation("every probe has an empty potential".into()));
    }
    if kept.len() < probe_idx.len() {
        flags.push(FLAG_DISCARDED.to_string());
    }
    let q = params.quantile;
    let points = s_grid
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let slopes: Vec<ProbeSlope> = kept.iter().map(|v| v[k].0).collect();
            let mut f = flags.clone();
            if kept.iter().any(|v| v[k].1) {
                f.push(FLAG_DEGENERATE_POTENTIAL.to_string());
            }
            let sub = seed.derive(1 + k as u64);
            ProfilePoint {
                s,
                lower: summarize("profile-lower", &slopes, q, &radii, params.bootstrap, sub.derive(0), &f),
                upper: summarize("profile-upper", &slopes, 1.0 - q, &radii, params.bootstrap, sub.derive(1), &f),
            }
        })
        .collect();
    Ok((points, radii))
}

/// `(Dim_s mu, Dim*_s mu)`.
pub fn profile_measure<T: Real>(
    mu: &DiscreteMeasure<T>,
    s: f64,
    params: &LocalDimParams,
    seed: Seed,
) -> Result<(DimEstimate, DimEstimate)> {
    let (mut points, _) = profile_points(mu, &[s], params, seed)?;
    let p = points.remove(0);
    Ok((p.lower, p.upper))
}

/// `Dim_s E` approximated by the lower profile of the natural measure. The
/// estimate is only a lower bound when the natural measure is not known to be
/// extremal, and is flagged so.
pub fn profile_set<T: Real>(set: &FractalSet<T>, s: f64, params: &LocalDimParams, seed: Seed) -> Result<DimEstimate> {
    let (mut lower, _) = profile_measure(&set.measure, s, params, seed)?;
    lower.estimator = "profile-set".into();
    lower.depth = Some(set.meta.depth);
    if !set.meta.natural_measure_exact {
        lower.diagnostics.flags.push(FLAG_PROFILE_LOWER_BOUND.to_string());
    }
    Ok(lower)
}

/// Profile curve over `s_grid` (default: [`default_s_grid`]).
pub fn profile_curve<T: Real>(
    mu: &DiscreteMeasure<T>,
    kind: ProfileKind,
    s_grid: Option<&[f64]>,
    params: &LocalDimParams,
    seed: Seed,
) -> Result<ProfileCurve> {
    let grid = s_grid.map(<[f64]>::to_vec).unwrap_or_else(|| default_s_grid(mu.dim()));
    let (points, radii) = profile_points(mu, &grid, params, seed)?;
    Ok(curve_from_points(kind, &points, radii))
}

/// Set profile curve on the natural measure.
pub fn profile_curve_set<T: Real>(
    set: &FractalSet<T>,
    s_grid: Option<&[f64]>,
    params: &LocalDimParams,
    seed: Seed,
) -> Result<ProfileCurve> {
    let mut c = profile_curve(&set.measure, ProfileKind::Set, s_grid, params, seed)?;
    if !set.meta.natural_measure_exact {
        c.flags.push(FLAG_PROFILE_LOWER_BOUND.to_string());
    }
    Ok(c)
}

pub fn curve_from_points(kind: ProfileKind, points: &[ProfilePoint], radii: Vec<f64>) -> ProfileCurve {
    let pick = |p: &ProfilePoint| match kind {
        ProfileKind::MeasureUpper => p.upper.clone(),
        _ => p.lower.clone(),
    };
    let mut flags: Vec<String> = Vec::new();
    for p in points {
        for f in pick(p).diagnostics.flags {
            if !flags.contains(&f) {
                flags.push(f);
            }
        }
    }
    ProfileCurve {
        kind,
        s_grid: points.iter().map(|p| p.s).collect(),
        values: points.iter().map(|p| pick(p).value).collect(),
        std_errors: points.iter().map(|p| pick(p).std_error).collect(),
        radii,
        flags,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cantor_set, make_dyadic_grid, CantorSpec, PointCloud};
    use crate::special::integrate;

    fn uniform_interval(level: u32) -> DiscreteMeasure<f64> {
        DiscreteMeasure::uniform(make_dyadic_grid::<f64>(level, 1).unwrap().to_cloud()).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_psi(1.0, &[2.0]), 0.5);
        assert_eq!(kernel_psi(3.0, &[0.6, 0.8]), 1.0);
        assert_eq!(kernel_psi(0.5, &[4.0]), 0.5);
        assert_eq!(kernel_psi(2.0, &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn potential_of_point_mass() {
        let mu = DiscreteMeasure::point_mass(vec![0.2], 3.0).unwrap();
        assert_eq!(potential_f(&mu, 1.7, &[0.2], 1e-3).unwrap(), 3.0);
        let v: f64 = potential_f(&mu, 1.0, &[0.2 + 2.0 * 0.01], 0.01).unwrap();
        assert!((v - 1.5).abs() < 1e-12);
    }

    #[test]
    fn potential_matches_quadrature() {
        let mu = uniform_interval(12);
        let r = 2f64.powi(-6);
        let f = potential_f(&mu, 2.0, &[0.5], r).unwrap();
        let g = |y: f64| {
            let z = (0.5 - y).abs() / r;
            if z <= 1.0 {
                1.0
            } else {
                z.powi(-2)
            }
        };
        let exact = integrate(g, 0.0, 0.5 - r, 64, 8) + 2.0 * r + integrate(g, 0.5 + r, 1.0, 64, 8);
        assert!((f - exact).abs() / exact < 0.01, "{f} {exact}");
    }

    #[test]
    fn potential_scale_covariance() {
        let mu = uniform_interval(8);
        let doubled = mu.pushforward(1, |p| vec![2.0 * p[0]]).unwrap();
        for &(s, x, r) in &[(0.5, 0.3, 0.01), (2.0, 0.71, 0.2), (1.0, 0.05, 0.003)] {
            let a = potential_f(&mu, s, &[x], r).unwrap();
            let b = potential_f(&doubled, s, &[2.0 * x], 2.0 * r).unwrap();
            assert!((a - b).abs() <= 1e-12 * a, "{a} {b}");
        }
    }

    #[test]
    fn log_potentials_match_direct_sum() {
        let mu = uniform_interval(9);
        let atoms = ProbeSet::from_measure(&mu);
        let radii = [0.004, 0.01, 0.05];
        let s_values = [0.3, 1.0, 2.5];
        let p = 200;
        let got = atoms.log_potentials(p, &radii, &s_values);
        let x = atoms.atom(p).to_vec();
        for (i, &s) in s_values.iter().enumerate() {
            for (j, &r) in radii.iter().enumerate() {
                let direct = potential_f(&mu, s, &x, r).unwrap() - mu.masses()[p];
                assert!((got[i][j] - direct.ln()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn point_mass_profile_is_zero() {
        let mu = DiscreteMeasure::point_mass(vec![0.5, 0.5], 1.0).unwrap();
        let params = LocalDimParams::default().with_radii(vec![1e-3, 1e-2, 1e-1, 1.0]);
        for s in [0.1, 1.0, 3.0] {
            let (lo, hi) = profile_measure(&mu, s, &params, Seed::new(1)).unwrap();
            assert_eq!((lo.value, hi.value), (0.0, 0.0));
            assert!(lo.has_flag(FLAG_DEGENERATE_POTENTIAL));
        }
    }

    #[test]
    fn uniform_interval_profile_away_from_knee() {
        let mu = uniform_interval(12);
        let params = LocalDimParams::default();
        let (points, _) = profile_points(&mu, &[0.25, 0.5], &params, Seed::new(2)).unwrap();
        for (p, target) in points.iter().zip([0.25, 0.5]) {
            assert!((p.lower.value - target).abs() < 0.08, "s={} {:?}", p.s, p.lower);
            assert!(p.lower.value <= p.upper.value);
        }
    }

    #[test]
    fn cantor_set_profile() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(12)).unwrap();
        let params = LocalDimParams::default();
        let high = profile_set(&set, 2.0, &params, Seed::new(3)).unwrap();
        let dim = 2f64.ln() / 3f64.ln();
        assert!((high.value - dim).abs() < 0.08, "{high:?}");
        let low = profile_set(&set, 0.3, &params, Seed::new(3)).unwrap();
        assert!((low.value - 0.3).abs() < 0.05, "{low:?}");
    }

    #[test]
    fn plateau_matches_packing_estimate() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(12)).unwrap();
        let params = LocalDimParams::default();
        let (lo, _) = profile_measure(&set.measure, 1.5, &params, Seed::new(5)).unwrap();
        let local = crate::estimators::measure_local_dims(&set.measure, &params, Seed::new(5)).unwrap();
        assert!((lo.value - local.dim_p.value).abs() < 0.1, "{} {}", lo.value, local.dim_p.value);
    }

    #[test]
    fn curve_csv_and_bounds() {
        let mu = uniform_interval(10);
        let c = profile_curve(&mu, ProfileKind::MeasureLower, None, &LocalDimParams::default(), Seed::new(4)).unwrap();
        assert_eq!(c.s_grid.len(), 32);
        assert!((c.s_grid[0] - 0.05).abs() < 1e-12 && (c.s_grid[31] - 2.0).abs() < 1e-12);
        for (s, v) in c.s_grid.iter().zip(&c.values) {
            assert!(*v <= s + 0.05, "s={s} v={v}");
        }
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("s,value,std_error\n"));
        assert_eq!(text.lines().count(), 33);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mu = DiscreteMeasure::uniform(PointCloud::new(vec![vec![0.0], vec![1.0]]).unwrap()).unwrap();
        assert!(potential_f(&mu, 0.0, &[0.0], 1.0).is_err());
        assert!(potential_f(&mu, 1.0, &[0.0], 0.0).is_err());
        assert!(profile_points(&mu, &[1.0, 0.5], &LocalDimParams::default(), Seed::new(0)).is_err());
    }
}
