//! Test sets with known dimensions, their natural measures, and the
//! point-cloud / discrete-measure types every estimator consumes.
//!
//! Sets are always finite approximations: a construction is carried out to a
//! fixed depth and each surviving cell is represented by its lower corner.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{distance, Real};

/// Dyadic grid over `[0,1]^N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    pub level: u32,
    pub origin: Vec<T>,
    pub extent: T,
    pub ambient_dim: usize,
}

pub fn make_dyadic_grid<T: Real>(level: u32, ambient_dim: usize) -> Result<Grid<T>> {
    if !(1..=24).contains(&level) {
        return Err(Error::param(format!("grid level {level} outside 1..=24")));
    }
    if ambient_dim == 0 {
        return Err(Error::param("ambient dimension must be at least 1"));
    }
    if level as usize * ambient_dim > 40 {
        return Err(Error::param(format!(
            "grid with 2^{} cells is too large to enumerate",
            level as usize * ambient_dim
        )));
    }
    Ok(Grid {
        level,
        origin: vec![T::zero(); ambient_dim],
        extent: T::one(),
        ambient_dim,
    })
}

impl<T: Real> Grid<T> {
    pub fn cells_per_axis(&self) -> usize {
        1usize << self.level
    }

    pub fn cell_count(&self) -> usize {
        1usize << (self.level as usize * self.ambient_dim)
    }

    pub fn cell_width(&self) -> T {
        self.extent / T::from_count(self.cells_per_axis())
    }

    /// Lower corner of cell `index`; the last coordinate varies fastest.
    pub fn cell_corner(&self, index: usize) -> Vec<T> {
        let m = self.cells_per_axis();
        let w = self.cell_width();
        let mut out = vec![T::zero(); self.ambient_dim];
        let mut rest = index;
        for axis in (0..self.ambient_dim).rev() {
            out[axis] = self.origin[axis] + T::from_count(rest % m) * w;
            rest /= m;
        }
        out
    }

    /// Cell lower corners in lexicographic order.
    pub fn corners(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        (0..self.cell_count()).map(|i| self.cell_corner(i))
    }

    pub fn centers(&self) -> impl Iterator<Item = Vec<T>> + '_ {
        let half = self.cell_width() / T::lit(2.0);
        self.corners()
            .map(move |c| c.into_iter().map(|v| v + half).collect())
    }

    pub fn to_cloud(&self) -> PointCloud<T> {
        let mut coords = Vec::with_capacity(self.cell_count() * self.ambient_dim);
        for c in self.corners() {
            coords.extend(c);
        }
        PointCloud::from_flat(self.ambient_dim, coords).expect("grid corners are well formed")
    }
}

/// A finite set of points in `R^n`, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud<T> {
    dim: usize,
    coords: Vec<T>,
    weights: Option<Vec<T>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vec<T>>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::param("point cloud needs at least one point"))?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::param("points have mismatched coordinate arity"));
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    pub fn from_flat(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("ambient dimension must be at least 1"));
        }
        if coords.len() % dim != 0 {
            return Err(Error::param("flat coordinate buffer is not a multiple of the dimension"));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("point coordinates must be finite"));
        }
        Ok(PointCloud {
            dim,
            coords,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::param("weight count does not match point count"));
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::param("weights must be finite and non-negative"));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[T] {
        &self.coords
    }

    pub fn weights(&self) -> Option<&[T]> {
        self.weights.as_deref()
    }

    /// Largest side of the axis-aligned bounding box.
    pub fn extent(&self) -> T {
        let mut best = T::zero();
        for axis in 0..self.dim {
            let (lo, hi) = self.points().fold((T::infinity(), T::neg_infinity()), |(lo, hi), p| {
                (lo.min(p[axis]), hi.max(p[axis]))
            });
            if lo.is_finite() {
                best = best.max(hi - lo);
            }
        }
        best
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, out_dim: usize, mut f: impl FnMut(&[T]) -> Vec<T>) -> Result<Self> {
        let mut coords = Vec::with_capacity(self.len() * out_dim);
        for p in self.points() {
            let q = f(p);
            if q.len() != out_dim {
                return Err(Error::param("mapped point has the wrong arity"));
            }
            coords.extend(q);
        }
        let mut out = Self::from_flat(out_dim, coords)?;
        out.weights = self.weights.clone();
        Ok(out)
    }

    /// CSV with one row per point: coordinates, then the weight (1 if absent).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},weight", header.join(","))?;
        for (i, p) in self.points().enumerate() {
            let weight = self.weights.as_ref().map_or(1.0, |ws| ws[i].as_f64());
            let row: Vec<String> = p.iter().map(|v| format_num(v.as_f64())).collect();
            writeln!(w, "{},{}", row.join(","), format_num(weight))?;
        }
        Ok(())
    }

    /// Reads the CSV layout produced by [`PointCloud::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::param("empty CSV input"))??;
        let cols = header.split(',').count();
        if cols < 2 {
            return Err(Error::param("CSV needs at least one coordinate and a weight column"));
        }
        let dim = cols - 1;
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::param(format!("CSV line {}: {e}", lineno + 2)))?;
            if vals.len() != cols {
                return Err(Error::param(format!("CSV line {} has {} columns", lineno + 2, vals.len())));
            }
            coords.extend(vals[..dim].iter().map(|&v| T::lit(v)));
            weights.push(T::lit(vals[dim]));
        }
        Self::from_flat(dim, coords)?.with_weights(weights)
    }
}

pub(crate) fn format_num(v: f64) -> String {
    // Shortest round-trip representation keeps files byte-stable.
    format!("{v:?}")
}

/// Finite positive point masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure<T> {
    support: PointCloud<T>,
    masses: Vec<T>,
    total: T,
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn new(support: PointCloud<T>, masses: Vec<T>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::param("measure support is empty"));
        }
        if masses.len() != support.len() {
            return Err(Error::param("mass count does not match support size"));
        }
        if masses.iter().any(|m| !(*m > T::zero()) || !m.is_finite()) {
            return Err(Error::param("masses must be finite and strictly positive"));
        }
        let total = masses.iter().copied().sum();
        Ok(DiscreteMeasure {
            support,
            masses,
            total,
        })
    }

    /// Equal mass on every support point, total mass one.
    pub fn uniform(support: PointCloud<T>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::param("measure support is empty"));
        }
        let m = T::one() / T::from_count(n);
        Self::new(support, vec![m; n])
    }

    pub fn point_mass(at: Vec<T>, mass: T) -> Result<Self> {
        Self::new(PointCloud::new(vec![at])?, vec![mass])
    }

    pub fn support(&self) -> &PointCloud<T> {
        &self.support
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn total_mass(&self) -> T {
        self.total
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[T], T)> {
        self.support.points().zip(self.masses.iter().copied())
    }

    /// Pushforward of the measure under `f`; masses are carried unchanged.
    pub fn pushforward(&self, out_dim: usize, f: impl FnMut(&[T]) -> Vec<T>) -> Result<Self> {
        let support = self.support.map_points(out_dim, f)?;
        Ok(DiscreteMeasure {
            support,
            masses: self.masses.clone(),
            total: self.total,
        })
    }

    /// Moves every atom to the nearest point of the dyadic lattice of the given
    /// level and merges atoms that land on the same lattice point.
    pub fn snap_to_dyadic(&self, level: u32) -> Result<Self> {
        let scale = T::lit((1u64 << level) as f64);
        let mut merged: BTreeMap<Vec<i64>, T> = BTreeMap::new();
        for (p, m) in self.atoms() {
            let key: Vec<i64> = p
                .iter()
                .map(|&v| (v * scale).round().to_i64().unwrap_or(i64::MAX))
                .collect();
            let slot = merged.entry(key).or_insert(T::zero());
            *slot = *slot + m;
        }
        let dim = self.dim();
        let mut coords = Vec::with_capacity(merged.len() * dim);
        let mut masses = Vec::with_capacity(merged.len());
        for (k, m) in merged {
            coords.extend(k.iter().map(|&i| T::lit(i as f64) / scale));
            masses.push(m);
        }
        Self::new(PointCloud::from_flat(dim, coords)?, masses)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.support
            .clone()
            .with_weights(self.masses.clone())?
            .write_csv(w)
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let cloud = PointCloud::<T>::read_csv(r)?;
        let masses = cloud.weights().map(<[T]>::to_vec).unwrap_or_default();
        let support = PointCloud::from_flat(cloud.dim(), cloud.coords().to_vec())?;
        Self::new(support, masses)
    }
}

/// `mu(B(x, r))` for the closed Euclidean ball.
pub fn ball_mass<T: Real>(mu: &DiscreteMeasure<T>, x: &[T], r: T) -> T {
    mu.atoms()
        .filter(|(p, _)| distance(p, x) <= r)
        .map(|(_, m)| m)
        .sum()
}

/// Generalized Cantor construction: at level `k` every cube is replaced by
/// `m_k^N` sub-cubes of relative side `r_k`, evenly spread so that the first
/// and last touch the parent's faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec<T> {
    pub branches: Vec<usize>,
    pub ratios: Vec<T>,
    pub depth: usize,
    pub ambient_dim: usize,
}

impl<T: Real> CantorSpec<T> {
    pub fn homogeneous(branches: usize, ratio: T, depth: usize, ambient_dim: usize) -> Self {
        CantorSpec {
            branches: vec![branches; depth.max(1)],
            ratios: vec![ratio; depth.max(1)],
            depth,
            ambient_dim,
        }
    }

    /// Middle-third Cantor set.
    pub fn middle_third(depth: usize) -> Self {
        Self::homogeneous(2, T::one() / T::lit(3.0), depth, 1)
    }

    /// `(m, r)` if every level uses the same branching and ratio.
    pub fn as_homogeneous(&self) -> Option<(usize, T)> {
        let m = *self.branches.first()?;
        let r = *self.ratios.first()?;
        let same = self.branches[..self.depth].iter().all(|&b| b == m)
            && self.ratios[..self.depth].iter().all(|&q| q == r);
        same.then_some((m, r))
    }

    /// Similarity dimension `N log m / log(1/r)` for homogeneous specs.
    pub fn similarity_dimension(&self) -> Option<f64> {
        let (m, r) = self.as_homogeneous()?;
        Some(self.ambient_dim as f64 * (m as f64).ln() / (1.0 / r.as_f64()).ln())
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Construction("Cantor depth must be at least 1".into()));
        }
        if self.ambient_dim == 0 {
            return Err(Error::Construction("ambient dimension must be at least 1".into()));
        }
        if self.branches.len() < self.depth || self.ratios.len() < self.depth {
            return Err(Error::Construction(
                "branch and ratio sequences must cover every level".into(),
            ));
        }
        for k in 0..self.depth {
            let (m, r) = (self.branches[k], self.ratios[k]);
            if m < 2 {
                return Err(Error::Construction(format!("level {k}: need at least 2 branches")));
            }
            if !(r > T::zero()) {
                return Err(Error::Construction(format!("level {k}: ratio must be positive")));
            }
            if T::from_count(m) * r > T::one() + T::epsilon() * T::lit(4.0) {
                return Err(Error::Construction(format!(
                    "level {k}: {m} branches of ratio {r} overlap"
                )));
            }
        }
        let points = (0..self.depth)
            .map(|k| (self.branches[k] as f64).ln() * self.ambient_dim as f64)
            .sum::<f64>();
        if points > 26.0 * 2f64.ln() + 1e-9 {
            return Err(Error::Construction(format!(
                "construction would produce {:.3e} points",
                points.exp()
            )));
        }
        Ok(())
    }
}

/// Provenance and analytic targets of a constructed set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetMeta {
    pub label: String,
    pub depth: usize,
    pub dim_h: Option<f64>,
    pub dim_p: Option<f64>,
    /// True when the natural measure is the dimension-maximizing measure.
    pub natural_measure_exact: bool,
}

/// A finite approximation of a set together with its natural measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractalSet<T> {
    pub cloud: PointCloud<T>,
    pub measure: DiscreteMeasure<T>,
    pub meta: SetMeta,
}

impl<T: Real> FractalSet<T> {
    /// The unit cube `[0,1]^N` represented by a dyadic grid.
    pub fn unit_cube(level: u32, ambient_dim: usize) -> Result<Self> {
        let grid = make_dyadic_grid::<T>(level, ambient_dim)?;
        let cloud = grid.to_cloud();
        let measure = DiscreteMeasure::uniform(cloud.clone())?;
        Ok(FractalSet {
            cloud,
            measure,
            meta: SetMeta {
                label: format!("unit-cube(N={ambient_dim})"),
                depth: level as usize,
                dim_h: Some(ambient_dim as f64),
                dim_p: Some(ambient_dim as f64),
                natural_measure_exact: true,
            },
        })
    }
}

/// Level-by-level construction shared by the Cantor builders. Returns lower
/// corners in construction order (lexicographic for `N = 1`).
fn build_cantor<T: Real>(levels: &[(usize, T)], dim: usize) -> Vec<T> {
    let mut corners: Vec<T> = vec![T::zero(); dim];
    let mut side = T::one();
    for &(m, r) in levels {
        let gap = if m > 1 {
            (T::one() - T::from_count(m) * r) / T::from_count(m - 1)
        } else {
            T::zero()
        };
        let step: Vec<T> = (0..m).map(|j| T::from_count(j) * (r + gap) * side).collect();
        let children = m.pow(dim as u32);
        let mut next = Vec::with_capacity(corners.len() * children);
        for parent in corners.chunks_exact(dim) {
            for c in 0..children {
                let mut rest = c;
                let mut child = parent.to_vec();
                for axis in (0..dim).rev() {
                    child[axis] = child[axis] + step[rest % m];
                    rest /= m;
                }
                next.extend(child);
            }
        }
        corners = next;
        side = side * r;
    }
    corners
}

pub fn cantor_set<T: Real>(spec: &CantorSpec<T>) -> Result<FractalSet<T>> {
    spec.validate()?;
    let levels: Vec<(usize, T)> = (0..spec.depth)
        .map(|k| (spec.branches[k], spec.ratios[k]))
        .collect();
    let coords = build_cantor(&levels, spec.ambient_dim);
    let cloud = PointCloud::from_flat(spec.ambient_dim, coords)?;
    let measure = DiscreteMeasure::uniform(cloud.clone())?;
    let dim = spec.similarity_dimension();
    let label = match spec.as_homogeneous() {
        Some((m, r)) => format!("cantor(m={m}, r={})", r.as_f64()),
        None => "cantor(inhomogeneous)".to_string(),
    };
    Ok(FractalSet {
        cloud,
        measure,
        meta: SetMeta {
            label,
            depth: spec.depth,
            dim_h: dim,
            dim_p: dim,
            natural_measure_exact: dim.is_some(),
        },
    })
}

/// Two homogeneous constructions interleaved in blocks of levels of lengths
/// `g, g^2, g^3, ...` (phase A first), so that the count curve alternates
/// between the two slopes over ever longer scale ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhaseSpec<T> {
    pub phase_a: (usize, T),
    pub phase_b: (usize, T),
    pub block_growth: usize,
    pub depth: usize,
}

impl<T: Real> TwoPhaseSpec<T> {
    /// Phase label (`false` = A, `true` = B) of every construction level.
    pub fn schedule(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.depth);
        let mut block = self.block_growth.max(1);
        let mut phase_b = false;
        while out.len() < self.depth {
            for _ in 0..block {
                if out.len() == self.depth {
                    break;
                }
                out.push(phase_b);
            }
            phase_b = !phase_b;
            block = block.saturating_mul(self.block_growth);
        }
        out
    }
}

fn phase_dimension<T: Real>((m, r): (usize, T)) -> f64 {
    (m as f64).ln() / (1.0 / r.as_f64()).ln()
}

pub fn two_phase_cantor<T: Real>(spec: &TwoPhaseSpec<T>) -> Result<FractalSet<T>> {
    if spec.block_growth < 2 {
        return Err(Error::Construction("block growth must be at least 2".into()));
    }
    let schedule = spec.schedule();
    let levels: Vec<(usize, T)> = schedule
        .iter()
        .map(|&b| if b { spec.phase_b } else { spec.phase_a })
        .collect();
    let as_spec = CantorSpec {
        branches: levels.iter().map(|l| l.0).collect(),
        ratios: levels.iter().map(|l| l.1).collect(),
        depth: spec.depth,
        ambient_dim: 1,
    };
    as_spec.validate()?;
    let coords = build_cantor(&levels, 1);
    let cloud = PointCloud::from_flat(1, coords)?;
    let measure = DiscreteMeasure::uniform(cloud.clone())?;
    let (da, db) = (phase_dimension(spec.phase_a), phase_dimension(spec.phase_b));
    let same = spec.phase_a.0 == spec.phase_b.0 && spec.phase_a.1 == spec.phase_b.1;
    Ok(FractalSet {
        cloud,
        measure,
        meta: SetMeta {
            label: format!(
                "two-phase-cantor(A=({}, {}), B=({}, {}), growth={})",
                spec.phase_a.0,
                spec.phase_a.1.as_f64(),
                spec.phase_b.0,
                spec.phase_b.1.as_f64(),
                spec.block_growth
            ),
            depth: spec.depth,
            dim_h: Some(da.min(db)),
            dim_p: Some(da.max(db)),
            natural_measure_exact: same,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dyadic_grid_cell_counts() {
        let g = make_dyadic_grid::<f64>(1, 1).unwrap();
        let corners: Vec<_> = g.corners().collect();
        assert_eq!(corners, vec![vec![0.0], vec![0.5]]);
        assert_eq!(make_dyadic_grid::<f64>(3, 1).unwrap().cell_count(), 8);
        assert_eq!(make_dyadic_grid::<f64>(3, 1).unwrap().cell_width(), 0.125);
        assert_eq!(make_dyadic_grid::<f64>(2, 2).unwrap().cell_count(), 16);
        assert!(make_dyadic_grid::<f64>(0, 1).is_err());
        assert!(make_dyadic_grid::<f64>(25, 1).is_err());
    }

    #[test]
    fn grid_order_is_lexicographic() {
        let g = make_dyadic_grid::<f64>(1, 2).unwrap();
        let c: Vec<_> = g.corners().collect();
        assert_eq!(c, vec![vec![0.0, 0.0], vec![0.0, 0.5], vec![0.5, 0.0], vec![0.5, 0.5]]);
    }

    #[test]
    fn middle_third_cantor() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(10)).unwrap();
        assert_eq!(set.cloud.len(), 1024);
        let d = set.meta.dim_h.unwrap();
        assert!((d - 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert!((d - 0.63093).abs() < 1e-5);
        // Construction order is increasing in 1D.
        let xs: Vec<f64> = set.cloud.points().map(|p| p[0]).collect();
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        assert!((xs[1] - 2.0 / 3f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn degenerate_cantor_is_dyadic_grid() {
        let set = cantor_set(&CantorSpec::<f64>::homogeneous(2, 0.5, 8, 1)).unwrap();
        let grid = make_dyadic_grid::<f64>(8, 1).unwrap().to_cloud();
        assert_eq!(set.cloud.coords(), grid.coords());
        assert!((set.meta.dim_h.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn three_branch_cantor_dimension() {
        let set = cantor_set(&CantorSpec::<f64>::homogeneous(3, 0.2, 8, 1)).unwrap();
        assert_eq!(set.cloud.len(), 3usize.pow(8));
        assert!((set.meta.dim_h.unwrap() - 0.68261).abs() < 1e-5);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = cantor_set(&CantorSpec::<f64>::homogeneous(3, 0.4, 4, 1)).unwrap_err();
        assert!(matches!(err, Error::Construction(_)));
        let tp = TwoPhaseSpec {
            phase_a: (2, 1.0 / 3.0),
            phase_b: (2, 0.6),
            block_growth: 2,
            depth: 6,
        };
        assert!(matches!(two_phase_cantor::<f64>(&tp), Err(Error::Construction(_))));
    }

    #[test]
    fn planar_cantor_dust() {
        let set = cantor_set(&CantorSpec::<f64>::homogeneous(2, 1.0 / 3.0, 3, 2)).unwrap();
        assert_eq!(set.cloud.len(), 64);
        assert!((set.meta.dim_h.unwrap() - 2.0 * 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn natural_measure_is_uniform() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(8)).unwrap();
        let m0 = set.measure.masses()[0];
        assert!(set.measure.masses().iter().all(|&m| (m - m0).abs() <= 1e-12 * m0));
        assert!((set.measure.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cantor_min_gap_is_positive() {
        let set = cantor_set(&CantorSpec::<f64>::homogeneous(3, 0.2, 6, 1)).unwrap();
        let xs: Vec<f64> = set.cloud.points().map(|p| p[0]).collect();
        let gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        assert!(gap > 0.0);
    }

    #[test]
    fn two_phase_schedule() {
        let tp = TwoPhaseSpec {
            phase_a: (2, 1.0 / 3.0),
            phase_b: (2, 0.5),
            block_growth: 3,
            depth: 18,
        };
        let s = tp.schedule();
        assert_eq!(s.iter().filter(|&&b| !b).count(), 3 + 6);
        assert_eq!(&s[..4], &[false, false, false, true]);
        let set = two_phase_cantor::<f64>(&tp).unwrap();
        assert_eq!(set.cloud.len(), 1 << 18);
        assert!((set.meta.dim_h.unwrap() - 0.63093).abs() < 1e-5);
        assert!((set.meta.dim_p.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_phase_with_equal_phases_matches_cantor() {
        let tp = TwoPhaseSpec {
            phase_a: (2, 1.0 / 3.0),
            phase_b: (2, 1.0 / 3.0),
            block_growth: 2,
            depth: 9,
        };
        let a = two_phase_cantor::<f64>(&tp).unwrap();
        let b = cantor_set(&CantorSpec::<f64>::middle_third(9)).unwrap();
        assert_eq!(a.cloud, b.cloud);
        assert_eq!(a.meta.dim_h, a.meta.dim_p);
    }

    #[test]
    fn ball_mass_cases() {
        let mu = DiscreteMeasure::point_mass(vec![0.0f64], 2.5).unwrap();
        assert_eq!(ball_mass(&mu, &[0.0], 1e-9), 2.5);
        assert_eq!(ball_mass(&mu, &[2.0], 1.0), 0.0);
        // Closed ball: boundary point counts.
        assert_eq!(ball_mass(&mu, &[1.0], 1.0), 2.5);

        let grid = make_dyadic_grid::<f64>(10, 1).unwrap();
        let uni = DiscreteMeasure::uniform(grid.to_cloud()).unwrap();
        // Exact count of k/1024 within [0.25, 0.75]: k = 256..=768.
        let expected = 513.0 / 1024.0;
        assert!((ball_mass(&uni, &[0.5], 0.25) - expected).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let set = cantor_set(&CantorSpec::<f64>::middle_third(4)).unwrap();
        let mut buf = Vec::new();
        set.measure.write_csv(&mut buf).unwrap();
        let back = DiscreteMeasure::<f64>::read_csv(&buf[..]).unwrap();
        assert_eq!(back, set.measure);
    }

    #[test]
    fn snapping_merges_atoms() {
        let cloud = PointCloud::new(vec![vec![0.1f64], vec![0.11], vec![0.9]]).unwrap();
        let mu = DiscreteMeasure::uniform(cloud).unwrap();
        let s = mu.snap_to_dyadic(2).unwrap();
        assert_eq!(s.len(), 2);
        assert!((s.total_mass() - 1.0).abs() < 1e-12);
    }
}
