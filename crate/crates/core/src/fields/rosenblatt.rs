//! Rosenblatt process as a discretized double Wiener–Itô integral.
//!
//! The time integral over `s` uses 4-point Gauss–Legendre nodes in every grid
//! cell `[m/n, (m+1)/n)`. The Brownian driver is discretized into cells: the
//! near history `[-1, 1)` in steps of `1/n`, and the far past `[-2^40, -1)` in
//! geometrically growing cells. Each kernel `(s - u)_+^(kappa-1)` is averaged
//! exactly over its `u`-cell, so the integrable singularity at `u = s` never
//! meets a quadrature node. For far cells the averaged kernel is smooth in
//! `s` and is interpolated from 16 Chebyshev points on `[0, 1]`.
//!
//! With `w_a(i)` the averaged kernel of node `a` against cell `i` and `Omega_a`
//! the node weight, a path is
//!
//! `Y(t_k) = c * sum_{a: s_a < t_k} Omega_a * sum_{i, j} w_a(i) w_a(j) :dB_i dB_j:`
//!
//! where `:dB_i dB_j:` is the Wick product (`dB_i^2 - v_i` on the diagonal).
//! This is the conditional expectation of the double integral given the cell
//! increments, so it lives in the second chaos and has no diagonal
//! contribution of its own. Inner sums are FFT convolutions. The variance of
//! this discrete model is available in closed form, and `c` makes
//! `Var Y(1) = 1` exactly.

use rayon::prelude::*;

use super::fft::Convolver;
use super::PathEngine;
use crate::error::{Error, Result};
use crate::sampling::Seed;
use crate::scalar::Real;
use crate::special::{beta, chebyshev_basis, chebyshev_points, gauss_legendre_unit};

const NODES: usize = 4;
const CHEB: usize = 16;
/// Far-past cells grow by `2^(1/8)` up to `2^40`, then by `2^(1/2)`.
const FAR_RATIO_LOG2: f64 = 1.0 / 8.0;
const FAR_COARSE_RATIO_LOG2: f64 = 0.5;
const FAR_FINE_LOG2: f64 = 40.0;
/// Upper limit of the far horizon, in octaves.
const FAR_MAX_LOG2: f64 = 1000.0;

/// Octaves of far past needed for the truncated tail, which decays like
/// `T^(2 kappa - 1)`, to fall below `2^-14`.
fn far_horizon_log2(kappa: f64) -> f64 {
    (14.0 / (1.0 - 2.0 * kappa)).clamp(FAR_FINE_LOG2, FAR_MAX_LOG2).ceil()
}

/// Prepared discrete Rosenblatt model on a grid of `n` steps.
pub struct RosenblattModel {
    n: usize,
    kappa: f64,
    delta: f64,
    /// Node weights `delta * omega_q` per position in the cell.
    omega: [f64; NODES],
    /// `near[q][l]`: averaged kernel at node offset `theta_q` and lag `l`.
    near: Vec<Vec<f64>>,
    /// `far[c][j]`: averaged far kernel at Chebyshev point `j`.
    far: Vec<[f64; CHEB]>,
    far_var: Vec<f64>,
    /// Interpolation rows, indexed `m * NODES + q`.
    interp: Vec<[f64; CHEB]>,
    conv: Vec<Convolver<f64>>,
    /// `E[Z_a^2]` per node, removed from every square.
    centering: Vec<f64>,
    horizon_log2: f64,
    /// Discrete `Var` of the unnormalized `Y(1)`.
    raw_variance: f64,
    scale: f64,
}

impl RosenblattModel {
    pub fn new<T: Real>(kappa: T, n: usize) -> Result<Self> {
        let kappa = kappa.as_f64();
        if !(kappa > 0.25 && kappa < 0.5) {
            return Err(Error::param(format!("kappa {kappa} outside (1/4, 1/2)")));
        }
        if n < 2 || !n.is_power_of_two() || n > super::MAX_ROSENBLATT_GRID {
            return Err(Error::param(format!("Rosenblatt grid {n} not a power of two in [2, 2^12]")));
        }
        let delta = 1.0 / n as f64;
        let (theta, gl) = gauss_legendre_unit(NODES);
        let mut omega = [0.0; NODES];
        for q in 0..NODES {
            omega[q] = delta * gl[q];
        }
        let pre = delta.powf(kappa - 1.0) / kappa;
        let near: Vec<Vec<f64>> = theta
            .iter()
            .map(|&th| {
                (0..2 * n)
                    .map(|l| {
                        let x = l as f64 + th;
                        pre * (x.powf(kappa) - (x - 1.0).max(0.0).powf(kappa))
                    })
                    .collect()
            })
            .collect();

        let cheb = chebyshev_points(CHEB);
        let horizon_log2 = far_horizon_log2(kappa);
        let mut edges = vec![0.0f64];
        while *edges.last().unwrap() < horizon_log2 - 1e-9 {
            let e = *edges.last().unwrap();
            let step = if e < FAR_FINE_LOG2 - 1e-9 {
                FAR_RATIO_LOG2
            } else {
                FAR_COARSE_RATIO_LOG2
            };
            edges.push(e + step);
        }
        let mut far = Vec::with_capacity(edges.len());
        let mut far_var = Vec::with_capacity(edges.len());
        for pair in edges.windows(2) {
            let (lo, hi) = (2f64.powf(pair[0]), 2f64.powf(pair[1]));
            let mut row = [0.0; CHEB];
            for (j, &s) in cheb.iter().enumerate() {
                row[j] = ((s + hi).powf(kappa) - (s + lo).powf(kappa)) / (kappa * (hi - lo));
            }
            far.push(row);
            far_var.push(hi - lo);
        }
        let mut interp = Vec::with_capacity(n * NODES);
        for m in 0..n {
            for &th in &theta {
                let b: Vec<f64> = chebyshev_basis(&cheb, (m as f64 + th) * delta);
                let mut row = [0.0; CHEB];
                row.copy_from_slice(&b);
                interp.push(row);
            }
        }
        let conv = near.iter().map(|w| Convolver::new(w, 2 * n)).collect();
        let mut model = RosenblattModel {
            n,
            kappa,
            delta,
            omega,
            near,
            far,
            far_var,
            interp,
            conv,
            centering: Vec::new(),
            horizon_log2,
            raw_variance: 0.0,
            scale: 1.0,
        };
        model.centering = model.node_second_moments();
        model.raw_variance = model.raw_variance_at(n);
        if !(model.raw_variance > 0.0) {
            return Err(Error::Simulation("degenerate Rosenblatt variance".into()));
        }
        model.scale = 1.0 / model.raw_variance.sqrt();
        Ok(model)
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Normalizing constant `c`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Number of far-past driver cells.
    pub fn far_cells(&self) -> usize {
        self.far.len()
    }

    /// Variance of the normalized `Y(k / n)` under the discrete model.
    pub fn variance_at(&self, k: usize) -> f64 {
        self.scale * self.scale * self.raw_variance_at(k)
    }

    /// Variance of the continuum process with the same normalization as the
    /// discrete `Y(1)` before scaling, divided by the discrete one.
    pub fn continuum_ratio(&self) -> f64 {
        continuum_variance(self.kappa) / self.raw_variance
    }

    fn far_gram(&self) -> [[f64; CHEB]; CHEB] {
        let mut m = [[0.0; CHEB]; CHEB];
        for (row, &v) in self.far.iter().zip(&self.far_var) {
            for j in 0..CHEB {
                for l in 0..CHEB {
                    m[j][l] += v * row[j] * row[l];
                }
            }
        }
        m
    }

    /// `E[Z_a^2] = sum_i w_a(i)^2 v_i` for every node.
    fn node_second_moments(&self) -> Vec<f64> {
        let n = self.n;
        let gram = self.far_gram();
        let mut out = Vec::with_capacity(n * NODES);
        let mut prefix = [0.0f64; NODES];
        for q in 0..NODES {
            prefix[q] = self.near[q][..n].iter().map(|w| w * w).sum();
        }
        for m in 0..n {
            for q in 0..NODES {
                prefix[q] += self.near[q][m + n].powi(2);
                let l = &self.interp[m * NODES + q];
                let mut far = 0.0;
                for j in 0..CHEB {
                    far += l[j] * (0..CHEB).map(|i| gram[j][i] * l[i]).sum::<f64>();
                }
                out.push(self.delta * prefix[q] + far);
            }
        }
        out
    }

    /// `2 sum_{a,b} Omega_a Omega_b G_ab^2` over nodes with `m < k`, where
    /// `G_ab = sum_i w_a(i) w_b(i) v_i`.
    fn raw_variance_at(&self, k: usize) -> f64 {
        assert!(k <= self.n);
        if k == 0 {
            return 0.0;
        }
        let n = self.n;
        let gram = self.far_gram();
        let proj: Vec<[f64; CHEB]> = self.interp[..k * NODES]
            .iter()
            .map(|row| {
                let mut out = [0.0; CHEB];
                for j in 0..CHEB {
                    out[j] = (0..CHEB).map(|l| gram[j][l] * row[l]).sum();
                }
                out
            })
            .collect();
        let off: Vec<f64> = (0..k)
            .into_par_iter()
            .map(|lag| {
                let mut local = 0.0;
                for qa in 0..NODES {
                    for qb in 0..NODES {
                        let wa = &self.near[qa];
                        let wb = &self.near[qb];
                        let mut acc: f64 = (0..=n).map(|l| wa[lag + l] * wb[l]).sum();
                        let mut part = 0.0;
                        for mb in 0..k - lag {
                            if mb > 0 {
                                acc += wa[lag + mb + n] * wb[mb + n];
                            }
                            let a = (mb + lag) * NODES + qa;
                            let b = mb * NODES + qb;
                            let far: f64 = self.interp[a].iter().zip(&proj[b]).map(|(x, y)| x * y).sum();
                            let g = self.delta * acc + far;
                            part += g * g;
                        }
                        local += self.omega[qa] * self.omega[qb] * part;
                    }
                }
                if lag == 0 {
                    local
                } else {
                    2.0 * local
                }
            })
            .collect();
        2.0 * off.iter().sum::<f64>()
    }

    fn sample_raw(&self, seed: Seed) -> Vec<f64> {
        let n = self.n;
        let mut rng = seed.rng();
        let sd = self.delta.sqrt();
        let near: Vec<f64> = (0..2 * n).map(|_| sd * f64::standard_normal(&mut rng)).collect();
        let far: Vec<f64> = self
            .far_var
            .iter()
            .map(|v| v.sqrt() * f64::standard_normal(&mut rng))
            .collect();
        let z: Vec<Vec<f64>> = self.conv.iter().map(|c| c.apply(&near)).collect();
        let mut lin = [0.0; CHEB];
        for (row, &b) in self.far.iter().zip(&far) {
            for j in 0..CHEB {
                lin[j] += row[j] * b;
            }
        }

        let mut out = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        out.push(0.0);
        for m in 0..n {
            for q in 0..NODES {
                let node = m * NODES + q;
                let zf: f64 = self.interp[node].iter().zip(&lin).map(|(a, b)| a * b).sum();
                let zz = z[q][m + n] + zf;
                acc += self.omega[q] * (zz * zz - self.centering[node]);
            }
            out.push(acc * self.scale);
        }
        out
    }
}

/// `Var Y(1)` of the continuum double integral without normalization.
pub fn continuum_variance(kappa: f64) -> f64 {
    let b = beta(kappa, 1.0 - 2.0 * kappa);
    2.0 * b * b * 2.0 / ((4.0 * kappa - 1.0) * 4.0 * kappa)
}

/// Variance of the normalized discrete `Y(k / n)`.
pub fn discrete_variance(kappa: f64, n: usize, k: usize) -> Result<f64> {
    let model = RosenblattModel::new(kappa, n)?;
    if k > n {
        return Err(Error::param("time index beyond the grid"));
    }
    Ok(model.variance_at(k))
}

impl<T: Real> PathEngine<T> for RosenblattModel {
    fn sample(&self, seed: Seed) -> Result<Vec<T>> {
        Ok(self.sample_raw(seed).into_iter().map(T::lit).collect())
    }

    fn meta(&self) -> Vec<(String, f64)> {
        vec![
            ("kappa".into(), self.kappa),
            ("normalization".into(), self.scale),
            ("far_cells".into(), self.far.len() as f64),
            ("far_horizon_log2".into(), self.horizon_log2),
            ("continuum_variance_ratio".into(), self.continuum_ratio()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Averaged kernel of every node against every driver cell, and the
    /// driver variances.
    fn dense_weights(model: &RosenblattModel) -> (Vec<Vec<f64>>, Vec<f64>) {
        let n = model.n;
        let near_cells = 2 * n;
        let cells = near_cells + model.far.len();
        let weight = |node: usize, cell: usize| -> f64 {
            let (m, q) = (node / NODES, node % NODES);
            if cell < near_cells {
                let i = cell as i64 - n as i64;
                if i > m as i64 {
                    0.0
                } else {
                    model.near[q][(m as i64 - i) as usize]
                }
            } else {
                let row = &model.far[cell - near_cells];
                model.interp[node].iter().zip(row).map(|(a, b)| a * b).sum()
            }
        };
        let var = (0..cells)
            .map(|cell| {
                if cell < near_cells {
                    model.delta
                } else {
                    model.far_var[cell - near_cells]
                }
            })
            .collect();
        let w = (0..n * NODES)
            .map(|node| (0..cells).map(|c| weight(node, c)).collect())
            .collect();
        (w, var)
    }

    /// Builds the symmetric coefficient matrix over all driver cells and sums
    /// its squares directly.
    fn dense_variance(model: &RosenblattModel, k: usize) -> f64 {
        let (weights, var) = dense_weights(model);
        let cells = var.len();
        let mut a = vec![0.0; cells * cells];
        for node in 0..k * NODES {
            let w = &weights[node];
            let om = model.omega[node % NODES];
            for i in 0..cells {
                for j in 0..cells {
                    a[i * cells + j] += om * w[i] * w[j];
                }
            }
        }
        let mut s = 0.0;
        for i in 0..cells {
            for j in 0..cells {
                s += a[i * cells + j].powi(2) * var[i] * var[j];
            }
        }
        2.0 * s
    }

    #[test]
    fn closed_form_variance_matches_dense_double_sum() {
        let model = RosenblattModel::new(0.35f64, 8).unwrap();
        for k in [1, 3, 8] {
            let fast = model.raw_variance_at(k);
            let dense = dense_variance(&model, k);
            assert!((fast / dense - 1.0).abs() < 1e-10, "k={k}: {fast} vs {dense}");
        }
    }

    #[test]
    fn centering_is_the_second_moment_of_each_node() {
        let model = RosenblattModel::new(0.3f64, 8).unwrap();
        let (weights, var) = dense_weights(&model);
        for (node, w) in weights.iter().enumerate() {
            let m2: f64 = w.iter().zip(&var).map(|(w, v)| w * w * v).sum();
            assert!((model.centering[node] / m2 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn paths_are_centered() {
        let model = RosenblattModel::new(0.35f64, 32).unwrap();
        let reps = 4000;
        let ends: Vec<f64> = (0..reps)
            .map(|r| *model.sample_raw(Seed::new(r)).last().unwrap())
            .collect();
        let mean = ends.iter().sum::<f64>() / reps as f64;
        // Unit variance, so the standard error of the mean is 1/sqrt(reps).
        assert!(mean.abs() < 4.0 / (reps as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn far_horizon_grows_as_kappa_approaches_one_half() {
        assert_eq!(far_horizon_log2(0.3), 40.0);
        assert!(far_horizon_log2(0.45) >= 140.0);
        let model = RosenblattModel::new(0.45f64, 64).unwrap();
        assert!((model.continuum_ratio() - 1.0).abs() < 0.02, "{}", model.continuum_ratio());
    }

    #[test]
    fn normalized_variance_is_one_at_the_horizon() {
        let model = RosenblattModel::new(0.4f64, 64).unwrap();
        assert!((model.variance_at(64) - 1.0).abs() < 1e-12);
        assert_eq!(model.variance_at(0), 0.0);
    }

    #[test]
    fn discrete_model_tracks_continuum_normalization() {
        let model = RosenblattModel::new(0.35f64, 256).unwrap();
        let r = model.continuum_ratio();
        assert!((r - 1.0).abs() < 0.05, "ratio {r}");
    }

    #[test]
    fn far_interpolation_is_accurate() {
        let model = RosenblattModel::new(0.3f64, 16).unwrap();
        let cheb = chebyshev_points(CHEB);
        let kappa = model.kappa;
        for &s in &[0.01, 0.37, 0.99] {
            let b: Vec<f64> = chebyshev_basis(&cheb, s);
            let (lo, hi) = (1.0f64, 2f64.powf(FAR_RATIO_LOG2));
            assert_eq!(model.far_var[0], hi - lo);
            let exact = ((s + hi).powf(kappa) - (s + lo).powf(kappa)) / (kappa * (hi - lo));
            let approx: f64 = b.iter().zip(&model.far[0]).map(|(a, b)| a * b).sum();
            assert!((approx - exact).abs() < 1e-10 * exact);
        }
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(RosenblattModel::new(0.25f64, 64).is_err());
        assert!(RosenblattModel::new(0.5f64, 64).is_err());
        assert!(RosenblattModel::new(0.35f64, 1 << 13).is_err());
    }
}
