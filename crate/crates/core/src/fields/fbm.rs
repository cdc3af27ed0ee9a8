//! Fractional Brownian motion by circulant embedding of fractional Gaussian
//! noise.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::PathEngine;
use crate::error::{Error, Result};
use crate::sampling::Seed;
use crate::scalar::Real;

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub(crate) fn fgn_autocovariance(hurst: f64, k: usize) -> f64 {
    let k = k as f64;
    let e = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(e) - 2.0 * k.powf(e) + (k - 1.0).abs().powf(e))
}

pub(crate) struct Fbm<T: Real> {
    n: usize,
    /// `sqrt(lambda_j / m)` for the circulant eigenvalues.
    amplitude: Vec<T>,
    fft: Arc<dyn Fft<T>>,
    step_scale: T,
    embedding: usize,
    clipped: f64,
}

impl<T: Real> Fbm<T> {
    pub fn new(hurst: T, n: usize) -> Result<Self> {
        let h = hurst.as_f64();
        let mut planner64 = FftPlanner::<f64>::new();
        for m in [2 * n, 4 * n] {
            let half = m / 2;
            let mut c: Vec<Complex<f64>> = (0..m)
                .map(|j| {
                    let lag = if j <= half { j } else { m - j };
                    Complex::new(fgn_autocovariance(h, lag), 0.0)
                })
                .collect();
            planner64.plan_fft_forward(m).process(&mut c);
            let max = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
            let min = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
            if min < -1e-9 * max {
                continue;
            }
            let clipped = c.iter().filter(|z| z.re < 0.0).map(|z| -z.re).sum::<f64>();
            let amplitude = c
                .iter()
                .map(|z| T::lit((z.re.max(0.0) / m as f64).sqrt()))
                .collect();
            let fft = FftPlanner::<T>::new().plan_fft_forward(m);
            return Ok(Fbm {
                n,
                amplitude,
                fft,
                step_scale: T::lit((n as f64).powf(-h)),
                embedding: m,
                clipped,
            });
        }
        Err(Error::Simulation(format!(
            "circulant embedding of fractional Gaussian noise is not positive definite (H = {h}, n = {n})"
        )))
    }
}

impl<T: Real> PathEngine<T> for Fbm<T> {
    fn sample(&self, seed: Seed) -> Result<Vec<T>> {
        let mut rng = seed.rng();
        let mut w: Vec<Complex<T>> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re = T::standard_normal(&mut rng);
                let im = T::standard_normal(&mut rng);
                Complex::new(a * re, a * im)
            })
            .collect();
        self.fft.process(&mut w);
        let mut out = Vec::with_capacity(self.n + 1);
        let mut acc = T::zero();
        out.push(acc);
        for z in w.iter().take(self.n) {
            acc = acc + z.re;
            out.push(acc * self.step_scale);
        }
        Ok(out)
    }

    fn meta(&self) -> Vec<(String, f64)> {
        vec![
            ("circulant_size".into(), self.embedding as f64),
            ("clipped_eigenvalue_mass".into(), self.clipped),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocovariance_of_white_noise() {
        assert_eq!(fgn_autocovariance(0.5, 0), 1.0);
        assert!(fgn_autocovariance(0.5, 3).abs() < 1e-15);
        assert!(fgn_autocovariance(0.8, 1) > 0.0);
        assert!(fgn_autocovariance(0.2, 1) < 0.0);
    }

    #[test]
    fn embedding_is_nonnegative_across_indices() {
        for h in [0.05, 0.3, 0.5, 0.75, 0.95] {
            let f = Fbm::<f64>::new(h, 1024).unwrap();
            assert_eq!(f.embedding, 2048);
        }
    }
}
