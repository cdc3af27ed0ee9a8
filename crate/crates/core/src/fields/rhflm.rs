//! Real harmonizable fractional Lévy motion from a Poisson cloud of marked
//! frequencies in an annulus. The compensator vanishes for rotationally
//! invariant marks and is omitted.

use num_complex::Complex;

use super::PathEngine;
use crate::error::Result;
use crate::sampling::{poisson_cloud, Annulus, MarkLaw, Seed};
use crate::scalar::Real;
use crate::special::{integrate, integrate_log};

const REANCHOR: usize = 128;

pub(crate) struct Rhflm<T: Real> {
    n: usize,
    hurst: f64,
    window: Annulus<T>,
    marks: MarkLaw<T>,
    /// Standard deviation of the windowed `X(1)`.
    norm: f64,
}

/// `int_a^b 4 sin^2(x/2) x^(-2H-1) dx`.
fn windowed_spectral_mass(hurst: f64, a: f64, b: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let f = |x: f64| 4.0 * (x / 2.0).sin().powi(2) * x.powf(-2.0 * hurst - 1.0);
    let split = b.min(tau.max(a));
    let mut s = if split > a {
        integrate_log(f, a, split, 16)
    } else {
        0.0
    };
    let mut lo = split;
    while lo < b {
        let hi = (lo + tau).min(b);
        s += integrate(f, lo, hi, 2, 12);
        lo = hi;
    }
    s
}

impl<T: Real> Rhflm<T> {
    pub fn new(hurst: T, n: usize, window: Annulus<T>, marks: MarkLaw<T>) -> Result<Self> {
        let h = hurst.as_f64();
        let mass = windowed_spectral_mass(h, window.inner.as_f64(), window.outer.as_f64());
        // Campbell: Var = total_mass * 2 rho^2 * int over both half-lines.
        let rho = marks.modulus.as_f64();
        let var = marks.total_mass.as_f64() * 2.0 * rho * rho * 2.0 * mass;
        Ok(Rhflm {
            n,
            hurst: h,
            window,
            marks,
            norm: var.sqrt(),
        })
    }
}

impl<T: Real> PathEngine<T> for Rhflm<T> {
    fn sample(&self, seed: Seed) -> Result<Vec<T>> {
        let cloud = poisson_cloud(&self.window, &self.marks, seed)?;
        let dt = 1.0 / self.n as f64;
        let mut acc = vec![0.0f64; self.n + 1];
        for p in &cloud {
            let xi = p.xi[0].as_f64();
            let amp = 2.0 * xi.abs().powf(-self.hurst - 0.5) / self.norm;
            let z = Complex::new(p.mark.re.as_f64() * amp, p.mark.im.as_f64() * amp);
            let rot = Complex::from_polar(1.0, -xi * dt);
            let mut phase = Complex::new(1.0, 0.0);
            for (j, slot) in acc.iter_mut().enumerate().skip(1) {
                if j % REANCHOR == 0 {
                    phase = Complex::from_polar(1.0, -xi * j as f64 * dt);
                } else {
                    phase *= rot;
                }
                // Re((phase - 1) z)
                *slot += (phase.re - 1.0) * z.re - phase.im * z.im;
            }
        }
        Ok(acc.into_iter().map(T::lit).collect())
    }

    fn meta(&self) -> Vec<(String, f64)> {
        vec![
            ("window_inner".into(), self.window.inner.as_f64()),
            ("window_outer".into(), self.window.outer.as_f64()),
            ("mark_modulus".into(), self.marks.modulus.as_f64()),
            ("mark_total_mass".into(), self.marks.total_mass.as_f64()),
            ("normalization".into(), self.norm),
        ]
    }
}
