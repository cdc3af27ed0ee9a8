//! Harmonizable fractional stable motion through a truncated LePage series.
//!
//! Frequencies are drawn from a symmetric proposal with density proportional
//! to `|x|^(a-1)` on `[0, 1]` and `|x|^(-b-1)` beyond, `a = alpha (1 - H)`,
//! `b = alpha H`. With these exponents the importance weight
//! `|f_t(x)|^alpha / p(x)` stays bounded at both ends.

use num_complex::Complex;
use rand::Rng;

use super::PathEngine;
use crate::error::Result;
use crate::sampling::{lepage_terms, Seed};
use crate::scalar::Real;
use crate::special::{gamma, integrate, integrate_log};

/// Recompute the phase exactly every this many steps of the rotation
/// recurrence.
const REANCHOR: usize = 128;

pub(crate) struct Hfsm<T: Real> {
    n: usize,
    alpha: T,
    hurst: T,
    terms: usize,
    low: f64,
    high: f64,
    /// Probability of drawing from the `[0, 1]` piece.
    low_weight: f64,
    /// Normalizer of the proposal on the half line.
    proposal_norm: f64,
    /// Stable scale of the untruncated `X(1)`.
    norm: f64,
}

/// `C_alpha` of the LePage representation of a symmetric stable variable.
pub(crate) fn lepage_constant(alpha: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-12 {
        2.0 / std::f64::consts::PI
    } else {
        (1.0 - alpha) / (gamma(2.0 - alpha) * (std::f64::consts::PI * alpha / 2.0).cos())
    }
}

/// `E|g|^p` for a standard Gaussian `g`.
pub(crate) fn gaussian_abs_moment(p: f64) -> f64 {
    2f64.powf(p / 2.0) * gamma((p + 1.0) / 2.0) / std::f64::consts::PI.sqrt()
}

/// `int_0^inf |2 sin(x/2)|^p x^(-q-1) dx` for `0 < q < p`.
pub(crate) fn sine_power_integral(p: f64, q: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let f = |x: f64| (2.0 * (x / 2.0).sin()).abs().powf(p) * x.powf(-q - 1.0);
    // Near zero the integrand is x^(p-q-1) to leading order.
    let eps: f64 = 1e-8;
    let mut s = eps.powf(p - q) / (p - q);
    s += integrate_log(f, eps, tau, 16);
    let periods = 4000;
    for k in 1..periods {
        let lo = tau * k as f64;
        s += integrate(f, lo, lo + tau, 2, 12);
    }
    // Tail: average of |2 sin|^p over a period times the power tail.
    let big = tau * periods as f64;
    let mean = 2f64.powf(p) * gamma((p + 1.0) / 2.0) / (std::f64::consts::PI.sqrt() * gamma(p / 2.0 + 1.0));
    s + mean * big.powf(-q) / q
}

impl<T: Real> Hfsm<T> {
    pub fn new(alpha: T, hurst: T, n: usize, terms: usize) -> Result<Self> {
        let a_ = alpha.as_f64();
        let h = hurst.as_f64();
        let low = a_ * (1.0 - h);
        let high = a_ * h;
        let proposal_norm = 1.0 / low + 1.0 / high;
        let integral = 2.0 * sine_power_integral(a_, a_ * h);
        let norm = (gaussian_abs_moment(a_) * integral / lepage_constant(a_)).powf(1.0 / a_);
        Ok(Hfsm {
            n,
            alpha,
            hurst,
            terms,
            low,
            high,
            low_weight: (1.0 / low) / proposal_norm,
            proposal_norm,
            norm,
        })
    }

    /// Symmetric proposal density at `|x|`.
    fn density(&self, x: f64) -> f64 {
        let p = if x <= 1.0 {
            x.powf(self.low - 1.0)
        } else {
            x.powf(-self.high - 1.0)
        };
        0.5 * p / self.proposal_norm
    }
}

impl<T: Real> PathEngine<T> for Hfsm<T> {
    fn sample(&self, seed: Seed) -> Result<Vec<T>> {
        let lepage = lepage_terms(self.alpha, self.terms, seed)?;
        let mut rng = seed.derive(u64::MAX).rng();
        let a = self.alpha.as_f64();
        let h = self.hurst.as_f64();
        let dt = 1.0 / self.n as f64;
        let mut acc = vec![0.0f64; self.n + 1];
        for k in 0..self.terms {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let mag = if rng.random::<f64>() < self.low_weight {
                u.powf(1.0 / self.low)
            } else {
                u.powf(-1.0 / self.high)
            };
            let freq = if rng.random::<bool>() { mag } else { -mag };
            let amp = lepage.weights[k].as_f64() * self.density(mag).powf(-1.0 / a)
                * mag.powf(-h - 1.0 / a)
                / self.norm;
            let (g1, g2) = lepage.marks[k];
            let g = Complex::new(g1.as_f64() * amp, g2.as_f64() * amp);
            // Re(g (e^{i t x} - 1)) along the grid.
            let rot = Complex::from_polar(1.0, freq * dt);
            let mut phase = Complex::new(1.0, 0.0);
            for (j, slot) in acc.iter_mut().enumerate().skip(1) {
                if j % REANCHOR == 0 {
                    phase = Complex::from_polar(1.0, freq * j as f64 * dt);
                } else {
                    phase *= rot;
                }
                *slot += g.re * (phase.re - 1.0) - g.im * phase.im;
            }
        }
        Ok(acc.into_iter().map(T::lit).collect())
    }

    fn meta(&self) -> Vec<(String, f64)> {
        vec![
            ("alpha".into(), self.alpha.as_f64()),
            ("lepage_terms".into(), self.terms as f64),
            ("normalization".into(), self.norm),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lepage_constant_at_alpha_one() {
        // Removable singularity at alpha = 1.
        let c = lepage_constant(1.0 + 1e-7);
        assert!((c - 2.0 / std::f64::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn gaussian_moments() {
        assert!((gaussian_abs_moment(2.0) - 1.0).abs() < 1e-12);
        assert!((gaussian_abs_moment(1.0) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sine_integral_matches_brownian_closed_form() {
        // int_0^inf 4 sin^2(x/2) x^(-2) dx = pi.
        let v = sine_power_integral(2.0, 1.0);
        assert!((v - std::f64::consts::PI).abs() < 1e-3, "{v}");
    }
}
