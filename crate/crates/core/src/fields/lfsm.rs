//! Linear fractional stable motion as a midpoint Riemann sum of the
//! moving-average kernel against i.i.d. symmetric stable increments on
//! `[-T, 1]`.

use super::fft::Convolver;
use super::PathEngine;
use crate::error::Result;
use crate::sampling::{sas_variate, Seed};
use crate::scalar::Real;

pub(crate) struct Lfsm<T: Real> {
    n: usize,
    past: usize,
    alpha: T,
    increment_scale: T,
    /// Stable scale of the discretized `X(1)` before normalization.
    norm: T,
    conv: Convolver<T>,
}

impl<T: Real> Lfsm<T> {
    pub fn new(alpha: T, hurst: T, n: usize, burn_in: T) -> Result<Self> {
        let a = alpha.as_f64();
        let e = hurst.as_f64() - 1.0 / a;
        let delta = 1.0 / n as f64;
        let past = (burn_in.as_f64() * n as f64).ceil() as usize;
        let len = past + n;
        let kernel: Vec<T> = (0..len)
            .map(|l| T::lit(((l as f64 + 0.5) * delta).powf(e)))
            .collect();
        // X(1) = sum_j h_j M_j with M_j of scale delta^(1/alpha).
        let mut scale_pow = 0.0;
        for j in -(past as i64)..n as i64 {
            let mut hj = ((n as i64 - j) as f64 - 0.5).powf(e) * delta.powf(e);
            if j < 0 {
                hj -= ((-j) as f64 - 0.5).powf(e) * delta.powf(e);
            }
            scale_pow += hj.abs().powf(a) * delta;
        }
        Ok(Lfsm {
            n,
            past,
            alpha,
            increment_scale: T::lit(delta.powf(1.0 / a)),
            norm: T::lit(scale_pow.powf(1.0 / a)),
            conv: Convolver::new(&kernel, len),
        })
    }
}

impl<T: Real> PathEngine<T> for Lfsm<T> {
    fn sample(&self, seed: Seed) -> Result<Vec<T>> {
        let mut rng = seed.rng();
        let len = self.past + self.n;
        let increments: Vec<T> = (0..len)
            .map(|_| self.increment_scale * sas_variate(self.alpha, &mut rng))
            .collect();
        let conv = self.conv.apply(&increments);
        let anchor = if self.past > 0 {
            conv[self.past - 1]
        } else {
            T::zero()
        };
        let mut out = Vec::with_capacity(self.n + 1);
        out.push(T::zero());
        for k in 1..=self.n {
            out.push((conv[k + self.past - 1] - anchor) / self.norm);
        }
        Ok(out)
    }

    fn meta(&self) -> Vec<(String, f64)> {
        vec![
            ("alpha".into(), self.alpha.as_f64()),
            ("burn_in".into(), self.past as f64 / self.n as f64),
            ("history_cells".into(), self.past as f64),
            ("normalization".into(), self.norm.as_f64()),
        ]
    }
}
