//! Heavy-tailed and Poissonian randomness primitives.
//!
//! Every routine is a pure function of its arguments and a [`Seed`]; there is
//! no shared generator. Distinct `(seed, stream)` pairs select independent
//! ChaCha streams.

use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// 64-bit master seed plus a stream index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed {
    pub seed: u64,
    pub stream: u64,
}

impl Seed {
    pub fn new(seed: u64) -> Self {
        Seed { seed, stream: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        Seed { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// Child seed for sub-task `index`; children of distinct indices (and of
    /// distinct parents) use distinct streams.
    pub fn derive(&self, index: u64) -> Seed {
        Seed {
            seed: self.seed,
            stream: splitmix64(splitmix64(self.stream) ^ index.wrapping_mul(0xA24B_AED4_963E_E407)),
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Parameters of a symmetric alpha-stable law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableParams<T> {
    pub alpha: T,
    pub scale: T,
}

impl<T: Real> StableParams<T> {
    pub fn new(alpha: T, scale: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha <= T::lit(2.0)) {
            return Err(Error::param(format!("stability index {alpha} outside (0, 2]")));
        }
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::param(format!("stable scale {scale} must be positive")));
        }
        Ok(StableParams { alpha, scale })
    }
}

/// One standard (unit scale) symmetric alpha-stable variate from the
/// angle/exponential transform.
pub fn sas_variate<T: Real, R: Rng + ?Sized>(alpha: T, rng: &mut R) -> T {
    let v = (T::open01(rng) - T::lit(0.5)) * T::PI();
    if alpha == T::one() {
        return v.tan();
    }
    let w = T::exp1(rng);
    if alpha == T::lit(2.0) {
        // sin(2V) / sqrt(cos V) * sqrt(W / cos V) simplified.
        return T::lit(2.0) * v.sin() * w.sqrt();
    }
    let a = (alpha * v).sin() / v.cos().powf(T::one() / alpha);
    let b = (((T::one() - alpha) * v).cos() / w).powf((T::one() - alpha) / alpha);
    a * b
}

/// `n` i.i.d. symmetric alpha-stable variates.
pub fn sample_sas<T: Real>(params: &StableParams<T>, n: usize, seed: Seed) -> Result<Vec<T>> {
    StableParams::new(params.alpha, params.scale)?;
    if n == 0 {
        return Err(Error::param("sample size must be at least 1"));
    }
    let mut rng = seed.rng();
    Ok((0..n)
        .map(|_| params.scale * sas_variate(params.alpha, &mut rng))
        .collect())
}

/// Ingredients of a truncated LePage series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LepageTerms<T> {
    /// Unit-rate Poisson arrival times, strictly increasing.
    pub arrivals: Vec<T>,
    /// `arrivals^(-1/alpha)`.
    pub weights: Vec<T>,
    /// Uniform phases on `[0, 2pi)`.
    pub phases: Vec<T>,
    /// Standard Gaussian pairs.
    pub marks: Vec<(T, T)>,
}

pub const MIN_LEPAGE_TERMS: usize = 100;

pub fn lepage_terms<T: Real>(alpha: T, terms: usize, seed: Seed) -> Result<LepageTerms<T>> {
    StableParams::new(alpha, T::one())?;
    if terms < MIN_LEPAGE_TERMS {
        return Err(Error::param(format!(
            "LePage truncation {terms} below the floor of {MIN_LEPAGE_TERMS}"
        )));
    }
    let mut rng = seed.rng();
    let mut arrivals = Vec::with_capacity(terms);
    let mut gamma = T::zero();
    for _ in 0..terms {
        gamma = gamma + T::exp1(&mut rng);
        arrivals.push(gamma);
    }
    let weights = arrivals.iter().map(|&g| g.powf(-T::one() / alpha)).collect();
    let phases = (0..terms)
        .map(|_| T::open01(&mut rng) * T::TAU())
        .collect();
    let marks = (0..terms)
        .map(|_| (T::standard_normal(&mut rng), T::standard_normal(&mut rng)))
        .collect();
    Ok(LepageTerms {
        arrivals,
        weights,
        phases,
        marks,
    })
}

/// Annular window `inner <= |xi| <= outer` in `R^dim`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annulus<T> {
    pub inner: T,
    pub outer: T,
    pub dim: usize,
}

impl<T: Real> Annulus<T> {
    pub fn new(inner: T, outer: T, dim: usize) -> Result<Self> {
        if !(inner > T::zero() && inner < outer) || !outer.is_finite() {
            return Err(Error::param(format!(
                "annulus needs 0 < inner < outer, got [{inner}, {outer}]"
            )));
        }
        if dim == 0 {
            return Err(Error::param("annulus dimension must be at least 1"));
        }
        Ok(Annulus { inner, outer, dim })
    }

    /// Frequency band resolvable on a grid of `n` steps over `[0,1]`.
    pub fn for_grid(n: usize) -> Result<Self> {
        let nf = T::from_count(n);
        Self::new(T::TAU() / nf, T::PI() * nf, 1)
    }

    pub fn volume(&self) -> T {
        unit_ball_volume::<T>(self.dim)
            * (self.outer.powi(self.dim as i32) - self.inner.powi(self.dim as i32))
    }
}

fn unit_ball_volume<T: Real>(dim: usize) -> T {
    match dim {
        0 => T::one(),
        1 => T::lit(2.0),
        _ => unit_ball_volume::<T>(dim - 2) * T::TAU() / T::from_count(dim),
    }
}

/// Rotationally invariant mark law: uniform phase, modulus fixed at
/// `modulus`, total mass `total_mass`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkLaw<T> {
    pub modulus: T,
    pub total_mass: T,
}

impl<T: Real> Default for MarkLaw<T> {
    fn default() -> Self {
        MarkLaw {
            modulus: T::one(),
            total_mass: T::one(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonPoint<T> {
    pub xi: Vec<T>,
    pub mark: Complex<T>,
}

/// Poisson random measure with intensity `Lebesgue x mark law` restricted to
/// the annulus.
pub fn poisson_cloud<T: Real>(
    window: &Annulus<T>,
    marks: &MarkLaw<T>,
    seed: Seed,
) -> Result<Vec<PoissonPoint<T>>> {
    Annulus::new(window.inner, window.outer, window.dim)?;
    if !(marks.total_mass > T::zero()) || !(marks.modulus > T::zero()) {
        return Err(Error::param("mark law needs positive mass and modulus"));
    }
    let mean = (window.volume() * marks.total_mass).as_f64();
    let mut rng = seed.rng();
    let count = Poisson::new(mean)
        .map_err(|e| Error::param(format!("Poisson mean {mean}: {e}")))?
        .sample(&mut rng) as usize;
    let d = window.dim as i32;
    let (lo, hi) = (window.inner.powi(d), window.outer.powi(d));
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let radius = (lo + T::open01(&mut rng) * (hi - lo)).powf(T::one() / T::from_count(window.dim));
        let xi = if window.dim == 1 {
            let sign = if rng.random::<bool>() { T::one() } else { -T::one() };
            vec![sign * radius]
        } else {
            let dir: Vec<T> = (0..window.dim).map(|_| T::standard_normal(&mut rng)).collect();
            let len = crate::scalar::norm(&dir);
            dir.into_iter().map(|v| v / len * radius).collect()
        };
        let theta = T::open01(&mut rng) * T::TAU();
        out.push(PoissonPoint {
            xi,
            mark: Complex::from_polar(marks.modulus, theta),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, quantile, variance};

    #[test]
    fn gaussian_case_has_variance_two_sigma_squared() {
        let p = StableParams::new(2.0f64, 1.5).unwrap();
        let x = sample_sas(&p, 1_000_000, Seed::new(7)).unwrap();
        let v = variance(&x);
        assert!((v / (2.0 * 1.5 * 1.5) - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn cauchy_case_median_and_tail() {
        let p = StableParams::new(1.0f64, 1.0).unwrap();
        let x = sample_sas(&p, 200_000, Seed::new(11)).unwrap();
        let med = quantile(&x, 0.5).unwrap();
        assert!(med.abs() < 0.02);
        let tail = x.iter().filter(|v| v.abs() > 10.0).count() as f64 / x.len() as f64;
        // P(|C| > 10) = 1 - (2/pi) atan(10)
        let exact = 1.0 - 2.0 / std::f64::consts::PI * 10f64.atan();
        assert!((tail - exact).abs() < 0.003, "{tail} vs {exact}");
    }

    #[test]
    fn parameter_errors() {
        let p = StableParams { alpha: 1.5f64, scale: 1.0 };
        assert!(sample_sas(&p, 0, Seed::new(1)).is_err());
        assert!(StableParams::new(2.5f64, 1.0).is_err());
        assert!(StableParams::new(0.0f64, 1.0).is_err());
        assert!(StableParams::new(1.0f64, -1.0).is_err());
        assert!(lepage_terms(1.5f64, 10, Seed::new(1)).is_err());
    }

    #[test]
    fn sign_is_symmetric() {
        let p = StableParams::new(1.3f64, 1.0).unwrap();
        let n = 100_000;
        let x = sample_sas(&p, n, Seed::new(3)).unwrap();
        let s: f64 = x.iter().map(|v| v.signum()).sum::<f64>() / n as f64;
        // 3 sigma band of a fair +-1 mean
        assert!(s.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn determinism_and_stream_independence() {
        let p = StableParams::new(1.7f64, 1.0).unwrap();
        let a = sample_sas(&p, 64, Seed::new(5)).unwrap();
        let b = sample_sas(&p, 64, Seed::new(5)).unwrap();
        let c = sample_sas(&p, 64, Seed::with_stream(5, 1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(Seed::new(5).derive(0), Seed::new(5).derive(1));
    }

    #[test]
    fn first_arrival_has_unit_mean() {
        let reps = 10_000;
        let g1: Vec<f64> = (0..reps)
            .map(|i| lepage_terms(1.5f64, 100, Seed::with_stream(9, i)).unwrap().arrivals[0])
            .collect();
        assert!((mean(&g1) - 1.0).abs() < 0.03);
        let t = lepage_terms(1.5f64, 500, Seed::new(1)).unwrap();
        assert!(t.arrivals.windows(2).all(|w| w[0] < w[1]));
        assert!(t.phases.iter().all(|&p| (0.0..std::f64::consts::TAU).contains(&p)));
    }

    #[test]
    fn poisson_count_mean() {
        let w = Annulus::new(1.0f64, 2.0, 1).unwrap();
        assert!((w.volume() - 2.0).abs() < 1e-12);
        let law = MarkLaw::default();
        let reps = 20_000u64;
        let counts: Vec<f64> = (0..reps)
            .map(|i| poisson_cloud(&w, &law, Seed::with_stream(2, i)).unwrap().len() as f64)
            .collect();
        // Poisson(2): standard error sqrt(2 / reps)
        assert!((mean(&counts) - 2.0).abs() < 4.0 * (2.0 / reps as f64).sqrt());
        let pts = poisson_cloud(&w, &law, Seed::new(4)).unwrap();
        for p in &pts {
            assert!((p.mark.norm() - 1.0).abs() < 1e-12);
            assert!((1.0..=2.0).contains(&p.xi[0].abs()));
        }
    }

    #[test]
    fn empty_window_is_rejected() {
        assert!(Annulus::new(1.0f64, 1.0, 1).is_err());
        let bad = Annulus { inner: 2.0f64, outer: 2.0, dim: 1 };
        assert!(poisson_cloud(&bad, &MarkLaw::default(), Seed::new(0)).is_err());
    }
}
