//! Small statistical helpers: least squares, envelopes, quantiles and
//! Kolmogorov–Smirnov statistics.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Ordinary least-squares fit `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    pub slope_se: T,
    /// Root mean square of the residuals.
    pub residual_rms: T,
    pub n: usize,
}

pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Option<LineFit<T>> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = T::from_count(n);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let sxx: T = x.iter().map(|&v| (v - mx) * (v - mx)).sum();
    if sxx <= T::zero() {
        return None;
    }
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: T = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let slope_se = if n > 2 {
        (sse / T::from_count(n - 2) / sxx).sqrt()
    } else {
        T::zero()
    };
    Some(LineFit {
        slope,
        intercept,
        slope_se,
        residual_rms: (sse / nf).sqrt(),
        n,
    })
}

/// Upper concave envelope of the points `(x_i, y_i)` (x strictly increasing),
/// evaluated back at every `x_i`.
pub fn upper_envelope<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    envelope(x, y, true)
}

/// Lower convex envelope of the points `(x_i, y_i)`, evaluated at every `x_i`.
pub fn lower_envelope<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    envelope(x, y, false)
}

fn envelope<T: Real>(x: &[T], y: &[T], upper: bool) -> Vec<T> {
    let n = x.len();
    if n <= 2 {
        return y.to_vec();
    }
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a]);
            // Upper hull keeps right turns, lower hull keeps left turns.
            let drop = if upper {
                cross >= T::zero()
            } else {
                cross <= T::zero()
            };
            if drop {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        while seg + 1 < hull.len() - 1 && x[hull[seg + 1]] < x[i] {
            seg += 1;
        }
        let (a, b) = (hull[seg], hull[(seg + 1).min(hull.len() - 1)]);
        if a == b || x[b] == x[a] {
            out.push(y[a]);
        } else {
            let w = (x[i] - x[a]) / (x[b] - x[a]);
            out.push(y[a] + w * (y[b] - y[a]));
        }
    }
    out
}

/// Least-squares slopes over every run of `width` consecutive points.
pub fn sliding_slopes<T: Real>(x: &[T], y: &[T], width: usize) -> Vec<LineFit<T>> {
    if width < 2 || x.len() < width {
        return Vec::new();
    }
    (0..=x.len() - width)
        .filter_map(|i| linear_fit(&x[i..i + width], &y[i..i + width]))
        .collect()
}

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile<T: Real>(values: &[T], q: f64) -> Option<T> {
    let mut v: Vec<T> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted<T: Real>(sorted: &[T], q: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let w = T::lit(h - lo as f64);
    Some(sorted[lo] + w * (sorted[hi] - sorted[lo]))
}

pub fn mean<T: Real>(v: &[T]) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.iter().copied().sum::<T>() / T::from_count(v.len())
}

/// Unbiased sample variance.
pub fn variance<T: Real>(v: &[T]) -> T {
    if v.len() < 2 {
        return T::zero();
    }
    let m = mean(v);
    v.iter().map(|&x| (x - m) * (x - m)).sum::<T>() / T::from_count(v.len() - 1)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample<T: Real>(a: &[T], b: &[T]) -> f64 {
    let mut a: Vec<f64> = a.iter().map(|v| v.as_f64()).collect();
    let mut b: Vec<f64> = b.iter().map(|v| v.as_f64()).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous cdf.
pub fn ks_one_sample<T: Real>(sample: &[T], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut v: Vec<f64> = sample.iter().map(|x| x.as_f64()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov distribution tail `P(K > lambda)`.
pub fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        s += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    s.clamp(0.0, 1.0)
}

/// Asymptotic p-value of a two-sample KS statistic.
pub fn ks_two_sample_pvalue(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sq = ne.sqrt();
    kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d)
}

/// Asymptotic p-value of a one-sample KS statistic.
pub fn ks_one_sample_pvalue(d: f64, n: usize) -> f64 {
    let sq = (n as f64).sqrt();
    kolmogorov_tail((sq + 0.12 + 0.11 / sq) * d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_has_zero_error() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0f64).abs() < 1e-12);
        assert!((f.intercept - 1.0f64).abs() < 1e-12);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn envelopes_bracket_data() {
        let x: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| v + 0.3 * (v * 1.7).sin()).collect();
        let up = upper_envelope(&x, &y);
        let lo = lower_envelope(&x, &y);
        for i in 0..x.len() {
            assert!(up[i] >= y[i] - 1e-12);
            assert!(lo[i] <= y[i] + 1e-12);
        }
        assert_eq!(up[0], y[0]);
        assert_eq!(lo[8], y[8]);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), Some(1.0));
        assert_eq!(quantile(&v, 1.0), Some(4.0));
        assert!((quantile(&v, 0.5).unwrap() - 2.5f64).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = [0.1, 0.5, 0.3];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b = [10.0, 11.0, 12.0];
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert!(ks_two_sample_pvalue(0.0, 100, 100) > 0.99);
        assert!(ks_two_sample_pvalue(0.5, 1000, 1000) < 1e-6);
    }
}
