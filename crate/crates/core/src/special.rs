//! Special functions and quadrature rules.

use crate::scalar::Real;

/// Gamma function (Lanczos, g = 7), accurate to ~1e-14 for positive arguments.
pub fn gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, &c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

pub fn beta(a: f64, b: f64) -> f64 {
    gamma(a) * gamma(b) / gamma(a + b)
}

/// Gauss–Legendre nodes and weights on `[0, 1]` (weights sum to one).
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(order);
    let mut weights = Vec::with_capacity(order);
    let n = order as f64;
    for i in 1..=order {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=order {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let p = if order == 0 { 1.0 } else { p1 };
            dp = n * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes.push(0.5 * (1.0 - x));
        weights.push(1.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]` split into `pieces`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, pieces: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre_unit(order);
    let h = (b - a) / pieces as f64;
    let mut s = 0.0;
    for p in 0..pieces {
        let lo = a + p as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * f(lo + xi * h);
        }
    }
    s * h
}

/// Integral over `[a, b]` (0 < a < b) on geometrically spaced panels, suited to
/// integrands with power-law behaviour.
pub fn integrate_log(f: impl Fn(f64) -> f64, a: f64, b: f64, panels_per_octave: usize) -> f64 {
    let octaves = (b / a).log2().max(1e-12);
    let panels = ((octaves * panels_per_octave as f64).ceil() as usize).max(1);
    let ratio = (b / a).powf(1.0 / panels as f64);
    let (x, w) = gauss_legendre_unit(8);
    let mut s = 0.0;
    let mut lo = a;
    for _ in 0..panels {
        let hi = lo * ratio;
        let h = hi - lo;
        for (xi, wi) in x.iter().zip(&w) {
            s += wi * h * f(lo + xi * h);
        }
        lo = hi;
    }
    s
}

/// Chebyshev points of the second kind mapped to `[0, 1]`.
pub fn chebyshev_points(count: usize) -> Vec<f64> {
    (0..count)
        .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / (count - 1) as f64).cos()))
        .collect()
}

/// Barycentric Lagrange basis values at `x` for Chebyshev points of the second kind.
pub fn chebyshev_basis<T: Real>(points: &[f64], x: f64) -> Vec<T> {
    let n = points.len();
    let mut out = vec![T::zero(); n];
    if let Some(j) = points.iter().position(|&p| (p - x).abs() < 1e-15) {
        out[j] = T::one();
        return out;
    }
    let mut terms = Vec::with_capacity(n);
    let mut total = 0.0;
    for (j, &p) in points.iter().enumerate() {
        let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
        if j == 0 || j == n - 1 {
            w *= 0.5;
        }
        let t = w / (x - p);
        terms.push(t);
        total += t;
    }
    for (o, t) in out.iter_mut().zip(terms) {
        *o = T::lit(t / total);
    }
    out
}
