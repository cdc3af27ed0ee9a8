use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

/// Linear convolution against a fixed kernel through a zero-padded FFT.
pub(crate) struct Convolver<T: Real> {
    size: usize,
    kernel_hat: Vec<Complex<T>>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> Convolver<T> {
    /// `signal_len` is the longest signal that will be convolved.
    pub fn new(kernel: &[T], signal_len: usize) -> Self {
        let size = (kernel.len() + signal_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut kernel_hat: Vec<Complex<T>> = kernel
            .iter()
            .map(|&k| Complex::new(k, T::zero()))
            .chain(std::iter::repeat(Complex::new(T::zero(), T::zero())))
            .take(size)
            .collect();
        forward.process(&mut kernel_hat);
        let norm = T::one() / T::from_count(size);
        for k in &mut kernel_hat {
            *k = *k * norm;
        }
        Convolver {
            size,
            kernel_hat,
            forward,
            inverse,
        }
    }

    /// `out[i] = sum_j kernel[j] * signal[i - j]` for `i < signal.len()`.
    pub fn apply(&self, signal: &[T]) -> Vec<T> {
        assert!(signal.len() <= self.size);
        let mut buf: Vec<Complex<T>> = signal
            .iter()
            .map(|&s| Complex::new(s, T::zero()))
            .chain(std::iter::repeat(Complex::new(T::zero(), T::zero())))
            .take(self.size)
            .collect();
        self.forward.process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_hat) {
            *b = *b * *k;
        }
        self.inverse.process(&mut buf);
        buf.into_iter().take(signal.len()).map(|c| c.re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_convolution() {
        let kernel = [1.0, 0.5, -0.25, 2.0];
        let signal = [3.0, -1.0, 0.0, 4.0, 1.5, 2.0];
        let c = Convolver::new(&kernel, signal.len());
        let out = c.apply(&signal);
        for i in 0..signal.len() {
            let direct: f64 = (0..=i.min(kernel.len() - 1))
                .map(|j| kernel[j] * signal[i - j])
                .sum();
            assert!((out[i] - direct).abs() < 1e-12);
        }
    }
}
