//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All geometry, sampling and estimation code is written against [`Real`], which
//! is implemented for `f32` and `f64`. Reports and configuration use `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Exp1, Open01, StandardNormal};
use rustfft::FftNum;

/// Floating point type usable throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into this type.
    fn lit(x: f64) -> Self;

    /// Converts a count into this type.
    fn from_count(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
    fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self;
    /// Uniform draw on the open interval (0, 1).
    fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <StandardNormal as Distribution<$t>>::sample(&StandardNormal, rng)
            }
            #[inline]
            fn exp1<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <Exp1 as Distribution<$t>>::sample(&Exp1, rng)
            }
            #[inline]
            fn open01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                <Open01 as Distribution<$t>>::sample(&Open01, rng)
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Euclidean distance between two coordinate slices of equal arity.
#[inline]
pub fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

#[inline]
pub fn norm<T: Real>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum::<T>().sqrt()
}
