//! Scalar abstraction and numerical kernels (special functions, quadrature,
//! root finding, small dense linear algebra).

pub mod linalg;
pub mod normal;
pub mod quad;
pub mod roots;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the estimators are generic over.
///
/// Implemented for `f32` and `f64` via the blanket impl; everything in this
/// crate that does arithmetic is written against this trait, with `f64`
/// defaults on the public types.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum<Self> + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`. Panics on values that have no
    /// representation (never the case for the finite literals used here).
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant")
    }

    /// Widens to `f64` (lossless for the supported scalars).
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    #[inline]
    fn half() -> Self {
        Self::of(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::of(2.0)
    }

    /// `self` clamped into `[lo, hi]`.
    #[inline]
    fn clamp_to(self, lo: Self, hi: Self) -> Self {
        if self < lo {
            lo
        } else if self > hi {
            hi
        } else {
            self
        }
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + Sum<T> + Display + Debug + Send + Sync + 'static
{
}

/// Mean of a slice.
pub fn mean<F: Real>(xs: &[F]) -> F {
    if xs.is_empty() {
        return F::nan();
    }
    xs.iter().copied().sum::<F>() / F::of(xs.len() as f64)
}

/// Unbiased (n-1) sample variance.
pub fn sample_variance<F: Real>(xs: &[F]) -> F {
    let n = xs.len();
    if n < 2 {
        return F::zero();
    }
    let m = mean(xs);
    let ss = xs.iter().map(|&x| (x - m) * (x - m)).sum::<F>();
    ss / F::of((n - 1) as f64)
}

/// Unbiased sample standard deviation.
pub fn sample_sd<F: Real>(xs: &[F]) -> F {
    sample_variance(xs).sqrt()
}

/// SplitMix64 step, used to derive independent sub-stream seeds from a master
/// seed without correlating the streams.
pub fn split_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_variance() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_seed_decorrelates_tags() {
        let a = split_seed(7, 1);
        let b = split_seed(7, 2);
        assert_ne!(a, b);
        assert_eq!(a, split_seed(7, 1));
    }

    #[test]
    fn real_trait_works_for_f32() {
        let x: f32 = Real::of(0.25);
        assert_eq!(x, 0.25f32);
        assert_eq!(x.as_f64(), 0.25f64);
    }
}
