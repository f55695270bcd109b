//! Floating point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the solvers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal. Every literal used in the crate is representable.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Lossy conversion used for error payloads and reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Maximum absolute value of a slice, zero for an empty slice.
pub fn max_abs<S: Scalar>(values: &[S]) -> S {
    values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
}

/// Maximum absolute difference of two equally long slices.
pub fn max_abs_diff<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(S::zero(), |m, (x, y)| m.max((*x - *y).abs()))
}

/// `n` evenly spaced points covering `[lo, hi]` inclusive.
pub fn linspace<S: Scalar>(lo: S, hi: S, n: usize) -> Vec<S> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / S::from_usize_lossy(n - 1);
            (0..n)
                .map(|i| {
                    if i + 1 == n {
                        hi
                    } else {
                        lo + step * S::from_usize_lossy(i)
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_hits_both_ends() {
        let xs = linspace(-1.0f64, 2.0, 7);
        assert_eq!(xs.len(), 7);
        assert_eq!(xs[0], -1.0);
        assert_eq!(xs[6], 2.0);
        assert!((xs[1] - xs[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn literals_in_both_precisions() {
        assert_eq!(f32::lit(0.25), 0.25f32);
        assert_eq!(f64::lit(0.25), 0.25f64);
        assert_eq!(max_abs(&[1.0f64, -3.0, 2.0]), 3.0);
        assert_eq!(max_abs_diff(&[1.0f32, 2.0], &[1.5, 0.0]), 2.0);
    }
}
