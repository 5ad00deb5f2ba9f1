//! Floating-point abstraction shared by every numerical module.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

/// Real scalar type the solvers are generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + LowerExp
    + Default
    + FromStr
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; infallible for the supported float types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
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

/// Bernoulli function `z / (e^z - 1)`, with its removable singularity at zero.
///
/// Used for exponentially fitted fluxes; `bernoulli(-z) = bernoulli(z) + z`.
#[inline]
pub fn bernoulli<T: Scalar>(z: T) -> T {
    let az = z.abs();
    if az < T::lit(1e-6) {
        T::one() - z * T::half() + z * z / T::lit(12.0)
    } else if z > T::lit(700.0) {
        z * (-z).exp()
    } else {
        z / z.exp_m1()
    }
}

/// Sequential sum in index order; the fixed order makes reductions bitwise reproducible.
#[inline]
pub fn ordered_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut acc = T::zero();
    for v in values {
        acc += v;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_reflection_identity() {
        for &z in &[-30.0, -2.5, -1e-7, 0.0, 3e-8, 0.3, 4.0, 50.0] {
            let lhs: f64 = bernoulli(-z);
            let rhs = bernoulli(z) + z;
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + z.abs()), "z={z}");
        }
        assert_eq!(bernoulli(0.0f64), 1.0);
    }

    #[test]
    fn bernoulli_is_continuous_at_series_cutoff() {
        let below: f64 = bernoulli(0.999_999e-6);
        let above: f64 = bernoulli(1.000_001e-6);
        assert!((below - above).abs() < 1e-11);
        let f: f32 = bernoulli(0.25f32);
        assert!((f64::from(f) - 0.25 / 0.25f64.exp_m1()).abs() < 1e-6);
    }
}
