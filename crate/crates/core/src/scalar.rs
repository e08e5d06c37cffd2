//! The scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal, panicking only for values the type cannot hold at all.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in the scalar type")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `x^p` for `x >= 0`, with `p = 1` and `p = 2` kept exact.
pub(crate) fn pow_nonneg<T: Scalar>(x: T, p: T) -> T {
    if p == T::one() {
        x
    } else if p == T::lit(2.0) {
        x * x
    } else {
        x.powf(p)
    }
}

/// `x^(1/p)` for `x >= 0`, with `p = 1` and `p = 2` kept exact.
pub(crate) fn root_nonneg<T: Scalar>(x: T, p: T) -> T {
    if p == T::one() {
        x
    } else if p == T::lit(2.0) {
        x.sqrt()
    } else {
        x.powf(p.recip())
    }
}

/// `(sum_i weight_i * a_i^p)^(1/p)` for nonnegative `a_i`, scaled by the largest term so that a
/// single nonzero term is returned exactly and large magnitudes do not overflow.
pub(crate) fn scaled_power_sum<T, I>(terms: I, p: T) -> T
where
    T: Scalar,
    I: Iterator<Item = (T, T)> + Clone,
{
    let peak = terms
        .clone()
        .filter(|&(_, w)| w > T::zero())
        .fold(T::zero(), |m, (a, _)| m.max(a));
    if peak == T::zero() || peak.is_infinite() {
        return peak;
    }
    let inner: T = terms
        .map(|(a, w)| w * pow_nonneg(a / peak, p))
        .fold(T::zero(), |s, x| s + x);
    peak * root_nonneg(inner, p)
}
