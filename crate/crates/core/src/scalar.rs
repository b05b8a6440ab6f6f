//! Floating-point scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar usable by the model, the gradients and the pruning math.
///
/// Implemented for `f32` and `f64`. The error function comes from `libm`
/// because `core` does not expose one.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    fn erf(self) -> Self;
    fn erfc(self) -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub(crate) fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `erf(hi) - erf(lo)` for `hi >= lo`, switching to `erfc` when both
/// arguments sit in the same tail so the difference keeps relative accuracy.
#[inline]
pub(crate) fn erf_diff<T: Scalar>(hi: T, lo: T) -> T {
    if lo > T::zero() {
        lo.erfc() - hi.erfc()
    } else if hi < T::zero() {
        (-hi).erfc() - (-lo).erfc()
    } else {
        hi.erf() - lo.erf()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        assert!((Scalar::erf(1.0f64) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((Scalar::erfc(3.0f64) - 2.209_049_699_858_544e-5).abs() < 1e-19);
        assert!((Scalar::erf(0.5f32) - 0.520_499_9).abs() < 1e-6);
    }

    #[test]
    fn erf_diff_tail_keeps_precision() {
        // erf(7) - erf(6) is ~2e-17 and vanishes in naive subtraction.
        let d = erf_diff(7.0f64, 6.0);
        let expected = Scalar::erfc(6.0f64) - Scalar::erfc(7.0f64);
        assert!(d > 0.0);
        assert!((d - expected).abs() <= 1e-14 * expected);
        assert_eq!(erf_diff(-6.0f64, -7.0), d);
    }

    #[test]
    fn log_add_exp_handles_extremes() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 2.0), 2.0);
        let v = log_add_exp(1000.0f64, 1000.0);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
