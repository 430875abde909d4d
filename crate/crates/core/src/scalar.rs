use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar every numerical routine is generic over.
///
/// Implemented for `f32` and `f64`. Reports and file payloads are always
/// stored as `f64`, so the conversions below are the only bridge needed.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or parameter into this scalar.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to every Real")
    }

    /// Lossless (f64) or widening (f32) conversion for reports.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real always converts to f64")
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to every Real")
    }

    /// Relative slack for inequality checks that hold exactly in real
    /// arithmetic. The requested value is used unless it sits below what the
    /// type can resolve.
    #[inline]
    fn check_tol(requested: f64) -> f64 {
        requested.max(64.0 * Self::epsilon().as_f64())
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `a + b` as an unevaluated pair `(sum, error)` (Knuth's TwoSum).
#[inline]
pub(crate) fn two_sum<T: Real>(a: T, b: T) -> (T, T) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// Double-length accumulator built on [`two_sum`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Compensated<T> {
    pub hi: T,
    pub lo: T,
}

impl<T: Real> Compensated<T> {
    #[inline]
    pub fn new(hi: T, lo: T) -> Self {
        Self { hi, lo }
    }

    #[inline]
    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let hi = s + e;
        let lo = e - (hi - s);
        Self { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    #[inline]
    pub fn value(self) -> T {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_recovers_cancelled_bits() {
        let big = Compensated::new(1.0e16_f64, 0.0);
        let small = Compensated::new(1.0, 0.0);
        let total = big.add(small).add(big.neg());
        assert_eq!(total.value(), 1.0);
    }

    #[test]
    fn tolerance_floor_depends_on_type() {
        assert_eq!(f64::check_tol(1e-12), 1e-12);
        assert!(f32::check_tol(1e-12) > 1e-6);
    }
}
