//! Scalar abstraction shared by the pathwise code.
//!
//! `f32` and `f64` get their behaviour from `num_traits::Float`; the
//! double-double type supplies its own transcendental functions.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, Neg, SubAssign};

use num_traits::{Float, Num, NumCast};

use crate::dd::DoubleDouble;

pub trait Real:
    Num
    + NumCast
    + Copy
    + PartialOrd
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;
    fn is_nan(self) -> bool;

    /// Euler's number at the precision of the type.
    fn e() -> Self;

    fn infinity() -> Self {
        Self::from_f64(f64::INFINITY)
    }

    fn neg_infinity() -> Self {
        Self::from_f64(f64::NEG_INFINITY)
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_real_float {
    ($($t:ty),*) => {$(
        impl Real for $t {
            #[inline]
            fn from_f64(x: f64) -> Self { x as $t }
            #[inline]
            fn to_f64(self) -> f64 { self as f64 }
            #[inline]
            fn exp(self) -> Self { Float::exp(self) }
            #[inline]
            fn ln(self) -> Self { Float::ln(self) }
            #[inline]
            fn sqrt(self) -> Self { Float::sqrt(self) }
            #[inline]
            fn abs(self) -> Self { Float::abs(self) }
            #[inline]
            fn is_finite(self) -> bool { Float::is_finite(self) }
            #[inline]
            fn is_nan(self) -> bool { Float::is_nan(self) }
            #[inline]
            fn e() -> Self { <$t as num_traits::FloatConst>::E() }
        }
    )*};
}

impl_real_float!(f32, f64);

impl Real for DoubleDouble {
    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleDouble::from_f64(x)
    }
    #[inline]
    fn to_f64(self) -> f64 {
        DoubleDouble::to_f64(self)
    }
    #[inline]
    fn exp(self) -> Self {
        DoubleDouble::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        DoubleDouble::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        DoubleDouble::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        DoubleDouble::is_finite(self)
    }
    #[inline]
    fn is_nan(self) -> bool {
        DoubleDouble::is_nan(self)
    }
    #[inline]
    fn e() -> Self {
        DoubleDouble::E
    }
}

/// Distance in units in the last place between two finite `f64`s.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.is_nan() || b.is_nan() {
        return u64::MAX;
    }
    let key = |x: f64| -> i64 {
        let bits = x.to_bits() as i64;
        if bits < 0 {
            i64::MIN - bits
        } else {
            bits
        }
    };
    key(a).abs_diff(key(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn generic_square_root<T: Real>(x: f64) -> f64 {
        T::from_f64(x).sqrt().to_f64()
    }

    #[test]
    fn all_scalars_agree_on_simple_values() {
        assert_eq!(generic_square_root::<f64>(4.0), 2.0);
        assert_eq!(generic_square_root::<f32>(4.0), 2.0);
        assert_eq!(generic_square_root::<DoubleDouble>(4.0), 2.0);
    }

    #[test]
    fn ulp_distance_counts_representable_steps() {
        assert_eq!(ulp_distance(1.0, 1.0), 0);
        assert_eq!(ulp_distance(1.0, f64::from_bits(1.0f64.to_bits() + 3)), 3);
        assert_eq!(ulp_distance(-0.0, 0.0), 0);
        assert_eq!(ulp_distance(f64::from_bits(1), -f64::from_bits(1)), 2);
    }
}
