//! Double-double arithmetic: an unevaluated sum `hi + lo` of two `f64`s
//! giving roughly 106 bits of significand.
//!
//! Only the operations the perpetuity maps need are provided: field
//! arithmetic, `exp`, `ln`, `sqrt`. Accuracy is about 1e-30 relative
//! across the normal range.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Error-free product `a b = p + e`.
trait TwoProd {
    fn two_prod(a: f64, b: f64) -> (f64, f64);
}

/// Fused multiply-add; only fast where the `fma` feature is enabled.
struct Fused;

/// Dekker's splitting. Exact unless `|a|` or `|b|` exceeds about 1e300,
/// where it falls back to `mul_add`.
struct Split;

impl TwoProd for Fused {
    #[inline(always)]
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }
}

impl TwoProd for Split {
    #[inline(always)]
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        #[inline(always)]
        fn split(x: f64) -> (f64, f64) {
            let t = 134_217_729.0 * x; // (2^27 + 1) x
            let h = t - (t - x);
            (h, x - h)
        }
        let p = a * b;
        if a.abs() > 1e300 || b.abs() > 1e300 {
            return (p, a.mul_add(b, -p));
        }
        let (ah, al) = split(a);
        let (bh, bl) = split(b);
        (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
    }
}

#[cfg(target_feature = "fma")]
type Native = Fused;
#[cfg(not(target_feature = "fma"))]
type Native = Split;

#[inline(always)]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    Native::two_prod(a, b)
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

const INV_FACT_5_TO_10: [f64; 6] = [
    1.0 / 120.0,
    1.0 / 720.0,
    1.0 / 5040.0,
    1.0 / 40320.0,
    1.0 / 362880.0,
    1.0 / 3628800.0,
];

struct ExpTable {
    /// `2^{j/256}`.
    pow2: [DoubleDouble; 256],
    /// `1/n!` for `n = 2..=4`.
    inv_fact: [DoubleDouble; 3],
}

fn exp_table() -> &'static ExpTable {
    static TABLE: OnceLock<ExpTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        // roots[i] = 2^{2^{-(i+1)}}; each square root is good to about
        // 1e-32, so products of at most eight stay below 1e-31
        let mut roots = [DoubleDouble::from_f64(2.0).sqrt(); 8];
        for i in 1..8 {
            roots[i] = roots[i - 1].sqrt();
        }
        let mut pow2 = [DoubleDouble::ONE; 256];
        for (j, p) in pow2.iter_mut().enumerate() {
            for (i, r) in roots.iter().enumerate() {
                if j & (128 >> i) != 0 {
                    *p = *p * *r;
                }
            }
        }
        let mut inv_fact = [DoubleDouble::ONE; 3];
        let mut f = DoubleDouble::ONE;
        for (i, c) in inv_fact.iter_mut().enumerate() {
            f = f.mul_f64((i + 2) as f64);
            *c = DoubleDouble::ONE / f;
        }
        ExpTable { pow2, inv_fact }
    })
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };
    pub const E: Self = Self {
        hi: std::f64::consts::E,
        lo: 1.445_646_891_729_250_2e-16,
    };

    /// Builds from two parts, renormalising so that `|lo| <= ulp(hi)/2`.
    pub fn new(hi: f64, lo: f64) -> Self {
        let (h, l) = quick_two_sum(hi, lo);
        Self::finish(h, l)
    }

    #[inline]
    pub const fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn hi(self) -> f64 {
        self.hi
    }

    #[inline]
    pub fn lo(self) -> f64 {
        self.lo
    }

    /// Nearest `f64`.
    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    fn finish(hi: f64, lo: f64) -> Self {
        if hi.is_finite() {
            Self { hi, lo }
        } else {
            Self { hi, lo: 0.0 }
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite()
    }

    #[inline]
    pub fn is_nan(self) -> bool {
        self.hi.is_nan()
    }

    #[inline]
    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    #[inline]
    fn mul_f64(self, b: f64) -> Self {
        self.mul_f64_with::<Native>(b)
    }

    #[inline(always)]
    fn mul_f64_with<P: TwoProd>(self, b: f64) -> Self {
        let (p, e) = P::two_prod(self.hi, b);
        let (h, l) = quick_two_sum(p, e + self.lo * b);
        Self::finish(h, l)
    }

    /// Product without overflow handling.
    #[inline(always)]
    fn mul_fast<P: TwoProd>(self, b: Self) -> Self {
        let (p, e) = P::two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        Self { hi, lo }
    }

    /// Sum that loses accuracy under heavy cancellation.
    #[inline(always)]
    fn add_fast(self, b: Self) -> Self {
        let (s, e) = two_sum(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(s, e + self.lo + b.lo);
        Self { hi, lo }
    }

    #[inline]
    fn ldexp(self, k: i32) -> Self {
        debug_assert!((-1022..=1023).contains(&k));
        let s = f64::from_bits(((1023 + k) as u64) << 52);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        #[cfg(all(target_arch = "x86_64", not(target_feature = "fma")))]
        if std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the CPU supports the feature `exp_fused` is built for
            return unsafe { exp_fused(self) };
        }
        self.exp_with::<Native>()
    }

    /// Both products are exact, so every variant returns the same bits.
    #[inline(always)]
    fn exp_with<P: TwoProd>(self) -> Self {
        if self.hi.is_nan() {
            return self;
        }
        if self.hi > 709.79 {
            return Self::from_f64(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return Self::ZERO;
        }
        if self.hi == 0.0 {
            return Self::ONE + self;
        }
        // x = (256 m + j) ln2 / 256 + r with |r| <= ln2 / 512
        let t = exp_table();
        let v = self.hi * (256.0 / LN2.hi);
        let ki = (v + 0.5f64.copysign(v)) as i64;
        let k = ki as f64;
        let r = self - LN2.mul_f64_with::<P>(k).ldexp(-8);
        let (m, j) = (ki.div_euclid(256) as i32, ki.rem_euclid(256) as usize);
        // r^n / n! from n = 5 on is below 4e-17 and only needs f64; the
        // terms below cannot cancel, so the unchecked sums are exact enough
        let rh = r.hi;
        let mut tail = 0.0;
        for c in INV_FACT_5_TO_10.iter().rev() {
            tail = tail * rh + c;
        }
        let mut q = t.inv_fact[2].add_fast(r.mul_f64_with::<P>(tail));
        q = t.inv_fact[1].add_fast(r.mul_fast::<P>(q));
        q = t.inv_fact[0].add_fast(r.mul_fast::<P>(q));
        let em1 = r.add_fast(r.mul_fast::<P>(r).mul_fast::<P>(q));
        let out = t.pow2[j].mul_fast::<P>(Self::ONE.add_fast(em1));
        // split the scaling so subnormal results are not flushed early
        if m < -1000 {
            out.ldexp(m + 600).ldexp(-600)
        } else if m > 1000 {
            out.ldexp(m - 600).ldexp(600)
        } else {
            out.ldexp(m)
        }
    }

    pub fn ln(self) -> Self {
        if self.hi.is_nan() || self.hi < 0.0 {
            return Self::from_f64(f64::NAN);
        }
        if self.hi == 0.0 {
            return Self::from_f64(f64::NEG_INFINITY);
        }
        if self.hi.is_infinite() {
            return self;
        }
        // x = m 2^k with m near 1 keeps exp(-y) away from the subnormal range
        let bits = self.hi.to_bits();
        let biased = ((bits >> 52) & 0x7ff) as i32;
        let ki = if biased == 0 {
            self.hi.log2().round() as i32
        } else {
            // exponent, bumped when the significand is above sqrt 2
            biased - 1023 + ((bits & ((1 << 52) - 1)) > 0x6_a09e_667f_3bcd) as i32
        };
        let k = ki as f64;
        let m = if ki < -1000 {
            self.ldexp(600).ldexp(-ki - 600)
        } else if ki > 1000 {
            self.ldexp(-600).ldexp(600 - ki)
        } else {
            self.ldexp(-ki)
        };
        let y0 = Self::from_f64(m.hi.ln());
        // one Newton step on exp(y) = m doubles the precision
        let ln_m = y0 + m * (-y0).exp() - Self::ONE;
        ln_m + LN2.mul_f64(k)
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return if self.hi == 0.0 {
                Self::ZERO
            } else {
                Self::from_f64(f64::NAN)
            };
        }
        if self.hi.is_infinite() {
            return self;
        }
        let s = self.hi.sqrt();
        let (p, e) = two_prod(s, s);
        let resid = ((self.hi - p) - e) + self.lo;
        Self::new(s, resid / (2.0 * s))
    }
}

#[cfg(all(target_arch = "x86_64", not(target_feature = "fma")))]
#[target_feature(enable = "fma")]
unsafe fn exp_fused(x: DoubleDouble) -> DoubleDouble {
    x.exp_with::<Fused>()
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, b.hi);
        if !s1.is_finite() {
            return Self::from_f64(s1);
        }
        let (t1, t2) = two_sum(self.lo, b.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (h, l) = quick_two_sum(s1, s2 + t2);
        Self::finish(h, l)
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        self + (-b)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        let (p, e) = two_prod(self.hi, b.hi);
        if !p.is_finite() {
            return Self::from_f64(p);
        }
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (h, l) = quick_two_sum(p, e);
        Self::finish(h, l)
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    #[inline]
    fn div(self, b: Self) -> Self {
        let q1 = self.hi / b.hi;
        if !q1.is_finite() {
            return Self::from_f64(q1);
        }
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (h, l) = quick_two_sum(q1, q2);
        Self::new(h, l) + Self::from_f64(q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, b: Self) -> Self {
        let q = (self / b).to_f64().trunc();
        self - b.mul_f64(q)
    }
}

macro_rules! assign_ops {
    ($($tr:ident $m:ident $op:tt),*) => {$(
        impl $tr for DoubleDouble {
            #[inline]
            fn $m(&mut self, b: Self) { *self = *self $op b; }
        }
    )*};
}
assign_ops!(AddAssign add_assign +, SubAssign sub_assign -, MulAssign mul_assign *, DivAssign div_assign /);

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi)? {
            Ordering::Equal => self.lo.partial_cmp(&other.lo),
            o => Some(o),
        }
    }
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.lo == 0.0 {
            write!(f, "{}", self.hi)
        } else {
            write!(f, "{} + {:e}", self.hi, self.lo)
        }
    }
}

impl num_traits::Zero for DoubleDouble {
    fn zero() -> Self {
        Self::ZERO
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }
}

impl num_traits::One for DoubleDouble {
    fn one() -> Self {
        Self::ONE
    }
}

impl num_traits::Num for DoubleDouble {
    type FromStrRadixErr = num_traits::ParseFloatError;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        <f64 as num_traits::Num>::from_str_radix(s, radix).map(Self::from_f64)
    }
}

impl num_traits::ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        num_traits::ToPrimitive::to_i64(&DoubleDouble::to_f64(*self))
    }
    fn to_u64(&self) -> Option<u64> {
        num_traits::ToPrimitive::to_u64(&DoubleDouble::to_f64(*self))
    }
    fn to_f64(&self) -> Option<f64> {
        Some(DoubleDouble::to_f64(*self))
    }
}

impl num_traits::NumCast for DoubleDouble {
    fn from<T: num_traits::ToPrimitive>(n: T) -> Option<Self> {
        n.to_f64().map(Self::from_f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_keeps_low_word() {
        let third = DoubleDouble::ONE / DoubleDouble::from_f64(3.0);
        let back = third * DoubleDouble::from_f64(3.0);
        assert!((back - DoubleDouble::ONE).abs().to_f64() < 1e-31);
        let tiny = DoubleDouble::ONE + DoubleDouble::from_f64(1e-20);
        assert_eq!(tiny.hi(), 1.0);
        assert!((tiny.lo() - 1e-20).abs() < 1e-36);
    }

    #[test]
    fn exp_of_one_is_e() {
        let e = DoubleDouble::ONE.exp();
        assert!((e - DoubleDouble::E).abs().to_f64() < 1e-30);
        let ln_e = DoubleDouble::E.ln();
        assert!((ln_e - DoubleDouble::ONE).abs().to_f64() < 1e-30);
    }

    #[test]
    fn exp_ln_roundtrip_is_tight() {
        for &x in &[5e-320, 1e-300, 1e-5, 0.3, 1.5, 2.0, 17.5, 1e6, 1e300, 1.7e308] {
            let d = DoubleDouble::from_f64(x);
            let r = d.ln().exp();
            assert!(((r - d) / d).abs().to_f64() < 1e-29, "x = {x}");
        }
        for &y in &[-600.0, -3.0, -1e-9, 0.25, 1.0, 50.0, 700.0] {
            let d = DoubleDouble::from_f64(y);
            let r = d.exp().ln();
            assert!((r - d).abs().to_f64() < 1e-29 * y.abs().max(1.0), "y = {y}");
        }
    }

    #[test]
    fn product_variants_agree() {
        let mut x = 0.1f64;
        for _ in 0..10_000 {
            x = (x * 3.7 + 0.123).fract() * 1e3 - 500.0;
            let y = x * 1.618;
            assert_eq!(Fused::two_prod(x, y), Split::two_prod(x, y));
            let d = DoubleDouble::from_f64(x / 7.0);
            assert_eq!(d.exp_with::<Fused>(), d.exp_with::<Split>());
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let two = DoubleDouble::from_f64(2.0);
        let s = two.sqrt();
        assert!((s * s - two).abs().to_f64() < 1e-31);
    }

    #[test]
    fn overflow_and_special_values() {
        assert!(DoubleDouble::from_f64(800.0).exp().hi().is_infinite());
        assert_eq!(DoubleDouble::from_f64(-800.0).exp().to_f64(), 0.0);
        assert!(DoubleDouble::from_f64(-1.0).ln().is_nan());
        assert_eq!(DoubleDouble::ZERO.ln().to_f64(), f64::NEG_INFINITY);
    }
}
