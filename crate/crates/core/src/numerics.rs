//! Deterministic numerical building blocks: adaptive quadrature, bracketed
//! root finding and a few special functions.

use std::collections::BinaryHeap;

use statrs::distribution::{ContinuousCDF, Normal};

use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-10,
            max_intervals: 4000,
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss-Kronrod (7/15) integration over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> Quadrature {
    if a == b {
        return Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        };
    }
    if a > b {
        let q = integrate(f, b, a, opts);
        return Quadrature { value: -q.value, ..q };
    }
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let mut total = v;
    let mut err = e;
    let mut evals = 15;
    while err > opts.abs_tol.max(opts.rel_tol * total.abs()) && heap.len() < opts.max_intervals {
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(&f, p.a, m);
        let (v2, e2) = gk15(&f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.err;
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
    }
    // re-sum to shed accumulated cancellation in the running total
    let value: f64 = heap.iter().map(|p| p.value).sum();
    let abs_error: f64 = heap.iter().map(|p| p.err).sum();
    Quadrature {
        value,
        abs_error,
        evaluations: evals,
    }
}

/// Integral over `[a, inf)` through the map `x = a + t / (1 - t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, opts: QuadOptions) -> Quadrature {
    let g = |t: f64| {
        let u = 1.0 - t;
        let x = a + t / u;
        let v = f(x) / (u * u);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, opts)
}

/// Integral over the whole real line, split at `centre`.
pub fn integrate_real_line<F: Fn(f64) -> f64>(f: F, centre: f64, opts: QuadOptions) -> Quadrature {
    let right = integrate_to_infinity(&f, centre, opts);
    let left = integrate_to_infinity(|x| f(2.0 * centre - x), centre, opts);
    Quadrature {
        value: left.value + right.value,
        abs_error: left.abs_error + right.abs_error,
        evaluations: left.evaluations + right.evaluations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RootError {
    #[error("root is not bracketed: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NotBracketed { f_lo: f64, f_hi: f64 },
    #[error("function returned NaN at {at}")]
    NotANumber { at: f64 },
}

/// Bisection on a sign change of `f` over `[lo, hi]`, to absolute width
/// `tol` on the argument.
pub fn bisect<T: Real, F: Fn(T) -> T>(f: F, mut lo: T, mut hi: T, tol: T) -> Result<T, RootError> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo.is_nan() || f_hi.is_nan() {
        return Err(RootError::NotANumber {
            at: if f_lo.is_nan() { lo.to_f64() } else { hi.to_f64() },
        });
    }
    let zero = T::zero();
    if f_lo == zero {
        return Ok(lo);
    }
    if f_hi == zero {
        return Ok(hi);
    }
    if (f_lo > zero) == (f_hi > zero) {
        return Err(RootError::NotBracketed {
            f_lo: f_lo.to_f64(),
            f_hi: f_hi.to_f64(),
        });
    }
    let two = T::one() + T::one();
    for _ in 0..400 {
        let mid = (lo + hi) / two;
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm.is_nan() {
            return Err(RootError::NotANumber { at: mid.to_f64() });
        }
        if fm == zero {
            return Ok(mid);
        }
        if (fm > zero) == (f_lo > zero) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) / two)
}

/// Largest point of `[lo, hi]` (to width `tol`) where the monotone
/// predicate still holds, given `pred(lo)` and `!pred(hi)`.
pub fn bisect_predicate<P: Fn(f64) -> bool>(pred: P, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Standard normal cdf.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Asymptotic Kolmogorov upper tail `P{K > t}`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 0.3 {
        // theta-function form converges fast for small arguments
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * t * t);
        let mut s = 0.0;
        for k in 0..50 {
            let j = (2 * k + 1) as f64;
            let term = (-j * j * c).exp();
            s += term;
            if term < 1e-18 {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Quantile of sorted data by linear interpolation between order statistics.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = h.floor() as usize;
    let frac = h - i as f64;
    if i + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_for_degree_23() {
        for deg in 0..=23 {
            let (v, _) = gk15(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert!((v - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}: {:e}", v - 1.0 / (deg as f64 + 1.0));
        }
    }

    #[test]
    fn gauss_rule_is_exact_for_degree_13() {
        for deg in 0..=13 {
            let (_, e) = gk15(&|x: f64| x.powi(deg), 0.0, 1.0);
            assert!(e < 1e-14, "degree {deg}: {e}");
        }
    }

    #[test]
    fn semi_infinite_integral_of_exponential() {
        let q = integrate_to_infinity(|x| (-2.0 * x).exp(), 1.0, QuadOptions::default());
        assert!((q.value - (-2.0f64).exp() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_integrates_to_one() {
        let q = integrate_real_line(normal_pdf, 0.3, QuadOptions::default());
        assert!((q.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bisection_finds_sqrt_two() {
        let r = bisect(|x: f64| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(bisect(|x: f64| x * x + 1.0, 0.0, 1.0, 1e-9), Err(RootError::NotBracketed { .. })));
    }

    #[test]
    fn kolmogorov_tail_known_points() {
        // classical critical values
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        // both series agree where they meet
        let a = kolmogorov_sf(0.2999999);
        let b = kolmogorov_sf(0.3);
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn normal_helpers_are_consistent() {
        assert!((normal_cdf(1.0) + normal_sf(1.0) - 1.0).abs() < 1e-15);
        assert!((normal_quantile(normal_cdf(0.7)) - 0.7).abs() < 1e-9);
    }
}
