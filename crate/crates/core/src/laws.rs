//! Parametric laws for the driving pair `(xi, eta)` and the derived laws
//! of `xi + log(1 + eta)` and `max(xi, log(1 + eta))`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::estimate::TailEstimate;
use crate::numerics::{
    integrate, integrate_to_infinity, normal_cdf, normal_pdf, normal_quantile, normal_sf, QuadOptions,
};
use crate::rng::{open01, replicate_fold, RandomStream};

/// A univariate law.
///
/// `Pareto` is the Lomax form with tail `(1 + x/scale)^(-index)` on `x >= 0`.
/// `LogOnePlus { base }` is the law of `e^Z - 1` with `Z ~ base`, i.e. the
/// `eta` whose `log(1 + eta)` has law `base`.
#[derive(Clone, Debug, PartialEq)]
pub enum ScalarLaw {
    Normal { mean: f64, variance: f64 },
    Exponential { rate: f64 },
    ShiftedExponential { rate: f64, shift: f64 },
    Pareto { index: f64, scale: f64 },
    Lognormal { mu: f64, sigma2: f64 },
    Weibull { shape: f64, scale: f64 },
    PointMass { value: f64 },
    Shifted { base: Box<ScalarLaw>, offset: f64 },
    LogOnePlus { base: Box<ScalarLaw> },
}

/// `(E e^{λζ}, E ζ e^{λζ}, E ζ² e^{λζ})`, with `+inf` where a moment diverges.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MgfMoments {
    pub phi: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl MgfMoments {
    const INFINITE: MgfMoments = MgfMoments {
        phi: f64::INFINITY,
        phi1: f64::INFINITY,
        phi2: f64::INFINITY,
    };

    fn scaled(self, s: f64) -> MgfMoments {
        MgfMoments {
            phi: self.phi * s,
            phi1: self.phi1 * s,
            phi2: self.phi2 * s,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(domain(field, format!("must be a finite number > 0, got {v}")))
    }
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(domain(field, format!("must be finite, got {v}")))
    }
}

const QUAD: QuadOptions = QuadOptions {
    abs_tol: 0.0,
    rel_tol: 1e-10,
    max_intervals: 10_000,
};

impl ScalarLaw {
    pub fn normal(mean: f64, variance: f64) -> Self {
        ScalarLaw::Normal { mean, variance }
    }
    pub fn exponential(rate: f64) -> Self {
        ScalarLaw::Exponential { rate }
    }
    pub fn shifted_exponential(rate: f64, shift: f64) -> Self {
        ScalarLaw::ShiftedExponential { rate, shift }
    }
    pub fn pareto(index: f64, scale: f64) -> Self {
        ScalarLaw::Pareto { index, scale }
    }
    pub fn lognormal(mu: f64, sigma2: f64) -> Self {
        ScalarLaw::Lognormal { mu, sigma2 }
    }
    pub fn weibull(shape: f64, scale: f64) -> Self {
        ScalarLaw::Weibull { shape, scale }
    }
    pub fn point(value: f64) -> Self {
        ScalarLaw::PointMass { value }
    }
    pub fn shifted(base: ScalarLaw, offset: f64) -> Self {
        ScalarLaw::Shifted {
            base: Box::new(base),
            offset,
        }
    }
    pub fn log_one_plus(base: ScalarLaw) -> Self {
        ScalarLaw::LogOnePlus { base: Box::new(base) }
    }

    /// Short lower-case variant name, as used in configuration files.
    pub fn kind(&self) -> &'static str {
        match self {
            ScalarLaw::Normal { .. } => "normal",
            ScalarLaw::Exponential { .. } => "exponential",
            ScalarLaw::ShiftedExponential { .. } => "shifted_exponential",
            ScalarLaw::Pareto { .. } => "pareto",
            ScalarLaw::Lognormal { .. } => "lognormal",
            ScalarLaw::Weibull { .. } => "weibull",
            ScalarLaw::PointMass { .. } => "point_mass",
            ScalarLaw::Shifted { .. } => "shifted",
            ScalarLaw::LogOnePlus { .. } => "log_one_plus",
        }
    }

    /// Checks parameter constraints; the error names the offending field.
    pub fn validate(&self) -> Result<()> {
        match self {
            ScalarLaw::Normal { mean, variance } => {
                finite("normal.mean", *mean)?;
                positive("normal.variance", *variance)
            }
            ScalarLaw::Exponential { rate } => positive("exponential.rate", *rate),
            ScalarLaw::ShiftedExponential { rate, shift } => {
                positive("shifted_exponential.rate", *rate)?;
                finite("shifted_exponential.shift", *shift)
            }
            ScalarLaw::Pareto { index, scale } => {
                positive("pareto.index", *index)?;
                positive("pareto.scale", *scale)
            }
            ScalarLaw::Lognormal { mu, sigma2 } => {
                finite("lognormal.mu", *mu)?;
                positive("lognormal.sigma2", *sigma2)
            }
            ScalarLaw::Weibull { shape, scale } => {
                positive("weibull.shape", *shape)?;
                positive("weibull.scale", *scale)
            }
            ScalarLaw::PointMass { value } => finite("point_mass.value", *value),
            ScalarLaw::Shifted { base, offset } => {
                finite("shifted.offset", *offset)?;
                base.validate()
            }
            ScalarLaw::LogOnePlus { base } => base.validate(),
        }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ScalarLaw::Normal { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            ScalarLaw::Exponential { rate } => {
                let e: f64 = rng.sample(Exp1);
                e / rate
            }
            ScalarLaw::ShiftedExponential { rate, shift } => {
                let e: f64 = rng.sample(Exp1);
                shift + e / rate
            }
            ScalarLaw::Pareto { index, scale } => scale * (open01(rng).powf(-1.0 / index) - 1.0),
            ScalarLaw::Lognormal { mu, sigma2 } => {
                let z: f64 = rng.sample(StandardNormal);
                (mu + sigma2.sqrt() * z).exp()
            }
            ScalarLaw::Weibull { shape, scale } => {
                let e: f64 = rng.sample(Exp1);
                scale * e.powf(1.0 / shape)
            }
            ScalarLaw::PointMass { value } => *value,
            ScalarLaw::Shifted { base, offset } => base.sample(rng) + offset,
            ScalarLaw::LogOnePlus { base } => base.sample(rng).exp_m1(),
        }
    }

    /// `P{ζ > x}`.
    pub fn tail_prob(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match self {
            ScalarLaw::Normal { mean, variance } => normal_sf((x - mean) / variance.sqrt()),
            ScalarLaw::Exponential { rate } => {
                if x < 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            ScalarLaw::ShiftedExponential { rate, shift } => {
                if x < *shift {
                    1.0
                } else {
                    (-rate * (x - shift)).exp()
                }
            }
            ScalarLaw::Pareto { index, scale } => {
                if x < 0.0 {
                    1.0
                } else {
                    (-index * (x / scale).ln_1p()).exp()
                }
            }
            ScalarLaw::Lognormal { mu, sigma2 } => {
                if x <= 0.0 {
                    1.0
                } else {
                    normal_sf((x.ln() - mu) / sigma2.sqrt())
                }
            }
            ScalarLaw::Weibull { shape, scale } => {
                if x < 0.0 {
                    1.0
                } else {
                    (-(x / scale).powf(*shape)).exp()
                }
            }
            ScalarLaw::PointMass { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            ScalarLaw::Shifted { base, offset } => base.tail_prob(x - offset),
            ScalarLaw::LogOnePlus { base } => {
                if x <= -1.0 {
                    1.0
                } else {
                    base.tail_prob(x.ln_1p())
                }
            }
        }
    }

    /// `P{ζ <= x}`. Computed directly where cancellation in `1 - tail`
    /// would lose the left tail.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ScalarLaw::Normal { mean, variance } => normal_cdf((x - mean) / variance.sqrt()),
            ScalarLaw::Lognormal { mu, sigma2 } if x > 0.0 => normal_cdf((x.ln() - mu) / sigma2.sqrt()),
            ScalarLaw::Shifted { base, offset } => base.cdf(x - offset),
            ScalarLaw::LogOnePlus { base } => {
                if x <= -1.0 {
                    0.0
                } else {
                    base.cdf(x.ln_1p())
                }
            }
            _ => 1.0 - self.tail_prob(x),
        }
    }

    /// Density, or `None` for laws with atoms.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        Some(match self {
            ScalarLaw::Normal { mean, variance } => {
                let s = variance.sqrt();
                normal_pdf((x - mean) / s) / s
            }
            ScalarLaw::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            ScalarLaw::ShiftedExponential { rate, shift } => {
                if x < *shift {
                    0.0
                } else {
                    rate * (-rate * (x - shift)).exp()
                }
            }
            ScalarLaw::Pareto { index, scale } => {
                if x < 0.0 {
                    0.0
                } else {
                    index / scale * (1.0 + x / scale).powf(-index - 1.0)
                }
            }
            ScalarLaw::Lognormal { mu, sigma2 } => {
                if x <= 0.0 {
                    0.0
                } else {
                    let s = sigma2.sqrt();
                    normal_pdf((x.ln() - mu) / s) / (s * x)
                }
            }
            ScalarLaw::Weibull { shape, scale } => {
                if x < 0.0 {
                    0.0
                } else {
                    let z = x / scale;
                    shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
                }
            }
            ScalarLaw::PointMass { .. } => return None,
            ScalarLaw::Shifted { base, offset } => return base.pdf(x - offset),
            ScalarLaw::LogOnePlus { base } => {
                if x <= -1.0 {
                    0.0
                } else {
                    return base.pdf(x.ln_1p()).map(|d| d / (1.0 + x));
                }
            }
        })
    }

    /// Smallest `x` with `P{ζ > x} <= q`.
    pub fn upper_quantile(&self, q: f64) -> f64 {
        let q = q.clamp(0.0, 1.0);
        match self {
            ScalarLaw::Normal { mean, variance } => mean - variance.sqrt() * normal_quantile(q),
            ScalarLaw::Exponential { rate } => -q.ln() / rate,
            ScalarLaw::ShiftedExponential { rate, shift } => shift - q.ln() / rate,
            ScalarLaw::Pareto { index, scale } => scale * (q.powf(-1.0 / index) - 1.0),
            ScalarLaw::Lognormal { mu, sigma2 } => (mu - sigma2.sqrt() * normal_quantile(q)).exp(),
            ScalarLaw::Weibull { shape, scale } => scale * (-q.ln()).powf(1.0 / shape),
            ScalarLaw::PointMass { value } => *value,
            ScalarLaw::Shifted { base, offset } => base.upper_quantile(q) + offset,
            ScalarLaw::LogOnePlus { base } => base.upper_quantile(q).exp_m1(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.upper_quantile(1.0 - p)
    }

    /// Infimum of the support (may be `-inf`).
    pub fn support_lower(&self) -> f64 {
        match self {
            ScalarLaw::Normal { .. } => f64::NEG_INFINITY,
            ScalarLaw::Exponential { .. }
            | ScalarLaw::Pareto { .. }
            | ScalarLaw::Lognormal { .. }
            | ScalarLaw::Weibull { .. } => 0.0,
            ScalarLaw::ShiftedExponential { shift, .. } => *shift,
            ScalarLaw::PointMass { value } => *value,
            ScalarLaw::Shifted { base, offset } => base.support_lower() + offset,
            ScalarLaw::LogOnePlus { base } => base.support_lower().exp_m1(),
        }
    }

    /// Supremum of the support (may be `+inf`).
    pub fn support_upper(&self) -> f64 {
        match self {
            ScalarLaw::PointMass { value } => *value,
            ScalarLaw::Shifted { base, offset } => base.support_upper() + offset,
            ScalarLaw::LogOnePlus { base } => base.support_upper().exp_m1(),
            _ => f64::INFINITY,
        }
    }

    /// True for laws concentrated on a lattice (here: point masses).
    pub fn is_lattice(&self) -> bool {
        match self {
            ScalarLaw::PointMass { .. } => true,
            ScalarLaw::Shifted { base, .. } | ScalarLaw::LogOnePlus { base } => base.is_lattice(),
            _ => false,
        }
    }

    /// The value of a degenerate law.
    pub fn as_point(&self) -> Option<f64> {
        match self {
            ScalarLaw::PointMass { value } => Some(*value),
            ScalarLaw::Shifted { base, offset } => base.as_point().map(|v| v + offset),
            ScalarLaw::LogOnePlus { base } => base.as_point().map(f64::exp_m1),
            _ => None,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mgf_moments(0.0).phi1
    }

    pub fn second_moment(&self) -> f64 {
        self.mgf_moments(0.0).phi2
    }

    pub fn variance(&self) -> f64 {
        let m = self.mgf_moments(0.0);
        if !m.phi2.is_finite() {
            return f64::INFINITY;
        }
        (m.phi2 - m.phi1 * m.phi1).max(0.0)
    }

    /// `min(1, ∫_x^∞ P{ζ > y} dy)`.
    pub fn integrated_tail(&self, x: f64) -> Result<f64> {
        let m = self.mean();
        if !m.is_finite() {
            return Err(domain(
                format!("{}", self.kind()),
                "integrated tail needs a finite mean",
            ));
        }
        Ok(self.integrated_tail_uncapped(x).min(1.0))
    }

    /// `∫_x^∞ P{ζ > y} dy` without the cap; closed form where available.
    pub fn integrated_tail_uncapped(&self, x: f64) -> f64 {
        match self {
            ScalarLaw::Exponential { rate } => {
                if x >= 0.0 {
                    (-rate * x).exp() / rate
                } else {
                    -x + 1.0 / rate
                }
            }
            ScalarLaw::ShiftedExponential { rate, shift } => {
                ScalarLaw::Exponential { rate: *rate }.integrated_tail_uncapped(x - shift)
            }
            ScalarLaw::Pareto { index, scale } => {
                if *index <= 1.0 {
                    f64::INFINITY
                } else if x >= 0.0 {
                    scale / (index - 1.0) * (1.0 + x / scale).powf(1.0 - index)
                } else {
                    -x + scale / (index - 1.0)
                }
            }
            ScalarLaw::Normal { mean, variance } => {
                let s = variance.sqrt();
                let z = (x - mean) / s;
                s * (normal_pdf(z) - z * normal_sf(z))
            }
            ScalarLaw::PointMass { value } => (value - x).max(0.0),
            ScalarLaw::Shifted { base, offset } => base.integrated_tail_uncapped(x - offset),
            _ => self.integrated_tail_quadrature(x),
        }
    }

    /// `∫_x^∞ P{ζ > y} dy` by adaptive quadrature regardless of variant.
    pub fn integrated_tail_quadrature(&self, x: f64) -> f64 {
        let lo = self.support_lower();
        let mut total = 0.0;
        let mut start = x;
        if lo > x {
            // tail is 1 on [x, lo)
            total += lo - x;
            start = lo;
        }
        let split = self.upper_quantile(1e-3).max(start);
        if split > start {
            total += integrate(|y| self.tail_prob(y), start, split, QUAD).value;
        }
        total + integrate_to_infinity(|y| self.tail_prob(y), split, QUAD).value
    }

    /// Exponential-moment triple at `lambda`.
    pub fn mgf_moments(&self, lambda: f64) -> MgfMoments {
        let l = lambda;
        match self {
            ScalarLaw::Normal { mean, variance } => {
                let phi = (l * mean + 0.5 * l * l * variance).exp();
                let m = mean + l * variance;
                MgfMoments {
                    phi,
                    phi1: phi * m,
                    phi2: phi * (m * m + variance),
                }
            }
            ScalarLaw::Exponential { rate } => {
                if l >= *rate {
                    return MgfMoments::INFINITE;
                }
                let d = rate - l;
                MgfMoments {
                    phi: rate / d,
                    phi1: rate / (d * d),
                    phi2: 2.0 * rate / (d * d * d),
                }
            }
            ScalarLaw::ShiftedExponential { rate, shift } => {
                shift_moments(ScalarLaw::Exponential { rate: *rate }.mgf_moments(l), *shift, l)
            }
            ScalarLaw::PointMass { value } => {
                let phi = (l * value).exp();
                MgfMoments {
                    phi,
                    phi1: phi * value,
                    phi2: phi * value * value,
                }
            }
            ScalarLaw::Shifted { base, offset } => shift_moments(base.mgf_moments(l), *offset, l),
            ScalarLaw::Pareto { index, scale } => {
                if l > 0.0 {
                    MgfMoments::INFINITE
                } else if l == 0.0 {
                    let m1 = if *index > 1.0 {
                        scale / (index - 1.0)
                    } else {
                        f64::INFINITY
                    };
                    let m2 = if *index > 2.0 {
                        2.0 * scale * scale / ((index - 1.0) * (index - 2.0))
                    } else {
                        f64::INFINITY
                    };
                    MgfMoments {
                        phi: 1.0,
                        phi1: m1,
                        phi2: m2,
                    }
                } else {
                    self.mgf_quadrature(l)
                }
            }
            ScalarLaw::Lognormal { mu, sigma2 } => {
                if l > 0.0 {
                    MgfMoments::INFINITE
                } else if l == 0.0 {
                    MgfMoments {
                        phi: 1.0,
                        phi1: (mu + 0.5 * sigma2).exp(),
                        phi2: (2.0 * mu + 2.0 * sigma2).exp(),
                    }
                } else {
                    self.mgf_quadrature(l)
                }
            }
            ScalarLaw::Weibull { shape, scale } => {
                if *shape == 1.0 {
                    ScalarLaw::Exponential { rate: 1.0 / scale }.mgf_moments(l)
                } else if l == 0.0 {
                    MgfMoments {
                        phi: 1.0,
                        phi1: scale * gamma(1.0 + 1.0 / shape),
                        phi2: scale * scale * gamma(1.0 + 2.0 / shape),
                    }
                } else if l > 0.0 && *shape < 1.0 {
                    MgfMoments::INFINITE
                } else {
                    self.mgf_quadrature(l)
                }
            }
            ScalarLaw::LogOnePlus { base } => {
                if let Some(v) = self.as_point() {
                    return ScalarLaw::PointMass { value: v }.mgf_moments(l);
                }
                if l == 0.0 {
                    let p1 = base.mgf_moments(1.0).phi;
                    let p2 = base.mgf_moments(2.0).phi;
                    MgfMoments {
                        phi: 1.0,
                        phi1: p1 - 1.0,
                        phi2: p2 - 2.0 * p1 + 1.0,
                    }
                } else if l > 0.0 && base.support_upper().is_infinite() {
                    MgfMoments::INFINITE
                } else {
                    self.mgf_quadrature(l)
                }
            }
        }
    }

    fn mgf_quadrature(&self, l: f64) -> MgfMoments {
        let moment = |k: i32| {
            let v = expect(self, |x| x.powi(k) * (l * x).exp(), &[]);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        MgfMoments {
            phi: moment(0),
            phi1: moment(1),
            phi2: moment(2),
        }
    }
}

fn shift_moments(b: MgfMoments, c: f64, l: f64) -> MgfMoments {
    if !b.phi.is_finite() {
        return MgfMoments::INFINITE;
    }
    MgfMoments {
        phi: b.phi,
        phi1: c * b.phi + b.phi1,
        phi2: c * c * b.phi + 2.0 * c * b.phi1 + b.phi2,
    }
    .scaled((l * c).exp())
}

/// `E g(ζ)` for a law with a density, by quadrature over quantile-based
/// segments; extra breakpoints mark kinks of `g`. Point masses are exact.
pub fn expect<G: Fn(f64) -> f64>(law: &ScalarLaw, g: G, breaks: &[f64]) -> f64 {
    if let Some(v) = law.as_point() {
        return g(v);
    }
    let pdf = |x: f64| {
        let d = law.pdf(x).unwrap_or(0.0);
        if d == 0.0 {
            0.0
        } else {
            g(x) * d
        }
    };
    let lo = law.support_lower();
    let hi = law.support_upper();
    let mut pts: Vec<f64> = [1e-14, 1e-9, 1e-5, 1e-3, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.98, 0.999, 1.0 - 1e-5, 1.0 - 1e-9]
        .iter()
        .map(|&q| law.upper_quantile(q))
        .chain(breaks.iter().copied())
        .filter(|x| x.is_finite() && *x > lo && *x < hi)
        .collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.is_empty() {
        pts.push(if lo.is_finite() { lo + 1.0 } else { 0.0 });
    }
    let first = pts[0];
    let last = pts[pts.len() - 1];
    let mut total = 0.0;
    total += if lo.is_finite() {
        integrate(pdf, lo, first, QUAD).value
    } else {
        integrate_to_infinity(|y| pdf(2.0 * first - y), first, QUAD).value
    };
    for w in pts.windows(2) {
        total += integrate(pdf, w[0], w[1], QUAD).value;
    }
    total += integrate_to_infinity(pdf, last, QUAD).value;
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BetaKind {
    /// `φ(β) = 1` with `β > 0`.
    Root,
    /// `φ <= 1` up to the point where it diverges; `β` is that point.
    Boundary,
    /// `φ > 1` or `+inf` for every `λ > 0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaSup {
    pub value: f64,
    pub kind: BetaKind,
}

/// `sup{λ >= 0 : E e^{λξ} <= 1}`.
pub fn beta_sup(law: &ScalarLaw) -> Result<BetaSup> {
    if law.tail_prob(0.0) <= 0.0 {
        return Err(domain("xi", "beta needs P{xi > 0} > 0"));
    }
    let phi = |l: f64| law.mgf_moments(l).phi;
    let ok = |l: f64| {
        let p = phi(l);
        p.is_finite() && p <= 1.0
    };
    let mut lo = 0.0;
    let mut hi = 1e-6;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Ok(BetaSup {
                value: f64::INFINITY,
                kind: BetaKind::Boundary,
            });
        }
    }
    if lo == 0.0 && !ok(1e-12) {
        return Ok(BetaSup {
            value: 0.0,
            kind: BetaKind::Zero,
        });
    }
    let hi_finite = phi(hi).is_finite();
    let mut b = crate::numerics::bisect_predicate(ok, lo, hi, 1e-13 * hi.max(1.0));
    let mut kind = BetaKind::Boundary;
    // the bracket closes on a crossing if phi is finite just above it
    if hi_finite || phi(b + 1e-9 * b.max(1.0)).is_finite() {
        kind = BetaKind::Root;
        for _ in 0..4 {
            let m = law.mgf_moments(b);
            if !(m.phi.is_finite() && m.phi1.is_finite()) || m.phi1 <= 0.0 {
                break;
            }
            let step = (m.phi - 1.0) / m.phi1;
            if !step.is_finite() || step.abs() > 1e-6 * b.max(1.0) {
                break;
            }
            b -= step;
        }
    }
    if b <= 0.0 {
        return Ok(BetaSup {
            value: 0.0,
            kind: BetaKind::Zero,
        });
    }
    Ok(BetaSup { value: b, kind })
}

/// Finite table of equally or unequally weighted pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    xi: Vec<f64>,
    eta: Vec<f64>,
    weight: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PairTable {
    /// Equal weights.
    pub fn uniform(pairs: &[(f64, f64)]) -> Result<Self> {
        let w = vec![1.0; pairs.len()];
        Self::weighted(pairs, &w)
    }

    pub fn weighted(pairs: &[(f64, f64)], weights: &[f64]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(domain("custom.pairs", "table is empty"));
        }
        if pairs.len() != weights.len() {
            return Err(domain("custom.weights", "one weight per pair is required"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(domain("custom.weights", "weights must be finite and >= 0"));
        }
        if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(domain("custom.pairs", "pairs must be finite"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(domain("custom.weights", "total weight must be > 0"));
        }
        let weight: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = weight
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            xi: pairs.iter().map(|p| p.0).collect(),
            eta: pairs.iter().map(|p| p.1).collect(),
            weight,
            cumulative,
        })
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.len()).map(move |i| (self.xi[i], self.eta[i], self.weight[i]))
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u = open01(rng);
        let i = self.cumulative.partition_point(|&c| c < u).min(self.len() - 1);
        (self.xi[i], self.eta[i])
    }

    pub fn expect(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        self.iter().map(|(x, e, w)| w * g(x, e)).sum()
    }
}

/// Law of the driving pair.
#[derive(Clone, Debug, PartialEq)]
pub enum JointLaw {
    Independent { xi: ScalarLaw, eta: ScalarLaw },
    /// `xi = log(1 + eta) + shift`.
    Comonotone { eta: ScalarLaw, shift: f64 },
    Custom(PairTable),
}

/// Which functional of `(xi, log(1 + eta))` a derived law describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    /// `xi + log(1 + eta)`, the law `H`.
    Sum,
    /// `max(xi, log(1 + eta))`, the law `H~`.
    Max,
}

impl Combine {
    #[inline]
    pub fn apply(self, xi: f64, eta: f64) -> f64 {
        match self {
            Combine::Sum => xi + eta.ln_1p(),
            Combine::Max => xi.max(eta.ln_1p()),
        }
    }
}

impl JointLaw {
    pub fn independent(xi: ScalarLaw, eta: ScalarLaw) -> Self {
        JointLaw::Independent { xi, eta }
    }

    pub fn comonotone(eta: ScalarLaw, shift: f64) -> Self {
        JointLaw::Comonotone { eta, shift }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            JointLaw::Independent { xi, eta } => {
                xi.validate().map_err(|e| prefix("xi", e))?;
                eta.validate().map_err(|e| prefix("eta", e))
            }
            JointLaw::Comonotone { eta, shift } => {
                eta.validate().map_err(|e| prefix("eta", e))?;
                finite("shift", *shift)?;
                if eta.cdf(-1.0) > 0.0 || eta.support_lower() < -1.0 {
                    return Err(domain("eta", "comonotone coupling needs eta > -1 almost surely"));
                }
                Ok(())
            }
            JointLaw::Custom(_) => Ok(()),
        }
    }

    #[inline]
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            JointLaw::Independent { xi, eta } => {
                let x = xi.sample(rng);
                (x, eta.sample(rng))
            }
            JointLaw::Comonotone { eta, shift } => {
                let e = eta.sample(rng);
                (e.ln_1p() + shift, e)
            }
            JointLaw::Custom(t) => t.sample(rng),
        }
    }

    /// The law of `xi` when it is one of the parametric variants.
    pub fn xi_marginal(&self) -> Option<ScalarLaw> {
        match self {
            JointLaw::Independent { xi, .. } => Some(xi.clone()),
            JointLaw::Comonotone { eta, shift } => match eta {
                ScalarLaw::LogOnePlus { base } => Some(ScalarLaw::shifted((**base).clone(), *shift)),
                _ => eta.as_point().map(|v| ScalarLaw::point(v.ln_1p() + shift)),
            },
            JointLaw::Custom(_) => None,
        }
    }

    /// `E xi`.
    pub fn xi_mean(&self) -> f64 {
        match self {
            JointLaw::Independent { xi, .. } => xi.mean(),
            JointLaw::Comonotone { eta, shift } => log1p_moment(eta, 1) + shift,
            JointLaw::Custom(t) => t.expect(|x, _| x),
        }
    }

    /// `Var xi`.
    pub fn xi_variance(&self) -> f64 {
        match self {
            JointLaw::Independent { xi, .. } => xi.variance(),
            JointLaw::Comonotone { eta, .. } => {
                let m = log1p_moment(eta, 1);
                (log1p_moment(eta, 2) - m * m).max(0.0)
            }
            JointLaw::Custom(t) => {
                let m = t.expect(|x, _| x);
                t.expect(|x, _| (x - m) * (x - m))
            }
        }
    }

    /// `E e^{λ xi}` triple.
    pub fn xi_mgf(&self, lambda: f64) -> MgfMoments {
        match self.xi_marginal() {
            Some(l) => l.mgf_moments(lambda),
            None => match self {
                JointLaw::Custom(t) => MgfMoments {
                    phi: t.expect(|x, _| (lambda * x).exp()),
                    phi1: t.expect(|x, _| x * (lambda * x).exp()),
                    phi2: t.expect(|x, _| x * x * (lambda * x).exp()),
                },
                JointLaw::Comonotone { eta, shift } => {
                    let g = |k: i32| expect(eta, |e| (e.ln_1p() + shift).powi(k) * (lambda * (e.ln_1p() + shift)).exp(), &[]);
                    MgfMoments {
                        phi: g(0),
                        phi1: g(1),
                        phi2: g(2),
                    }
                }
                JointLaw::Independent { .. } => unreachable!("independent laws carry their xi marginal"),
            },
        }
    }

    /// `E log²(1 + eta)`, possibly infinite.
    pub fn log1p_eta_second_moment(&self) -> f64 {
        match self {
            JointLaw::Independent { eta, .. } | JointLaw::Comonotone { eta, .. } => log1p_moment(eta, 2),
            JointLaw::Custom(t) => t.expect(|_, e| e.ln_1p().powi(2)),
        }
    }

    /// True when `eta > 0` almost surely.
    pub fn eta_positive(&self) -> bool {
        match self {
            JointLaw::Independent { eta, .. } | JointLaw::Comonotone { eta, .. } => eta.tail_prob(0.0) >= 1.0,
            JointLaw::Custom(t) => t.iter().all(|(_, e, w)| e > 0.0 || w == 0.0),
        }
    }

    /// Essential infimum of `eta`.
    pub fn eta_lower(&self) -> f64 {
        match self {
            JointLaw::Independent { eta, .. } | JointLaw::Comonotone { eta, .. } => eta.support_lower(),
            JointLaw::Custom(t) => t.iter().filter(|p| p.2 > 0.0).map(|p| p.1).fold(f64::INFINITY, f64::min),
        }
    }

    /// True when `eta = 0` almost surely.
    pub fn eta_is_zero(&self) -> bool {
        match self {
            JointLaw::Independent { eta, .. } | JointLaw::Comonotone { eta, .. } => eta.as_point() == Some(0.0),
            JointLaw::Custom(t) => t.iter().all(|(_, e, w)| e == 0.0 || w == 0.0),
        }
    }

    /// True when `xi` is concentrated on a lattice.
    pub fn xi_is_lattice(&self) -> bool {
        match self {
            JointLaw::Independent { xi, .. } => xi.is_lattice(),
            JointLaw::Comonotone { eta, .. } => eta.is_lattice(),
            JointLaw::Custom(_) => true,
        }
    }

    /// Smallest `y` with `P{|eta| > y} <= q`.
    pub fn eta_abs_upper_quantile(&self, q: f64) -> f64 {
        match self {
            JointLaw::Independent { eta, .. } | JointLaw::Comonotone { eta, .. } => {
                if let Some(v) = eta.as_point() {
                    return v.abs();
                }
                if eta.support_lower() >= 0.0 {
                    return eta.upper_quantile(q).max(0.0);
                }
                let abs_tail = |y: f64| eta.tail_prob(y) + eta.cdf(-y);
                let mut hi = 1.0;
                while abs_tail(hi) > q {
                    hi *= 2.0;
                    if hi > 1e300 {
                        return f64::INFINITY;
                    }
                }
                crate::numerics::bisect_predicate(|y| abs_tail(y) > q, 0.0, hi, 1e-12 * hi)
            }
            JointLaw::Custom(t) => {
                let mut v: Vec<(f64, f64)> = t.iter().map(|(_, e, w)| (e.abs(), w)).collect();
                v.sort_by(|a, b| b.0.total_cmp(&a.0));
                let mut acc = 0.0;
                for (a, w) in v {
                    acc += w;
                    if acc > q {
                        return a;
                    }
                }
                0.0
            }
        }
    }

    /// Exact `P{combine(xi, eta) > t}` when the pair admits it.
    pub fn derived_tail_exact(&self, kind: Combine, t: f64) -> Option<f64> {
        match self {
            JointLaw::Custom(tab) => Some(tab.expect(|x, e| (kind.apply(x, e) > t) as u8 as f64)),
            JointLaw::Comonotone { eta, shift } => {
                // both functionals are increasing in Z = log(1 + eta)
                let z_level = match kind {
                    Combine::Sum => 0.5 * (t - shift),
                    Combine::Max => t - shift.max(0.0),
                };
                Some(log1p_tail(eta, z_level))
            }
            JointLaw::Independent { xi, eta } => {
                let g_tail = |s: f64| log1p_tail(eta, s);
                match kind {
                    Combine::Max => {
                        let g_cdf = 1.0 - g_tail(t);
                        Some(1.0 - xi.cdf(t) * g_cdf)
                    }
                    Combine::Sum => {
                        if let Some(v) = xi.as_point() {
                            return Some(g_tail(t - v));
                        }
                        if let Some(e) = eta.as_point() {
                            return Some(xi.tail_prob(t - e.ln_1p()));
                        }
                        xi.pdf(0.0)?;
                        // P{xi + Z > t} = E G_bar(t - xi); G_bar has a kink where t - xi = log(1 + inf eta)
                        let kink = t - eta.support_lower().max(-1.0).ln_1p();
                        Some(expect(xi, |u| g_tail(t - u), &[kink]).clamp(0.0, 1.0))
                    }
                }
            }
        }
    }
}

fn prefix(side: &str, e: crate::error::Error) -> crate::error::Error {
    match e {
        crate::error::Error::Domain { field, reason } => crate::error::Error::Domain {
            field: format!("{side}.{field}"),
            reason,
        },
        other => other,
    }
}

/// `P{log(1 + eta) > s}`, without overflowing `e^s` when `eta` is given
/// through its logarithm.
fn log1p_tail(eta: &ScalarLaw, s: f64) -> f64 {
    match eta {
        ScalarLaw::LogOnePlus { base } => base.tail_prob(s),
        _ => eta.tail_prob(s.exp_m1()),
    }
}

/// `E log^k(1 + eta)`.
fn log1p_moment(eta: &ScalarLaw, k: i32) -> f64 {
    if let ScalarLaw::LogOnePlus { base } = eta {
        let m = base.mgf_moments(0.0);
        return if k == 1 { m.phi1 } else { m.phi2 };
    }
    if let Some(v) = eta.as_point() {
        return v.ln_1p().powi(k);
    }
    let v = expect(eta, |e| e.ln_1p().powi(k), &[]);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

fn require_positive_eta(joint: &JointLaw) -> Result<()> {
    if joint.eta_positive() {
        Ok(())
    } else {
        Err(domain("eta", "law must satisfy eta > 0 almost surely"))
    }
}

/// Crude Monte Carlo estimate of `P{combine(xi, eta) > t}`.
pub fn derived_tail_monte_carlo(joint: &JointLaw, kind: Combine, t: f64, n_mc: u64, stream: &RandomStream) -> TailEstimate {
    let hits = replicate_fold(
        n_mc,
        stream,
        || 0u64,
        |h, rng, _| {
            let (x, e) = joint.sample_pair(rng);
            if kind.apply(x, e) > t {
                *h += 1;
            }
        },
        |a, b| a + b,
    );
    TailEstimate::from_counts(t, hits, n_mc)
}

/// `P{xi + log(1 + eta) > t}`: exact when the pair admits it, crude Monte
/// Carlo otherwise.
pub fn h_tail(joint: &JointLaw, t: f64, n_mc: u64, stream: &RandomStream) -> Result<TailEstimate> {
    require_positive_eta(joint)?;
    Ok(match joint.derived_tail_exact(Combine::Sum, t) {
        Some(p) => TailEstimate::exact(t, p),
        None => derived_tail_monte_carlo(joint, Combine::Sum, t, n_mc, stream),
    })
}

/// `P{max(xi, log(1 + eta)) > t}`, as [`h_tail`].
pub fn h_tilde_tail(joint: &JointLaw, t: f64, n_mc: u64, stream: &RandomStream) -> Result<TailEstimate> {
    require_positive_eta(joint)?;
    Ok(match joint.derived_tail_exact(Combine::Max, t) {
        Some(p) => TailEstimate::exact(t, p),
        None => derived_tail_monte_carlo(joint, Combine::Max, t, n_mc, stream),
    })
}

/// The law `H` (or `H~`) either evaluated analytically or materialised as
/// a sorted sample.
#[derive(Clone, Debug)]
pub enum DerivedLaw {
    Analytic { joint: JointLaw, kind: Combine },
    Empirical { sorted: Vec<f64> },
}

impl DerivedLaw {
    /// Analytic when the pair admits exact tails, otherwise an empirical
    /// law from `n_mc` draws.
    pub fn new(joint: &JointLaw, kind: Combine, n_mc: u64, stream: &RandomStream) -> Result<Self> {
        require_positive_eta(joint)?;
        if joint.derived_tail_exact(kind, 0.0).is_some() {
            return Ok(DerivedLaw::Analytic {
                joint: joint.clone(),
                kind,
            });
        }
        Ok(Self::empirical(joint, kind, n_mc, stream))
    }

    pub fn empirical(joint: &JointLaw, kind: Combine, n_mc: u64, stream: &RandomStream) -> Self {
        let mut sorted = crate::rng::replicate_map(n_mc, stream, |rng, _| {
            let (x, e) = joint.sample_pair(rng);
            kind.apply(x, e)
        });
        sorted.sort_by(f64::total_cmp);
        DerivedLaw::Empirical { sorted }
    }

    pub fn tail(&self, t: f64) -> f64 {
        match self {
            DerivedLaw::Analytic { joint, kind } => joint.derived_tail_exact(*kind, t).unwrap_or(f64::NAN),
            DerivedLaw::Empirical { sorted } => {
                let above = sorted.len() - sorted.partition_point(|&v| v <= t);
                above as f64 / sorted.len() as f64
            }
        }
    }

    /// `∫_a^b P{ζ > y} dy` (b may be `+inf`).
    pub fn tail_integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self {
            DerivedLaw::Empirical { sorted } => {
                // ∫_a^b #{z > y}/N dy = mean of (min(z, b) - a)^+
                let start = sorted.partition_point(|&v| v <= a);
                let s: f64 = sorted[start..].iter().map(|&z| z.min(b) - a).sum();
                s / sorted.len() as f64
            }
            DerivedLaw::Analytic { .. } => {
                let f = |y: f64| self.tail(y);
                let opts = QuadOptions {
                    abs_tol: 0.0,
                    rel_tol: 1e-9,
                    max_intervals: 10_000,
                };
                if b.is_finite() {
                    integrate(f, a, b, opts).value
                } else {
                    integrate_to_infinity(f, a, opts).value
                }
            }
        }
    }

    /// `min(1, ∫_t^∞ P{ζ > y} dy)`.
    pub fn integrated_tail(&self, t: f64) -> f64 {
        self.tail_integral(t, f64::INFINITY).min(1.0)
    }
}
