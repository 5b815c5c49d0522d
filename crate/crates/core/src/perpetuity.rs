//! Perpetuity recursions, the conjugation map `f`, the associated chain and
//! the dual maximum chain.

use crate::error::{domain, Result};
use crate::laws::JointLaw;
use crate::real::Real;
use crate::rng::RandomStream;

/// One path of length `n`. Index `k - 1` holds the quantities at time `k`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory<T> {
    pub xi: Vec<T>,
    pub eta: Vec<T>,
    pub s: Vec<T>,
    pub d: Vec<T>,
    pub d_tilde: Vec<T>,
    pub m: Vec<T>,
    pub m_tilde: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    /// Runs the recursions over a fixed driver sequence.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let n = pairs.len();
        let mut t = Trajectory {
            xi: Vec::with_capacity(n),
            eta: Vec::with_capacity(n),
            s: Vec::with_capacity(n),
            d: Vec::with_capacity(n),
            d_tilde: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
            m_tilde: Vec::with_capacity(n),
        };
        for &(x, e) in pairs {
            t.push(T::from_f64(x), T::from_f64(e));
        }
        t
    }

    /// Appends step `n + 1`.
    pub fn push(&mut self, xi: T, eta: T) {
        let (s_prev, d_prev, dt_prev) = match self.s.last() {
            Some(&s) => (s, *self.d.last().unwrap(), *self.d_tilde.last().unwrap()),
            None => (T::zero(), T::zero(), T::zero()),
        };
        let s = s_prev + xi;
        let d = d_prev + eta * s.exp();
        let dt = dt_prev + eta * s_prev.exp();
        let (m, mt) = match (self.m.last(), self.m_tilde.last()) {
            (Some(&m), Some(&mt)) => (m.max(d), mt.max(dt)),
            _ => (d, dt),
        };
        self.xi.push(xi);
        self.eta.push(eta);
        self.s.push(s);
        self.d.push(d);
        self.d_tilde.push(dt);
        self.m.push(m);
        self.m_tilde.push(mt);
    }

    pub fn n(&self) -> usize {
        self.xi.len()
    }
}

/// Simulates `n` steps from one stream of i.i.d. pairs.
pub fn simulate_path<T: Real>(joint: &JointLaw, n: usize, stream: &mut RandomStream) -> Result<Trajectory<T>> {
    if n == 0 {
        return Err(domain("n", "path length must be >= 1"));
    }
    let pairs: Vec<(f64, f64)> = (0..n).map(|_| joint.sample_pair(stream)).collect();
    Ok(Trajectory::from_pairs(&pairs))
}

/// `D_n` (or `D~_n`) of one fresh path, without storing it.
pub fn simulate_d_n(joint: &JointLaw, series: Series, n: usize, rng: &mut RandomStream) -> f64 {
    let mut s = 0.0f64;
    let mut e_prev = 1.0f64;
    let mut d = 0.0f64;
    for _ in 0..n {
        let (x, eta) = joint.sample_pair(rng);
        s += x;
        let e_s = s.exp();
        d += match series {
            Series::D => eta * e_s,
            Series::DTilde => eta * e_prev,
        };
        e_prev = e_s;
    }
    d
}

/// `log x` for `x >= e`, `-log|x|` for `x <= -e`, `x / e` in between.
#[inline]
pub fn f_map<T: Real>(x: T) -> T {
    let e = T::e();
    if x >= e {
        x.ln()
    } else if x <= -e {
        -(-x).ln()
    } else {
        x / e
    }
}

/// Inverse of [`f_map`].
#[inline]
pub fn f_inv<T: Real>(y: T) -> T {
    let one = T::one();
    if y >= one {
        y.exp()
    } else if y <= -one {
        -(-y).exp()
    } else {
        y * T::e()
    }
}

/// Jump of the associated chain from `y`: `f(η e^ξ + e^ξ f⁻¹(y)) − y`.
#[inline]
pub fn jump_field<T: Real>(y: T, xi: T, eta: T) -> T {
    let a = xi.exp();
    f_map(eta * a + a * f_inv(y)) - y
}

/// [`jump_field`] in `f64`, evaluated on the branch `y >= 1`,
/// `e^ξ(η + e^y) >= e` as `ξ + log(1 + η e^{-y})`. This is the same value
/// without the cancellation in `log(e^ξ(η + e^y)) − y` or overflow of `e^y`.
#[inline]
pub fn jump_field_stable(y: f64, xi: f64, eta: f64) -> f64 {
    if y >= 1.0 {
        let t = eta * (-y).exp();
        if t > -1.0 && xi + y + t.ln_1p() >= 1.0 {
            return xi + t.ln_1p();
        }
    }
    jump_field(y, xi, eta)
}

/// `X_{n+1} = X_n + ξ(X_n)`.
#[inline]
pub fn step_associated<T: Real>(x: T, (xi, eta): (T, T)) -> T {
    x + jump_field(x, xi, eta)
}

/// `R_n = η + e^ξ R_{n−1}`.
#[inline]
pub fn step_affine<T: Real>(r: T, (xi, eta): (T, T)) -> T {
    eta + xi.exp() * r
}

/// `M*_n = e^ξ (M*_{n−1} + η)^+`.
#[inline]
pub fn step_dual_max<T: Real>(m: T, (xi, eta): (T, T)) -> Result<T> {
    if m < T::zero() {
        return Err(domain("m", format!("dual maximum must be >= 0, got {m}")));
    }
    Ok(xi.exp() * (m + eta).max(T::zero()))
}

/// `W_n = max(W_{n−1} + ξ, 0)`.
#[inline]
pub fn step_delayed_walk<T: Real>(w: T, xi: T) -> T {
    debug_assert!(w >= T::zero());
    (w + xi).max(T::zero())
}

/// `X_1, …, X_n` of the associated chain started at `X_1 = f(η₁ e^{ξ₁})`.
pub fn associated_chain<T: Real>(pairs: &[(f64, f64)]) -> Vec<T> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut it = pairs.iter().map(|&(x, e)| (T::from_f64(x), T::from_f64(e)));
    if let Some((x1, e1)) = it.next() {
        let mut x = f_map(e1 * x1.exp());
        out.push(x);
        for p in it {
            x = step_associated(x, p);
            out.push(x);
        }
    }
    out
}

/// Which of the two series a sampler sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Series {
    /// `D = Σ η_k e^{S_k}`.
    D,
    /// `D~ = Σ η_k e^{S_{k−1}}`.
    DTilde,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DInfConfig {
    /// Relative tolerance for the residual bound.
    pub tol: f64,
    pub n_cap: usize,
    /// Upper-tail probability defining the `|η|` quantile in the bound.
    pub eta_tail: f64,
}

impl Default for DInfConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            n_cap: 100_000,
            eta_tail: 1e-3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DInfSample {
    pub value: f64,
    pub terms_used: usize,
    pub converged: bool,
    pub residual_bound: f64,
}

/// Draws truncated `D_∞` (or `D~_∞`) samples.
///
/// Stops at the first `n` with
/// `e^{S_n} q |η| / (1 − e^{−a/2}) < tol · max(1, |D_n|)`, where `a = −Eξ`
/// and `q` is the `1 − eta_tail` quantile of `|η|`. The bound is
/// probabilistic; `converged` only reports that it was met.
#[derive(Clone, Debug)]
pub struct DInfSampler {
    joint: JointLaw,
    series: Series,
    cfg: DInfConfig,
    log_qk: f64,
    ln_tol: f64,
}

impl DInfSampler {
    pub fn new(joint: &JointLaw, series: Series, cfg: DInfConfig) -> Result<Self> {
        let mean = joint.xi_mean();
        if !(mean < 0.0) {
            return Err(domain("xi", format!("perpetuity needs E xi < 0, got {mean}")));
        }
        Self::with_drift(joint, series, cfg, -mean)
    }

    /// As [`DInfSampler::new`] with the drift `a = −Eξ > 0` supplied by the
    /// caller.
    pub fn with_drift(joint: &JointLaw, series: Series, cfg: DInfConfig, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(domain("xi", format!("perpetuity needs E xi < 0, got drift {}", -a)));
        }
        if !(cfg.tol > 0.0) {
            return Err(domain("tol", "must be > 0"));
        }
        if cfg.n_cap == 0 {
            return Err(domain("n_cap", "must be >= 1"));
        }
        if !(cfg.eta_tail > 0.0 && cfg.eta_tail < 1.0) {
            return Err(domain("eta_tail", "must lie in (0, 1)"));
        }
        let q = joint.eta_abs_upper_quantile(cfg.eta_tail);
        let log_k = -(-(-0.5 * a).exp_m1()).ln();
        Ok(Self {
            joint: joint.clone(),
            series,
            cfg,
            log_qk: q.ln() + log_k,
            ln_tol: cfg.tol.ln(),
        })
    }

    pub fn config(&self) -> DInfConfig {
        self.cfg
    }

    pub fn sample(&self, rng: &mut RandomStream) -> DInfSample {
        let mut s = 0.0f64;
        let mut e_prev = 1.0f64;
        let mut d = 0.0f64;
        let mut log_bound = f64::INFINITY;
        for n in 1..=self.cfg.n_cap {
            let (x, eta) = self.joint.sample_pair(rng);
            s += x;
            let e_s = s.exp();
            d += match self.series {
                Series::D => eta * e_s,
                Series::DTilde => eta * e_prev,
            };
            e_prev = e_s;
            log_bound = s + self.log_qk;
            if log_bound < self.ln_tol || log_bound < self.ln_tol + d.abs().max(1.0).ln() {
                return DInfSample {
                    value: d,
                    terms_used: n,
                    converged: true,
                    residual_bound: log_bound.exp(),
                };
            }
        }
        DInfSample {
            value: d,
            terms_used: self.cfg.n_cap,
            converged: false,
            residual_bound: log_bound.exp(),
        }
    }
}

/// One truncated sample of `D_∞`.
pub fn simulate_d_infinity(joint: &JointLaw, tol: f64, n_cap: usize, stream: &mut RandomStream) -> Result<DInfSample> {
    let cfg = DInfConfig {
        tol,
        n_cap,
        ..DInfConfig::default()
    };
    Ok(DInfSampler::new(joint, Series::D, cfg)?.sample(stream))
}

/// `n_mc` samples of `D_∞` or `D~_∞`, replication `r` on `stream.child(r)`.
pub fn d_infinity_pool(sampler: &DInfSampler, n_mc: u64, stream: &RandomStream) -> Vec<DInfSample> {
    crate::rng::replicate_map(n_mc, stream, |rng, _| sampler.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd::DoubleDouble;
    use crate::laws::ScalarLaw;
    use std::f64::consts::E;

    fn pm(x: f64, e: f64) -> JointLaw {
        JointLaw::independent(ScalarLaw::point(x), ScalarLaw::point(e))
    }

    #[test]
    fn deterministic_paths() {
        let mut rng = RandomStream::new(0, 0);
        let t: Trajectory<f64> = simulate_path(&pm(-1.0, 1.0), 2, &mut rng).unwrap();
        let d2 = (-1.0f64).exp() + (-2.0f64).exp();
        assert!((t.d[1] - d2).abs() < 1e-15);
        assert!((t.d_tilde[1] - (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        assert!((t.m[1] - d2).abs() < 1e-15);
        let flat: Trajectory<f64> = simulate_path(&pm(0.0, 1.0), 5, &mut rng).unwrap();
        assert_eq!(flat.d[4], 5.0);
        assert!(simulate_path::<f64>(&pm(0.0, 1.0), 0, &mut rng).is_err());
    }

    #[test]
    fn map_reference_points() {
        assert_eq!(f_map(E), 1.0);
        assert_eq!(f_map(0.0), 0.0);
        assert!((f_map(-E * E) + 2.0).abs() < 1e-15);
        assert_eq!(f_inv(1.0), E);
        assert!((f_inv(-2.0) + E * E).abs() < 1e-14);
    }

    #[test]
    fn jump_field_reference_points() {
        assert!((jump_field(2.0, 0.5, 0.0) - 0.5).abs() < 1e-15);
        let e3 = 3.0f64.exp() - 2.0f64.exp();
        assert!((jump_field(2.0, 0.0, e3) - 1.0).abs() < 1e-14);
        assert_eq!(step_associated(0.0, (0.0, 0.0)), 0.0);
    }

    #[test]
    fn small_steps() {
        assert_eq!(step_affine(0.0, (123.0, 3.0)), 3.0);
        assert_eq!(step_dual_max(0.0, (0.0, -1.0)).unwrap(), 0.0);
        assert!((step_dual_max(1.0, (2f64.ln(), 1.0)).unwrap() - 4.0).abs() < 1e-15);
        assert!(step_dual_max(-1.0, (0.0, 1.0)).is_err());
        assert_eq!(step_delayed_walk(0.0, -3.0), 0.0);
        assert_eq!(step_delayed_walk(2.0, 1.0), 3.0);
    }

    #[test]
    fn geometric_perpetuity() {
        let mut rng = RandomStream::new(0, 0);
        let s = simulate_d_infinity(&pm(-1.0, 1.0), 1e-12, 100_000, &mut rng).unwrap();
        assert!(s.converged);
        assert!((s.value - 1.0 / (E - 1.0)).abs() < 1e-12);
        assert!(s.residual_bound <= 1e-12 * s.value.max(1.0));
        let z = simulate_d_infinity(&pm(-1.0, 0.0), 1e-12, 100_000, &mut rng).unwrap();
        assert_eq!((z.value, z.terms_used, z.converged), (0.0, 1, true));
        assert!(simulate_d_infinity(&pm(0.5, 1.0), 1e-12, 10, &mut rng).is_err());
    }

    #[test]
    fn associated_chain_tracks_conjugated_perpetuity() {
        // X_n = f(Σ η_k e^{ξ_k + … + ξ_n}), the time-reversed perpetuity
        let pairs = [(-0.3, 2.0), (0.7, 0.5), (-1.2, 4.0), (0.1, 1.5)];
        let x: Vec<DoubleDouble> = associated_chain(&pairs);
        let mut r = DoubleDouble::from_f64(0.0);
        for (k, &(xi, eta)) in pairs.iter().enumerate() {
            r = DoubleDouble::from_f64(xi).exp() * (r + DoubleDouble::from_f64(eta));
            assert!((f_inv(x[k]) - r).abs().to_f64() < 1e-28 * r.to_f64());
        }
    }

    #[test]
    fn tilde_sampler_matches_geometric_sum() {
        let mut rng = RandomStream::new(0, 0);
        let s = DInfSampler::new(&pm(-1.0, 1.0), Series::DTilde, DInfConfig::default())
            .unwrap()
            .sample(&mut rng);
        assert!((s.value - E / (E - 1.0)).abs() < 1e-9);
    }
}
