//! Light-tailed regime: the Cramér exponent, Goldie constant estimators,
//! prestationary tails and exceedance times.

use crate::error::{domain, Error, Result};
use crate::estimate::{EstimateMethod, McMean, TailEstimate};
use crate::laws::{JointLaw, MgfMoments, ScalarLaw};
use crate::numerics::normal_cdf;
use crate::perpetuity::{f_map, jump_field_stable, step_associated, step_dual_max, Series};
use crate::real::Real;
use crate::rng::{replicate_fold, replicate_map, Moments, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoldieMethod {
    Plugin,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldieEstimate {
    pub c: f64,
    pub std_err: f64,
    pub method: GoldieMethod,
    /// Set when a handful of summands dominate the plugin average, so the
    /// standard error is not trustworthy.
    pub warning: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CramerParams {
    pub beta: f64,
    pub alpha: f64,
    pub sigma2: f64,
    pub c: Option<GoldieEstimate>,
}

impl CramerParams {
    pub fn with_c(mut self, c: GoldieEstimate) -> Self {
        self.c = Some(c);
        self
    }

    fn c_value(&self) -> Result<f64> {
        self.c
            .map(|g| g.c)
            .ok_or_else(|| domain("c", "Goldie constant not set on the parameters"))
    }
}

/// `(β, α, σ²)` for `E e^{βξ} = 1`.
pub fn solve_cramer(xi: &ScalarLaw) -> Result<CramerParams> {
    xi.validate()?;
    cramer_from_mgf(|l| xi.mgf_moments(l), xi.mean(), xi.tail_prob(0.0))
}

/// As [`solve_cramer`] for the `ξ` marginal of a pair law.
pub fn solve_cramer_joint(joint: &JointLaw) -> Result<CramerParams> {
    joint.validate()?;
    let p_pos = match joint {
        JointLaw::Custom(t) => t.expect(|x, _| (x > 0.0) as u8 as f64),
        _ => match joint.xi_marginal() {
            Some(l) => l.tail_prob(0.0),
            None => 1.0,
        },
    };
    cramer_from_mgf(|l| joint.xi_mgf(l), joint.xi_mean(), p_pos)
}

fn no_root(reason: impl Into<String>) -> Error {
    Error::NoRoot {
        what: "E e^{lambda xi} = 1".into(),
        reason: reason.into(),
    }
}

pub(crate) fn cramer_from_mgf<M: Fn(f64) -> MgfMoments>(mgf: M, mean: f64, p_pos: f64) -> Result<CramerParams> {
    if !(mean < 0.0) {
        return Err(domain("xi", format!("Cramér case needs E xi < 0, got {mean}")));
    }
    if !(p_pos > 0.0) {
        return Err(no_root("subcritical: xi <= 0 a.s., so phi < 1 for every lambda > 0"));
    }
    let phi = |l: f64| mgf(l).phi;
    let below = |l: f64| {
        let p = phi(l);
        p.is_finite() && p <= 1.0
    };
    if !phi(1e-9).is_finite() {
        return Err(no_root("heavy: phi diverges for every lambda > 0"));
    }
    let mut lo = 0.0;
    let mut hi = 0.5;
    while below(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(no_root("subcritical: phi stays <= 1 up to lambda = 1e6"));
        }
    }
    let mut b = crate::numerics::bisect_predicate(below, lo, hi, 1e-14 * hi);
    let above = phi(b + 1e-12 * b.max(1.0));
    if !above.is_finite() {
        return Err(no_root(format!(
            "heavy: phi diverges at lambda = {b:.6} before crossing 1 (phi = {:.6} just below)",
            phi(b)
        )));
    }
    for _ in 0..50 {
        let m = mgf(b);
        let step = (m.phi - 1.0) / m.phi1;
        if !step.is_finite() {
            break;
        }
        b -= step;
        if step.abs() <= 1e-16 * b {
            break;
        }
    }
    let m = mgf(b);
    if !((m.phi - 1.0).abs() < 1e-9) || !(b > 0.0) {
        return Err(no_root(format!("root polish failed: phi({b}) = {}", m.phi)));
    }
    let alpha = m.phi1;
    let sigma2 = m.phi2 - alpha * alpha;
    if !(alpha > 0.0 && alpha.is_finite() && sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(no_root(format!("tilted moments not usable: alpha = {alpha}, sigma2 = {sigma2}")));
    }
    Ok(CramerParams {
        beta: b,
        alpha,
        sigma2,
        c: None,
    })
}

/// `E e^{β ξ(y)}` and `E ξ(y) e^{β ξ(y)}` for the exact jump at `y`.
/// Replication `r` uses the pair drawn from `stream.child(r)`, so different
/// `y` share random numbers.
pub fn jump_tilted_moments(y: f64, joint: &JointLaw, beta: f64, n_mc: u64, stream: &RandomStream) -> (McMean, McMean) {
    let (m0, m1) = replicate_fold(
        n_mc,
        stream,
        || (Moments::default(), Moments::default()),
        |acc, rng, _| {
            let (x, e) = joint.sample_pair(rng);
            let j = jump_field_stable(y, x, e);
            let w = (beta * j).exp();
            acc.0.push(w);
            acc.1.push(j * w);
        },
        |a, b| (a.0.merge(b.0), a.1.merge(b.1)),
    );
    (m0.into(), m1.into())
}

/// `E e^{β ξ(y)}` by Monte Carlo over the exact jump.
pub fn tilted_jump_mean(y: f64, joint: &JointLaw, beta: f64, n_mc: u64, stream: &RandomStream) -> McMean {
    jump_tilted_moments(y, joint, beta, n_mc, stream).0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldieConfig {
    pub burn_in: usize,
    /// Stationary samples in total, split evenly over `chains`.
    pub n_pi: usize,
    pub n_inner: usize,
    pub thin: usize,
    pub chains: u64,
    /// Thinned samples per batch for the batch-means standard error.
    pub batch: usize,
}

impl Default for GoldieConfig {
    fn default() -> Self {
        Self {
            burn_in: 10_000,
            n_pi: 100_000,
            n_inner: 100,
            thin: 10,
            chains: 16,
            batch: 50,
        }
    }
}

/// `c = (βα)⁻¹ ∫ (E e^{βξ(y)} − 1) e^{βy} π(dy)` with `π` sampled from the
/// associated chain.
///
/// Inside the integral `E e^{βξ(y)} − 1` is estimated as the mean of
/// `e^{βξ_i(y)} − e^{βξ_i}` over the same pairs, which has the same
/// expectation because `E e^{βξ} = 1`.
pub fn goldie_constant_plugin(joint: &JointLaw, params: &CramerParams, cfg: &GoldieConfig, stream: &RandomStream) -> Result<GoldieEstimate> {
    joint.validate()?;
    if !(joint.xi_mean() < 0.0) {
        return Err(domain("xi", "Goldie constant needs E xi < 0"));
    }
    if cfg.chains == 0 || cfg.n_pi < cfg.chains as usize || cfg.n_inner == 0 || cfg.thin == 0 || cfg.batch == 0 {
        return Err(domain("goldie", "chains, n_pi >= chains, n_inner, thin and batch must be positive"));
    }
    let (beta, alpha) = (params.beta, params.alpha);
    let per_chain = cfg.n_pi / cfg.chains as usize;
    let scale = 1.0 / (beta * alpha);
    let chains: Vec<Vec<f64>> = replicate_map(cfg.chains, stream, |rng, _| {
        let (x1, e1) = joint.sample_pair(rng);
        let mut x = f_map(e1 * x1.exp());
        let step = |x: &mut f64, rng: &mut RandomStream| *x = step_associated(*x, joint.sample_pair(rng));
        for _ in 0..cfg.burn_in {
            step(&mut x, rng);
        }
        let mut out = Vec::with_capacity(per_chain);
        for _ in 0..per_chain {
            for _ in 0..cfg.thin {
                step(&mut x, rng);
            }
            let mut acc = 0.0;
            for _ in 0..cfg.n_inner {
                let (xi, eta) = joint.sample_pair(rng);
                acc += (beta * jump_field_stable(x, xi, eta)).exp() - (beta * xi).exp();
            }
            out.push(acc / cfg.n_inner as f64 * (beta * x).exp() * scale);
        }
        out
    });
    let mut all = Moments::default();
    let mut batches = Moments::default();
    let mut max_sq = 0.0f64;
    let mut sum_sq = 0.0f64;
    for chain in &chains {
        for b in chain.chunks(cfg.batch) {
            let mut bm = Moments::default();
            for &g in b {
                all.push(g);
                bm.push(g);
                max_sq = max_sq.max(g * g);
                sum_sq += g * g;
            }
            if b.len() == cfg.batch {
                batches.push(bm.mean);
            }
        }
    }
    let std_err = if batches.n >= 2 {
        batches.std_err()
    } else {
        all.std_err()
    };
    let warning = !all.mean.is_finite() || !(sum_sq.is_finite()) || max_sq > 0.05 * sum_sq;
    Ok(GoldieEstimate {
        c: all.mean,
        std_err,
        method: GoldieMethod::Plugin,
        warning,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalGoldie {
    pub estimate: GoldieEstimate,
    /// `max/min` of `x^β P̂{D > x}` over the grid.
    pub plateau_ratio: f64,
    /// `(x, x^β P̂{D > x}, standard error)` per grid level.
    pub levels: Vec<(f64, f64, f64)>,
}

/// Minimum pool size accepted by [`goldie_constant_empirical`].
pub const MIN_EMPIRICAL_POOL: usize = 100_000;

/// Inverse-variance weighted mean of `x^β P̂{D > x}` over `grid`. The
/// standard error accounts for the overlap between exceedance events at
/// different levels.
pub fn goldie_constant_empirical(pool: &[f64], beta: f64, grid: &[f64]) -> Result<EmpiricalGoldie> {
    if pool.len() < MIN_EMPIRICAL_POOL {
        return Err(domain("pool", format!("need at least {MIN_EMPIRICAL_POOL} samples, got {}", pool.len())));
    }
    if grid.is_empty() {
        return Err(domain("grid", "must contain at least one level"));
    }
    if !(beta > 0.0) {
        return Err(domain("beta", "must be > 0"));
    }
    let n = pool.len() as f64;
    let mut sorted = pool.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p_at = |x: f64| (sorted.len() - sorted.partition_point(|&v| v <= x)) as f64 / n;
    let ps: Vec<f64> = grid.iter().map(|&x| p_at(x)).collect();
    if let Some(i) = ps.iter().position(|&p| p == 0.0) {
        return Err(Error::InsufficientData {
            context: format!("no pool value above grid level {}", grid[i]),
            attempted: pool.len() as u64,
        });
    }
    let w_x: Vec<f64> = grid.iter().map(|&x| x.powf(beta)).collect();
    let vals: Vec<f64> = ps.iter().zip(&w_x).map(|(p, s)| p * s).collect();
    let cov = |i: usize, j: usize| {
        let joint = if grid[i] >= grid[j] { ps[i] } else { ps[j] };
        w_x[i] * w_x[j] * (joint - ps[i] * ps[j]) / n
    };
    let weights: Vec<f64> = (0..grid.len()).map(|i| 1.0 / cov(i, i).max(f64::MIN_POSITIVE)).collect();
    let wsum: f64 = weights.iter().sum();
    let c = if vals.len() == 1 {
        vals[0]
    } else {
        weights.iter().zip(&vals).map(|(w, v)| w * v).sum::<f64>() / wsum
    };
    let mut var = 0.0;
    for i in 0..grid.len() {
        for j in 0..grid.len() {
            var += weights[i] * weights[j] * cov(i, j);
        }
    }
    let std_err = var.max(0.0).sqrt() / wsum;
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = max / min;
    if ratio > 2.0 {
        return Err(Error::NonPlateau { ratio });
    }
    let levels = (0..grid.len()).map(|i| (grid[i], vals[i], cov(i, i).sqrt())).collect();
    Ok(EmpiricalGoldie {
        estimate: GoldieEstimate {
            c,
            std_err,
            method: GoldieMethod::Empirical,
            warning: false,
        },
        plateau_ratio: ratio,
        levels,
    })
}

/// Hill estimate of the tail index from the top `k` order statistics.
pub fn hill_estimate<T: Real>(samples: &[T], k: usize) -> Result<T> {
    if k < 2 {
        return Err(domain("k", format!("Hill estimator needs k >= 2, got {k}")));
    }
    if k >= samples.len() {
        return Err(domain("k", format!("k = {k} must be below the pool size {}", samples.len())));
    }
    let mut v = samples.to_vec();
    let cut = v.len() - k - 1;
    v.select_nth_unstable_by(cut, |a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let threshold = v[cut];
    if !(threshold > T::zero()) {
        return Err(domain("samples", "top order statistics must be > 0"));
    }
    let lt = threshold.ln();
    let mut h = T::zero();
    for &x in &v[cut + 1..] {
        h += x.ln() - lt;
    }
    h /= T::from_f64(k as f64);
    if !(h > T::zero()) {
        return Err(domain("samples", "zero log-spacings in the top order statistics"));
    }
    Ok(T::one() / h)
}

/// Default Hill `k`: `⌈√N⌉`.
pub fn hill_default_k(n: usize) -> usize {
    (n as f64).sqrt().ceil() as usize
}

/// `N_{0,σ²}((nα − log x)/√(log x / α))`.
pub fn normal_factor(params: &CramerParams, n: usize, x: f64) -> Result<f64> {
    if !(x > std::f64::consts::E) {
        return Err(domain("x", format!("level must exceed e, got {x}")));
    }
    let l = x.ln();
    let z = (n as f64 * params.alpha - l) / (l / params.alpha).sqrt();
    Ok(normal_cdf(z / params.sigma2.sqrt()))
}

/// Leading term `c x^{-β} N_{0,σ²}((nα − log x)/√(log x / α))` of `P{D_n > x}`.
pub fn prestationary_tail(params: &CramerParams, n: usize, x: f64) -> Result<f64> {
    let c = params.c_value()?;
    Ok(c * x.powf(-params.beta) * normal_factor(params, n, x)?)
}

/// Leading term of `P{T_x <= n | T_x < ∞}`.
pub fn exceedance_time_cdf(params: &CramerParams, n: usize, x: f64) -> Result<f64> {
    normal_factor(params, n, x)
}

/// Crude `P{D_n > x}` (or `D~_n`) at every `n` of `grid`, on shared paths.
pub fn prestationary_empirical(joint: &JointLaw, series: Series, grid: &[usize], x: f64, n_mc: u64, stream: &RandomStream) -> Result<Vec<TailEstimate>> {
    joint.validate()?;
    if grid.is_empty() {
        return Err(domain("grid", "must contain at least one horizon"));
    }
    let n_max = *grid.iter().max().unwrap();
    let hits = replicate_fold(
        n_mc,
        stream,
        || vec![0u64; grid.len()],
        |h, rng, _| {
            let mut s = 0.0f64;
            let mut e_prev = 1.0f64;
            let mut d = 0.0f64;
            for n in 1..=n_max {
                let (xi, eta) = joint.sample_pair(rng);
                s += xi;
                let e_s = s.exp();
                d += match series {
                    Series::D => eta * e_s,
                    Series::DTilde => eta * e_prev,
                };
                e_prev = e_s;
                if d > x {
                    for (i, &g) in grid.iter().enumerate() {
                        if g == n {
                            h[i] += 1;
                        }
                    }
                }
            }
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
            a
        },
    );
    Ok(hits.into_iter().map(|h| TailEstimate::from_counts(x, h, n_mc)).collect())
}

/// Default horizon standing in for `n = ∞` in [`exceedance_time_empirical`]:
/// eight tilted standard deviations past the centre `α⁻¹ log x`.
pub fn exceedance_horizon(params: &CramerParams, x: f64) -> usize {
    let l = x.ln().max(1.0);
    let centre = l / params.alpha;
    (centre + 8.0 * params.sigma2.sqrt() * (l / params.alpha).sqrt() / params.alpha).ceil() as usize + 1
}

/// `P{M_n > x} / P{M_N > x}` from the dual maximum chain, for each `n` of
/// `grid`, with `N = n_inf` standing in for infinity. Standard errors by the
/// delta method on the joint counts.
pub fn exceedance_time_empirical(joint: &JointLaw, grid: &[usize], x: f64, n_inf: usize, n_mc: u64, stream: &RandomStream) -> Result<Vec<TailEstimate>> {
    joint.validate()?;
    if grid.is_empty() || grid.iter().any(|&n| n == 0 || n > n_inf) {
        return Err(domain("grid", "horizons must lie in 1..=n_inf"));
    }
    if !(x > 0.0) {
        return Err(domain("x", "must be > 0"));
    }
    // per grid point: (#{M_n > x}, #{M_n > x and M_N > x}); last slot: #{M_N > x}
    let (counts, inf_hits) = replicate_fold(
        n_mc,
        stream,
        || (vec![(0u64, 0u64); grid.len()], 0u64),
        |acc, rng, _| {
            let mut m = 0.0f64;
            let mut above = vec![false; grid.len()];
            for n in 1..=n_inf {
                m = step_dual_max(m, joint.sample_pair(rng)).unwrap_or(0.0);
                for (i, &g) in grid.iter().enumerate() {
                    if g == n {
                        above[i] = m > x;
                    }
                }
            }
            let inf = m > x;
            for (i, &a) in above.iter().enumerate() {
                acc.0[i].0 += a as u64;
                acc.0[i].1 += (a && inf) as u64;
            }
            acc.1 += inf as u64;
        },
        |mut a, b| {
            a.0.iter_mut().zip(b.0).for_each(|(u, v)| {
                u.0 += v.0;
                u.1 += v.1;
            });
            (a.0, a.1 + b.1)
        },
    );
    if inf_hits == 0 {
        return Err(Error::InsufficientData {
            context: format!("no dual-chain path above {x} at n = {n_inf}"),
            attempted: n_mc,
        });
    }
    let nf = n_mc as f64;
    let q = inf_hits as f64 / nf;
    Ok(counts
        .into_iter()
        .map(|(a, both)| {
            let p = a as f64 / nf;
            let pb = both as f64 / nf;
            let r = p / q;
            let var = (p * (1.0 - p) / (q * q) + p * p * q * (1.0 - q) / q.powi(4) - 2.0 * p * (pb - p * q) / q.powi(3)) / nf;
            TailEstimate {
                level_x: x,
                p_hat: r,
                std_err: var.max(0.0).sqrt(),
                n_samples: n_mc,
                method: EstimateMethod::Crude,
            }
        })
        .collect())
}

/// `∫ e^{βy} |P{ξ(x) > y} − P{ξ > y}| dy` between the empirical laws of
/// the exact jump at `x` and of `ξ`, built from the same `n_mc` pairs. The
/// integral of the step functions is evaluated exactly.
pub fn homogeneity_gap(joint: &JointLaw, beta: f64, x: f64, n_mc: u64, stream: &RandomStream) -> Result<f64> {
    if !(x > 1.0) {
        return Err(domain("x", format!("must exceed 1, got {x}")));
    }
    if n_mc == 0 {
        return Err(domain("n_mc", "must be >= 1"));
    }
    let pairs = replicate_map(n_mc, stream, |rng, _| {
        let (xi, eta) = joint.sample_pair(rng);
        (jump_field_stable(x, xi, eta), xi)
    });
    // tail difference jumps by -1/N at each jump sample and +1/N at each xi sample
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * pairs.len());
    for &(j, xi) in &pairs {
        if j != xi {
            events.push((j, -1.0));
            events.push((xi, 1.0));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inv_n = 1.0 / n_mc as f64;
    let mut diff = 0.0f64;
    let mut total = 0.0;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        while i < events.len() && events[i].0 == t {
            diff += events[i].1;
            i += 1;
        }
        if i < events.len() && diff != 0.0 {
            let t1 = events[i].0;
            // P{ξ(x) > y} − P{ξ > y} on [t, t1) equals -diff/N
            let seg = ((beta * t1).exp() - (beta * t).exp()) / beta;
            total += diff.abs() * inv_n * seg;
        }
    }
    Ok(total)
}

/// `P{T_x < ∞}` by exponential tilting of `ξ` with parameter `β`: under
/// the tilted law the walk drifts up, every path crosses `x`, and the
/// estimator is the mean of `e^{-β S_{T_x}}`.
///
/// Needs an independent pair with a normal or (shifted) exponential `ξ`.
pub fn tilted_exceedance_prob(joint: &JointLaw, beta: f64, x: f64, n_cap: usize, n_mc: u64, stream: &RandomStream) -> Result<TailEstimate> {
    let (xi, eta) = match joint {
        JointLaw::Independent { xi, eta } => (xi, eta),
        _ => return Err(domain("joint", "tilted estimator needs independent xi and eta")),
    };
    let tilted = match *xi {
        ScalarLaw::Normal { mean, variance } => ScalarLaw::normal(mean + beta * variance, variance),
        ScalarLaw::Exponential { rate } if rate > beta => ScalarLaw::exponential(rate - beta),
        ScalarLaw::ShiftedExponential { rate, shift } if rate > beta => ScalarLaw::shifted_exponential(rate - beta, shift),
        _ => return Err(domain("xi", format!("no tilted sampler for {} at beta = {beta}", xi.kind()))),
    };
    let m = replicate_fold(
        n_mc,
        stream,
        Moments::default,
        |acc, rng, _| {
            let mut s = 0.0f64;
            let mut d = 0.0f64;
            let mut w = 0.0;
            for _ in 0..n_cap {
                s += tilted.sample(rng);
                d += eta.sample(rng) * s.exp();
                if d > x {
                    w = (-beta * s).exp();
                    break;
                }
            }
            acc.push(w);
        },
        Moments::merge,
    );
    Ok(TailEstimate {
        level_x: x,
        p_hat: m.mean,
        std_err: m.std_err(),
        n_samples: n_mc,
        method: EstimateMethod::Tilted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn gaussian_roots() {
        let p = solve_cramer(&ScalarLaw::normal(-1.0, 1.0)).unwrap();
        assert!((p.beta - 2.0).abs() < 1e-12 && (p.alpha - 1.0).abs() < 1e-9 && (p.sigma2 - 1.0).abs() < 1e-9);
        let p = solve_cramer(&ScalarLaw::normal(-0.5, 1.0)).unwrap();
        assert!((p.beta - 1.0).abs() < 1e-12 && (p.alpha - 0.5).abs() < 1e-9 && (p.sigma2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn shifted_exponential_root() {
        let p = solve_cramer(&ScalarLaw::shifted_exponential(1.0, -2.0)).unwrap();
        assert!(((-2.0 * p.beta).exp() - (1.0 - p.beta)).abs() < 1e-12);
        assert!((p.beta - 0.796812130020020).abs() < 1e-9);
    }

    #[test]
    fn no_root_cases() {
        let neg = ScalarLaw::shifted(ScalarLaw::point(0.0), -1.0);
        assert!(matches!(solve_cramer(&neg), Err(Error::NoRoot { .. })));
        let heavy = ScalarLaw::shifted(ScalarLaw::pareto(3.0, 1.0), -2.0);
        match solve_cramer(&heavy) {
            Err(Error::NoRoot { reason, .. }) => assert!(reason.starts_with("heavy")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(solve_cramer(&ScalarLaw::normal(1.0, 1.0)), Err(Error::Domain { .. })));
    }

    #[test]
    fn tilted_jump_mean_reference_values() {
        let s = RandomStream::new(1, 0);
        let j = JointLaw::independent(ScalarLaw::point(0.0), ScalarLaw::point(E - 1.0));
        let v = tilted_jump_mean(10.0, &j, 1.5, 10, &s);
        let want = (1.0 + (E - 1.0) * (-10.0f64).exp()).powf(1.5);
        assert!((v.mean - want).abs() < 1e-14);
        let z = JointLaw::independent(ScalarLaw::point(-0.5), ScalarLaw::point(0.0));
        assert!((tilted_jump_mean(10.0, &z, 2.0, 10, &s).mean - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn hill_on_exact_pareto() {
        let mut s = RandomStream::new(3, 0);
        // classical Pareto with index 2 on [1, ∞)
        let pool: Vec<f64> = (0..1_000_000).map(|_| s.open01().powf(-0.5)).collect();
        let h = hill_estimate(&pool, 1000).unwrap();
        assert!((h - 2.0).abs() < 0.2, "{h}");
        assert!(hill_estimate(&[1.0f64; 100], 10).is_err());
        assert!(hill_estimate(&pool, 1).is_err());
    }

    #[test]
    fn empirical_goldie_on_synthetic_tail() {
        let mut s = RandomStream::new(5, 0);
        // P{Z > x} = 2/x for x >= 2
        let pool: Vec<f64> = (0..400_000).map(|_| 2.0 / s.open01()).collect();
        let grid = [20.0, 50.0, 100.0, 200.0];
        let g = goldie_constant_empirical(&pool, 1.0, &grid).unwrap();
        assert!((g.estimate.c - 2.0).abs() < 2.0 * g.estimate.std_err + 1e-12, "{g:?}");
        assert!(matches!(goldie_constant_empirical(&pool, 1.5, &[20.0, 200.0, 2000.0]), Err(Error::NonPlateau { .. })));
        let one = goldie_constant_empirical(&pool, 1.0, &[50.0]).unwrap();
        let p = pool.iter().filter(|&&v| v > 50.0).count() as f64 / pool.len() as f64;
        assert_eq!(one.estimate.c, 50.0 * p);
    }

    #[test]
    fn normal_factor_reference_points() {
        let p = CramerParams {
            beta: 1.0,
            alpha: 0.5,
            sigma2: 1.0,
            c: Some(GoldieEstimate {
                c: 0.8,
                std_err: 0.0,
                method: GoldieMethod::Plugin,
                warning: false,
            }),
        };
        let x = 20f64.exp();
        assert!((exceedance_time_cdf(&p, 40, x).unwrap() - 0.5).abs() < 1e-15);
        assert!((prestationary_tail(&p, 40, x).unwrap() - 0.4 / x).abs() < 1e-20);
        assert!((prestationary_tail(&p, 100_000, x).unwrap() - 0.8 / x).abs() < 1e-20);
        assert!(prestationary_tail(&p, 0, x).unwrap() * x / 0.8 < 1e-3);
        assert!(exceedance_time_cdf(&p, 1, 2.0).is_err());
    }

    #[test]
    fn homogeneity_gap_basics() {
        let s = RandomStream::new(2, 0);
        let z = JointLaw::independent(ScalarLaw::normal(-1.0, 0.01), ScalarLaw::point(0.0));
        assert_eq!(homogeneity_gap(&z, 2.0, 30.0, 1000, &s).unwrap(), 0.0);
        let j = JointLaw::independent(ScalarLaw::normal(-0.5, 1.0), ScalarLaw::exponential(1.0));
        let g: Vec<f64> = [2.0, 4.0, 8.0].iter().map(|&x| homogeneity_gap(&j, 1.0, x, 20_000, &s).unwrap()).collect();
        assert!(g.iter().all(|&v| v >= 0.0));
        assert!(g[0] > g[1] && g[1] > g[2], "{g:?}");
    }
}
