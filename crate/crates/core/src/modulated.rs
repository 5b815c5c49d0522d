//! Markov-modulated perpetuities over a finite modulating chain and their
//! reduction to i.i.d. regeneration cycles at an atom.

use nalgebra::{DMatrix, DVector};

use crate::cramer::{cramer_from_mgf, goldie_constant_plugin, hill_default_k, hill_estimate, CramerParams, GoldieConfig, GoldieEstimate};
use crate::error::{domain, Error, Result};
use crate::estimate::{McMean, TailEstimate};
use crate::laws::{JointLaw, MgfMoments, PairTable};
use crate::perpetuity::DInfConfig;
use crate::rng::{open01, replicate_fold, replicate_map, Moments, RandomStream};

/// `f_j(ξ) = u + v ξ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        intercept: 0.0,
        slope: 1.0,
    };

    pub fn new(intercept: f64, slope: f64) -> Self {
        Self { intercept, slope }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulatedSpec {
    /// Row-stochastic transition matrix, row `i` giving `P(i, ·)`.
    pub transition: Vec<Vec<f64>>,
    pub atom: usize,
    pub f: Vec<AffineMap>,
    pub g: Vec<AffineMap>,
    pub base: JointLaw,
}

/// Hard cap on the length of one regeneration cycle.
pub const CYCLE_CAP: u64 = 10_000_000;

impl ModulatedSpec {
    /// One state with identity maps: the i.i.d. perpetuity driven by `base`.
    pub fn trivial(base: JointLaw) -> Self {
        Self {
            transition: vec![vec![1.0]],
            atom: 0,
            f: vec![AffineMap::IDENTITY],
            g: vec![AffineMap::IDENTITY],
            base,
        }
    }

    pub fn states(&self) -> usize {
        self.transition.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.transition.len();
        if m == 0 {
            return Err(domain("transition", "needs at least one state"));
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != m {
                return Err(domain("transition", format!("row {i} has {} entries, expected {m}", row.len())));
            }
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(domain("transition", format!("row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(domain("transition", format!("row {i} sums to {s}, not 1")));
            }
        }
        if self.atom >= m {
            return Err(domain("atom", format!("index {} out of range for {m} states", self.atom)));
        }
        if self.f.len() != m || self.g.len() != m {
            return Err(domain("maps", format!("need {m} f and g maps, got {} and {}", self.f.len(), self.g.len())));
        }
        for (j, f) in self.f.iter().enumerate() {
            if !(f.intercept.is_finite() && f.slope.is_finite() && f.slope >= 0.0) {
                return Err(domain(format!("f.{j}"), "intercept must be finite and slope finite and >= 0"));
            }
        }
        for (j, g) in self.g.iter().enumerate() {
            if !(g.intercept.is_finite() && g.slope.is_finite()) {
                return Err(domain(format!("g.{j}"), "coefficients must be finite"));
            }
        }
        self.base.validate()?;
        check_chain(&self.transition)
    }
}

/// Irreducibility and aperiodicity from the transition graph.
fn check_chain(p: &[Vec<f64>]) -> Result<()> {
    let m = p.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; m];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..m {
                let w = if forward { p[i][j] } else { p[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    if !reach(true) || !reach(false) {
        return Err(domain("transition", "chain is reducible"));
    }
    // period = gcd of level[i] + 1 - level[j] over edges i -> j of a BFS tree
    let mut level = vec![usize::MAX; m];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for j in 0..m {
            if p[i][j] > 0.0 && level[j] == usize::MAX {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    let gcd = |mut a: i64, mut b: i64| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a.abs()
    };
    let mut period = 0i64;
    for i in 0..m {
        for j in 0..m {
            if p[i][j] > 0.0 {
                period = gcd(period, level[i] as i64 + 1 - level[j] as i64);
            }
        }
    }
    if period != 1 {
        return Err(domain("transition", format!("chain is periodic with period {period}")));
    }
    Ok(())
}

/// Invariant law `ρ` with `ρP = ρ`, by an LU solve checked against power
/// iteration.
pub fn stationary_dist(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = p.len();
    if m == 0 || p.iter().any(|r| r.len() != m) {
        return Err(domain("transition", "must be a non-empty square matrix"));
    }
    check_chain(p)?;
    // (P^T - I) ρ = 0 with the last equation replaced by Σρ = 1
    let mut a = DMatrix::<f64>::from_fn(m, m, |i, j| p[j][i] - if i == j { 1.0 } else { 0.0 });
    let mut b = DVector::<f64>::zeros(m);
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    b[m - 1] = 1.0;
    let lu = a.clone().lu();
    let mut rho = lu
        .solve(&b)
        .ok_or_else(|| domain("transition", "singular stationary system"))?;
    // one step of iterative refinement
    let r = &b - &a * &rho;
    if let Some(d) = lu.solve(&r) {
        rho += d;
    }
    let rho: Vec<f64> = rho.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = rho.iter().sum();
    let rho: Vec<f64> = rho.iter().map(|v| v / total).collect();

    let mut pi = vec![1.0 / m as f64; m];
    let mut converged = false;
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..m).map(|j| (0..m).map(|i| pi[i] * p[i][j]).sum()).collect();
        let change = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        pi = next;
        if change < 1e-15 {
            converged = true;
            break;
        }
    }
    let gap = pi.iter().zip(&rho).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if !converged || gap > 1e-9 {
        return Err(domain("transition", format!("power iteration disagrees with the linear solve by {gap:e}")));
    }
    Ok(rho)
}

/// `max_j |(ρP − ρ)_j|`.
pub fn stationary_residual(p: &[Vec<f64>], rho: &[f64]) -> f64 {
    let m = p.len();
    (0..m)
        .map(|j| ((0..m).map(|i| rho[i] * p[i][j]).sum::<f64>() - rho[j]).abs())
        .fold(0.0, f64::max)
}

/// `Σ_j ρ_j E f_j(ξ)`.
pub fn drift(spec: &ModulatedSpec) -> Result<f64> {
    spec.validate()?;
    let rho = stationary_dist(&spec.transition)?;
    let m = spec.base.xi_mean();
    Ok(rho.iter().zip(&spec.f).map(|(r, f)| r * f.apply(m)).sum())
}

/// `φ̂(λ) = Σ_j ρ_j E e^{λ f_j(ξ)}` with its first two derivatives.
pub fn phi_hat_moments(spec: &ModulatedSpec, rho: &[f64], lambda: f64) -> MgfMoments {
    let mut out = MgfMoments {
        phi: 0.0,
        phi1: 0.0,
        phi2: 0.0,
    };
    for (r, f) in rho.iter().zip(&spec.f) {
        let (u, v) = (f.intercept, f.slope);
        let m = spec.base.xi_mgf(lambda * v);
        let e = (lambda * u).exp();
        out.phi += r * e * m.phi;
        out.phi1 += r * e * (u * m.phi + v * m.phi1);
        out.phi2 += r * e * (u * u * m.phi + 2.0 * u * v * m.phi1 + v * v * m.phi2);
    }
    out
}

pub fn phi_hat(spec: &ModulatedSpec, lambda: f64) -> Result<f64> {
    spec.validate()?;
    let rho = stationary_dist(&spec.transition)?;
    Ok(phi_hat_moments(spec, &rho, lambda).phi)
}

/// Positive root of `φ̂(λ) = 1`.
pub fn phi_hat_root(spec: &ModulatedSpec) -> Result<f64> {
    spec.validate()?;
    let rho = stationary_dist(&spec.transition)?;
    let m0 = phi_hat_moments(spec, &rho, 0.0);
    let p_pos = if spec.f.iter().any(|f| f.slope > 0.0) || spec.f.iter().any(|f| f.intercept > 0.0) {
        1.0
    } else {
        0.0
    };
    cramer_from_mgf(|l| phi_hat_moments(spec, &rho, l), m0.phi1, p_pos).map(|p| p.beta)
}

/// Steps the modulating chain and the driving pairs together.
#[derive(Clone, Debug)]
pub struct ModulatedWalker<'a> {
    spec: &'a ModulatedSpec,
    cumulative: Vec<Vec<f64>>,
    pub state: usize,
}

impl<'a> ModulatedWalker<'a> {
    /// Starts at the atom. Assumes a validated spec.
    pub fn new(spec: &'a ModulatedSpec) -> Self {
        let cumulative = spec
            .transition
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        Self {
            spec,
            cumulative,
            state: spec.atom,
        }
    }

    /// Next state, then `(f(Φ, ξ), g(Φ, η))`. A one-state chain consumes no
    /// transition draw.
    #[inline]
    pub fn step(&mut self, rng: &mut RandomStream) -> (f64, f64) {
        if self.cumulative.len() > 1 {
            let u = open01(rng);
            let row = &self.cumulative[self.state];
            self.state = row.iter().position(|&c| u < c).unwrap_or(row.len() - 1);
        }
        let (xi, eta) = self.spec.base.sample_pair(rng);
        (self.spec.f[self.state].apply(xi), self.spec.g[self.state].apply(eta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSample {
    pub tau: u64,
    pub s_tau: f64,
    pub eta_hat: f64,
}

/// One cycle from the atom back to the atom.
pub fn simulate_cycle(spec: &ModulatedSpec, cap: u64, rng: &mut RandomStream) -> Result<CycleSample> {
    let mut w = ModulatedWalker::new(spec);
    let mut s = 0.0;
    // R_k = Σ_{i<=k} g_i e^{S_i - S_k}
    let mut r = 0.0;
    for tau in 1..=cap {
        let (f, g) = w.step(rng);
        s += f;
        r = r * (-f).exp() + g;
        if w.state == spec.atom {
            return Ok(CycleSample { tau, s_tau: s, eta_hat: r });
        }
    }
    Err(Error::RunawayCycle { cap })
}

/// `count` independent cycles, cycle `r` on `stream.child(r)`.
pub fn simulate_cycles(spec: &ModulatedSpec, count: u64, stream: &RandomStream) -> Result<Vec<CycleSample>> {
    spec.validate()?;
    replicate_map(count, stream, |rng, _| simulate_cycle(spec, CYCLE_CAP, rng))
        .into_iter()
        .collect()
}

/// Cycles of a fixed driver sequence `(state_k, f_k, g_k)`, `k = 1..n`,
/// started at the atom. A trailing incomplete cycle is dropped.
pub fn cycles_of_path(atom: usize, steps: &[(usize, f64, f64)]) -> Vec<CycleSample> {
    let mut out = Vec::new();
    let (mut s, mut r, mut tau) = (0.0, 0.0, 0u64);
    for &(state, f, g) in steps {
        tau += 1;
        s += f;
        r = r * (-f).exp() + g;
        if state == atom {
            out.push(CycleSample { tau, s_tau: s, eta_hat: r });
            (s, r, tau) = (0.0, 0.0, 0);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleBeta {
    pub beta: f64,
    pub std_err: f64,
    /// `(Σw)²/Σw²` for the weights `e^{β S_τ}` at the root.
    pub ess: f64,
}

/// Largest bootstrap coefficient of variation at which the empirical root
/// is still reported.
pub const MAX_CYCLE_ROOT_CV: f64 = 0.25;

fn empirical_root(s: &[f64], tol: f64) -> Result<f64> {
    let mean_s = s.iter().sum::<f64>() / s.len() as f64;
    if !(mean_s < 0.0) {
        return Err(domain("cycles", format!("mean cycle increment must be < 0, got {mean_s}")));
    }
    let s_max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(s_max > 0.0) {
        return Err(Error::NoRoot {
            what: "mean(e^{lambda S_tau}) = 1".into(),
            reason: "no cycle has S_tau > 0".into(),
        });
    }
    // shift by the maximum to keep the sum finite
    let g = |l: f64| {
        let acc: f64 = s.iter().map(|&v| (l * (v - s_max)).exp()).sum();
        (acc / s.len() as f64).ln() + l * s_max
    };
    let mut lo = 0.0;
    let mut hi = 1e-3;
    while g(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::NoRoot {
                what: "mean(e^{lambda S_tau}) = 1".into(),
                reason: "empirical map stays below 1".into(),
            });
        }
    }
    Ok(crate::numerics::bisect_predicate(|l| g(l) <= 0.0, lo, hi, tol * hi.max(1.0)))
}

fn ess(s: &[f64], beta: f64) -> f64 {
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = (0.0, 0.0);
    for &v in s {
        let w = (beta * (v - m)).exp();
        a += w;
        b += w * w;
    }
    a * a / b
}

/// Root of `λ ↦ mean(e^{λ S_τ}) − 1` on `λ > 0`, with a bootstrap standard
/// error over `n_boot` resamples.
///
/// A finite pool always crosses 1 eventually. When the crossing is driven by
/// a few extreme cycles, as for heavy-tailed `S_τ`, the bootstrap
/// coefficient of variation exceeds [`MAX_CYCLE_ROOT_CV`] and the root is
/// reported as missing.
pub fn cycle_beta(pool: &[CycleSample], tolerance: f64, n_boot: u64, stream: &RandomStream) -> Result<CycleBeta> {
    if pool.len() < 2 {
        return Err(domain("pool", "need at least two cycles"));
    }
    if n_boot < 2 {
        return Err(domain("n_boot", "need at least two bootstrap resamples"));
    }
    let s: Vec<f64> = pool.iter().map(|c| c.s_tau).collect();
    let beta = empirical_root(&s, tolerance)?;
    let boots: Vec<f64> = replicate_map(n_boot, stream, |rng, _| {
        let resample: Vec<f64> = (0..s.len())
            .map(|_| s[((open01(rng) * s.len() as f64) as usize).min(s.len() - 1)])
            .collect();
        empirical_root(&resample, tolerance).unwrap_or(f64::NAN)
    });
    let mut m = Moments::default();
    boots.iter().filter(|v| v.is_finite()).for_each(|&v| m.push(v));
    let std_err = m.variance().sqrt();
    if !(std_err <= MAX_CYCLE_ROOT_CV * beta) {
        return Err(Error::NoRoot {
            what: "mean(e^{lambda S_tau}) = 1".into(),
            reason: format!("crossing at {beta:.4} is unstable under resampling (bootstrap s.e. {std_err:.4})"),
        });
    }
    Ok(CycleBeta {
        beta,
        std_err,
        ess: ess(&s, beta),
    })
}

/// Bootstrap replicates in [`cycle_constant`] run chains this many times
/// shorter than the main estimate.
pub const CYCLE_BOOT_SHRINK: usize = 40;

fn cycle_plugin(pool: &[CycleSample], beta: f64, cfg: &GoldieConfig, stream: &RandomStream) -> Result<GoldieEstimate> {
    let table = cycle_table(pool)?;
    let m = table.xi_mgf(beta);
    let params = CramerParams {
        beta,
        alpha: m.phi1,
        sigma2: m.phi2 - m.phi1 * m.phi1,
        c: None,
    };
    goldie_constant_plugin(&table, &params, cfg, stream)
}

/// Plugin Goldie constant of the cycle pair at the root `beta`.
///
/// The standard error covers the chain noise and the sampling error of the
/// pool. The latter comes from `n_boot` resamples, each re-solving the root
/// and running shortened chains; their own chain variance is subtracted.
pub fn cycle_constant(pool: &[CycleSample], beta: f64, cfg: &GoldieConfig, n_boot: u64, stream: &RandomStream) -> Result<GoldieEstimate> {
    if n_boot < 2 {
        return Err(domain("n_boot", "need at least two bootstrap resamples"));
    }
    let main = cycle_plugin(pool, beta, cfg, &stream.child(0))?;
    let chains = (cfg.chains / 4).max(1);
    let small = GoldieConfig {
        burn_in: (cfg.burn_in / 10).max(1),
        n_pi: (cfg.n_pi / CYCLE_BOOT_SHRINK).max(chains as usize),
        chains,
        ..*cfg
    };
    let boots: Vec<Option<(f64, f64)>> = replicate_map(n_boot, &stream.child(1), |rng, _| {
        let n = pool.len();
        let resample: Vec<CycleSample> = (0..n).map(|_| pool[((open01(rng) * n as f64) as usize).min(n - 1)]).collect();
        let s: Vec<f64> = resample.iter().map(|c| c.s_tau).collect();
        let b = empirical_root(&s, 1e-10).ok()?;
        cycle_plugin(&resample, b, &small, &rng.child(0)).ok().map(|g| (g.c, g.std_err))
    });
    let (mut c, mut noise) = (Moments::default(), Moments::default());
    for &(v, se) in boots.iter().flatten() {
        c.push(v);
        noise.push(se * se);
    }
    if c.n < 2 {
        return Err(Error::NoRoot {
            what: "cycle Goldie constant".into(),
            reason: "bootstrap resamples have no root".into(),
        });
    }
    let pool_var = (c.variance() - noise.mean).max(0.0);
    Ok(GoldieEstimate {
        std_err: main.std_err.hypot(pool_var.sqrt()),
        ..main
    })
}

/// The cycle pairs `(S_τ, η̂)` as an equally weighted table.
pub fn cycle_table(pool: &[CycleSample]) -> Result<JointLaw> {
    let pairs: Vec<(f64, f64)> = pool.iter().map(|c| (c.s_tau, c.eta_hat)).collect();
    Ok(JointLaw::Custom(PairTable::uniform(&pairs)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Conditions {
    pub c1: f64,
    pub c2: f64,
    pub k: f64,
    /// Spectral radius of the chain killed at the atom; `P{τ > n}` decays
    /// like its `n`-th power.
    pub taboo_radius: f64,
    /// `E τ^{max(β,1)} K^τ` is finite: `K · taboo_radius < 1`.
    pub moment_ok: bool,
    /// Cycle-pool average of `τ^{max(β,1)} K^τ`.
    pub moment_empirical: McMean,
}

fn spectral_radius_nonneg(q: &DMatrix<f64>) -> f64 {
    let m = q.nrows();
    if m == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(m, 1.0 / m as f64);
    let mut r = 0.0;
    for _ in 0..100_000 {
        let w = q * &v;
        let n = w.iter().map(|x| x.abs()).sum::<f64>();
        if n == 0.0 {
            return 0.0;
        }
        let next = w / n;
        let change = (&next - &v).amax();
        v = next;
        if (n - r).abs() < 1e-14 && change < 1e-12 {
            return n;
        }
        r = n;
    }
    r
}

/// The suprema `C₁`, `C₂`, `K` over states and the cycle-moment check.
/// `C₁` and `C₂` are Monte Carlo averages over `n_mc` common pairs; `K`
/// is analytic when the `ξ` marginal admits it.
pub fn check_conditions(spec: &ModulatedSpec, beta: f64, n_mc: u64, stream: &RandomStream) -> Result<Conditions> {
    spec.validate()?;
    let m = spec.states();
    let sums = replicate_fold(
        n_mc,
        stream,
        || vec![(0.0f64, 0.0f64); m],
        |acc, rng, _| {
            let (xi, eta) = spec.base.sample_pair(rng);
            for j in 0..m {
                let f = spec.f[j].apply(xi);
                let w = (beta * f).exp();
                acc[j].0 += w * f.abs();
                acc[j].1 += w * spec.g[j].apply(eta).abs().powf(beta);
            }
        },
        |mut a, b| {
            a.iter_mut().zip(b).for_each(|(u, v)| {
                u.0 += v.0;
                u.1 += v.1;
            });
            a
        },
    );
    let n = n_mc.max(1) as f64;
    let c1 = sums.iter().map(|v| v.0 / n).fold(0.0, f64::max);
    let c2 = sums.iter().map(|v| v.1 / n).fold(0.0, f64::max);
    let k = spec
        .f
        .iter()
        .map(|f| (beta * f.intercept).exp() * spec.base.xi_mgf(beta * f.slope).phi)
        .fold(0.0, f64::max);
    let others: Vec<usize> = (0..m).filter(|&i| i != spec.atom).collect();
    let q = DMatrix::from_fn(others.len(), others.len(), |i, j| spec.transition[others[i]][others[j]]);
    let taboo_radius = spectral_radius_nonneg(&q);
    let moment_ok = k.is_finite() && k * taboo_radius < 1.0;
    let power = beta.max(1.0);
    let cycles = simulate_cycles(spec, n_mc.max(2), &stream.child(u64::MAX))?;
    let mut mm = Moments::default();
    for c in &cycles {
        mm.push((c.tau as f64).powf(power) * k.powf(c.tau as f64));
    }
    Ok(Conditions {
        c1,
        c2,
        k,
        taboo_radius,
        moment_ok,
        moment_empirical: mm.into(),
    })
}

/// Truncated draws of the modulated `D_∞`, with the stopping rule of
/// [`crate::perpetuity::DInfSampler`] using the stationary drift and the
/// largest `|g_j|` quantile.
#[derive(Clone, Debug)]
pub struct ModulatedDInf<'a> {
    spec: &'a ModulatedSpec,
    cfg: DInfConfig,
    log_qk: f64,
    ln_tol: f64,
}

impl<'a> ModulatedDInf<'a> {
    pub fn new(spec: &'a ModulatedSpec, cfg: DInfConfig) -> Result<Self> {
        let a = -drift(spec)?;
        if !(a > 0.0) {
            return Err(domain("f", format!("modulated drift must be < 0, got {}", -a)));
        }
        let q_eta = spec.base.eta_abs_upper_quantile(cfg.eta_tail);
        let q = spec
            .g
            .iter()
            .map(|g| if g.slope == 0.0 { g.intercept.abs() } else { g.intercept.abs() + g.slope.abs() * q_eta })
            .fold(0.0, f64::max);
        let identity = spec.g.iter().all(|g| *g == AffineMap::IDENTITY);
        let q = if identity { q_eta } else { q };
        let log_k = -(-(-0.5 * a).exp_m1()).ln();
        Ok(Self {
            spec,
            cfg,
            log_qk: q.ln() + log_k,
            ln_tol: cfg.tol.ln(),
        })
    }

    pub fn sample(&self, rng: &mut RandomStream) -> crate::perpetuity::DInfSample {
        let mut w = ModulatedWalker::new(self.spec);
        let mut s = 0.0f64;
        let mut d = 0.0f64;
        let mut log_bound = f64::INFINITY;
        for n in 1..=self.cfg.n_cap {
            let (f, g) = w.step(rng);
            s += f;
            d += g * s.exp();
            log_bound = s + self.log_qk;
            if log_bound < self.ln_tol || log_bound < self.ln_tol + d.abs().max(1.0).ln() {
                return crate::perpetuity::DInfSample {
                    value: d,
                    terms_used: n,
                    converged: true,
                    residual_bound: log_bound.exp(),
                };
            }
        }
        crate::perpetuity::DInfSample {
            value: d,
            terms_used: self.cfg.n_cap,
            converged: false,
            residual_bound: log_bound.exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulatedTailConfig {
    pub dinf: DInfConfig,
    pub n_cycles: u64,
    pub n_boot: u64,
    pub goldie: GoldieConfig,
    /// Hill `k`; `None` for `⌈√N⌉`.
    pub hill_k: Option<usize>,
}

impl Default for ModulatedTailConfig {
    fn default() -> Self {
        Self {
            dinf: DInfConfig::default(),
            n_cycles: 100_000,
            n_boot: 100,
            goldie: GoldieConfig::default(),
            hill_k: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulatedTail {
    pub direct: Vec<TailEstimate>,
    pub hill: Option<f64>,
    pub cycle_beta: Option<CycleBeta>,
    pub phi_hat_beta: Option<f64>,
    /// Goldie constant of the cycle pair, when a cycle root exists.
    pub cycle_c: Option<GoldieEstimate>,
    /// `c x^{-β}` from the cycle reduction at each level.
    pub cycle_tail: Vec<Option<f64>>,
    pub mean_tau: McMean,
}

/// Pool of modulated `D_∞` draws, draw `r` on `stream.child(r)`.
pub fn modulated_pool(spec: &ModulatedSpec, cfg: DInfConfig, n_mc: u64, stream: &RandomStream) -> Result<Vec<f64>> {
    let sampler = ModulatedDInf::new(spec, cfg)?;
    Ok(replicate_map(n_mc, stream, |rng, _| sampler.sample(rng).value))
}

/// Direct tail estimates at `levels` plus the cycle reduction. Streams:
/// `stream.child(0)` parents the direct pool, `child(1)` the cycles,
/// `child(2)` the bootstrap and `child(3)` the Goldie chains.
pub fn modulated_tail(spec: &ModulatedSpec, levels: &[f64], n_mc: u64, cfg: &ModulatedTailConfig, stream: &RandomStream) -> Result<ModulatedTail> {
    spec.validate()?;
    let pool = modulated_pool(spec, cfg.dinf, n_mc, &stream.child(0))?;
    let direct = levels.iter().map(|&x| TailEstimate::from_pool(x, &pool)).collect();
    let k = cfg.hill_k.unwrap_or_else(|| hill_default_k(pool.len()));
    let hill = hill_estimate(&pool, k).ok();
    let cycles = simulate_cycles(spec, cfg.n_cycles, &stream.child(1))?;
    let mut tau = Moments::default();
    cycles.iter().for_each(|c| tau.push(c.tau as f64));
    let cb = cycle_beta(&cycles, 1e-10, cfg.n_boot, &stream.child(2)).ok();
    let phi_hat_beta = phi_hat_root(spec).ok();
    let mut cycle_c = None;
    let mut cycle_tail = vec![None; levels.len()];
    if let Some(b) = cb {
        if let Ok(g) = cycle_constant(&cycles, b.beta, &cfg.goldie, cfg.n_boot, &stream.child(3)) {
            cycle_c = Some(g);
            cycle_tail = levels.iter().map(|&x| Some(g.c * x.powf(-b.beta))).collect();
        }
    }
    Ok(ModulatedTail {
        direct,
        hill,
        cycle_beta: cb,
        phi_hat_beta,
        cycle_c,
        cycle_tail,
        mean_tau: tau.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::ScalarLaw;
    use crate::perpetuity::{DInfSampler, Series};

    fn two_state() -> ModulatedSpec {
        ModulatedSpec {
            transition: vec![vec![0.9, 0.1], vec![0.5, 0.5]],
            atom: 0,
            f: vec![AffineMap::new(-0.2, 1.0), AffineMap::new(0.2, 1.0)],
            g: vec![AffineMap::new(0.0, 1.0), AffineMap::new(0.0, 2.0)],
            base: JointLaw::independent(ScalarLaw::normal(-0.5, 1.0), ScalarLaw::exponential(1.0)),
        }
    }

    #[test]
    fn stationary_reference_cases() {
        let rho = stationary_dist(&two_state().transition).unwrap();
        assert!((rho[0] - 5.0 / 6.0).abs() < 1e-12 && (rho[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!(stationary_residual(&two_state().transition, &rho) < 1e-12);
        assert!(stationary_dist(&[vec![1.0, 0.0], vec![0.0, 1.0]]).is_err());
        assert!(stationary_dist(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
        let u = vec![vec![1.0 / 3.0; 3]; 3];
        let rho = stationary_dist(&u).unwrap();
        assert!(rho.iter().all(|&r| (r - 1.0 / 3.0).abs() < 1e-14));
    }

    #[test]
    fn drift_and_phi_hat() {
        let mut s = two_state();
        assert!((drift(&s).unwrap() - (-0.5 - 0.2 * 5.0 / 6.0 + 0.2 / 6.0)).abs() < 1e-12);
        s.f = vec![AffineMap::new(-1.0, 1.0), AffineMap::new(1.0, 1.0)];
        assert!((drift(&s).unwrap() - (-0.5 - 2.0 / 3.0)).abs() < 1e-12);
        assert!((phi_hat(&s, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let h = 1e-6;
        let fd = (phi_hat(&s, h).unwrap() - phi_hat(&s, -0.0).unwrap()) / h;
        assert!((fd - drift(&s).unwrap()).abs() < 1e-5);
        let t = ModulatedSpec::trivial(JointLaw::independent(ScalarLaw::normal(-1.0, 1.0), ScalarLaw::point(1.0)));
        assert!((phi_hat(&t, 0.7).unwrap() - (-0.7f64 + 0.245).exp()).abs() < 1e-14);
        assert!((phi_hat_root(&t).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn trivial_cycles_are_single_steps() {
        let base = JointLaw::independent(ScalarLaw::normal(-1.0, 1.0), ScalarLaw::exponential(1.0));
        let t = ModulatedSpec::trivial(base.clone());
        let st = RandomStream::new(9, 0);
        let cycles = simulate_cycles(&t, 100, &st).unwrap();
        for (r, c) in cycles.iter().enumerate() {
            let (xi, eta) = base.sample_pair(&mut st.child(r as u64));
            assert_eq!((c.tau, c.s_tau, c.eta_hat), (1, xi, eta));
        }
    }

    #[test]
    fn cycle_concatenation_reproduces_the_path() {
        let spec = two_state();
        let mut rng = RandomStream::new(4, 0);
        let mut w = ModulatedWalker::new(&spec);
        let mut steps = Vec::new();
        for _ in 0..2000 {
            let (f, g) = w.step(&mut rng);
            steps.push((w.state, f, g));
        }
        let cycles = cycles_of_path(spec.atom, &steps);
        let used: u64 = cycles.iter().map(|c| c.tau).sum();
        let (mut s, mut d) = (0.0f64, 0.0f64);
        for &(_, f, g) in &steps[..used as usize] {
            s += f;
            d += g * s.exp();
        }
        let (mut sh, mut dh) = (0.0f64, 0.0f64);
        for c in &cycles {
            sh += c.s_tau;
            dh += c.eta_hat * sh.exp();
        }
        assert!((d - dh).abs() <= 1e-12 * d.abs().max(1.0), "{d} vs {dh}");
    }

    #[test]
    fn trivial_modulation_matches_iid_sampler_exactly() {
        let base = JointLaw::independent(ScalarLaw::normal(-1.0, 1.0), ScalarLaw::exponential(1.0));
        let t = ModulatedSpec::trivial(base.clone());
        let cfg = DInfConfig::default();
        let m = ModulatedDInf::new(&t, cfg).unwrap();
        let i = DInfSampler::new(&base, Series::D, cfg).unwrap();
        let st = RandomStream::new(1, 1);
        for r in 0..200 {
            assert_eq!(m.sample(&mut st.child(r)), i.sample(&mut st.child(r)));
        }
    }

    #[test]
    fn zero_g_gives_zero_tails() {
        let mut s = two_state();
        s.g = vec![AffineMap::new(0.0, 0.0); 2];
        let pool = modulated_pool(&s, DInfConfig::default(), 500, &RandomStream::new(0, 0)).unwrap();
        assert!(pool.iter().all(|&v| v == 0.0));
        let c = check_conditions(&s, 1.0, 1000, &RandomStream::new(0, 1)).unwrap();
        assert_eq!(c.c2, 0.0);
    }

    #[test]
    fn conditions_for_trivial_gaussian() {
        let t = ModulatedSpec::trivial(JointLaw::independent(ScalarLaw::normal(-1.0, 1.0), ScalarLaw::point(1.0)));
        let c = check_conditions(&t, 2.0, 1000, &RandomStream::new(0, 0)).unwrap();
        assert!((c.k - 1.0).abs() < 1e-12);
        assert_eq!(c.taboo_radius, 0.0);
        assert!(c.moment_ok);
    }

    #[test]
    fn cycle_beta_trivial_and_scaling() {
        let t = ModulatedSpec::trivial(JointLaw::independent(ScalarLaw::normal(-1.0, 1.0), ScalarLaw::point(1.0)));
        let pool = simulate_cycles(&t, 20_000, &RandomStream::new(2, 0)).unwrap();
        let b = cycle_beta(&pool, 1e-12, 50, &RandomStream::new(2, 1)).unwrap();
        assert!((b.beta - 2.0).abs() < 4.0 * b.std_err.max(0.02), "{b:?}");
        let scaled: Vec<CycleSample> = pool.iter().map(|c| CycleSample { s_tau: 2.0 * c.s_tau, ..*c }).collect();
        let b2 = cycle_beta(&scaled, 1e-12, 10, &RandomStream::new(2, 1)).unwrap();
        assert!((b2.beta - b.beta / 2.0).abs() < 1e-9);
    }

    #[test]
    fn cycle_constant_covers_pool_error() {
        let joint = JointLaw::independent(ScalarLaw::normal(-0.5, 1.0), ScalarLaw::exponential(1.0));
        let pool = simulate_cycles(&ModulatedSpec::trivial(joint.clone()), 50_000, &RandomStream::new(4, 0)).unwrap();
        let cfg = GoldieConfig {
            burn_in: 1000,
            n_pi: 80_000,
            n_inner: 20,
            chains: 8,
            ..GoldieConfig::default()
        };
        let b = cycle_beta(&pool, 1e-12, 20, &RandomStream::new(4, 1)).unwrap();
        let g = cycle_constant(&pool, b.beta, &cfg, 20, &RandomStream::new(4, 2)).unwrap();
        let chain_only = cycle_plugin(&pool, b.beta, &cfg, &RandomStream::new(4, 2).child(0)).unwrap();
        assert_eq!(g.c, chain_only.c);
        assert!(g.std_err > chain_only.std_err, "{g:?} {chain_only:?}");
        let params = crate::cramer::solve_cramer_joint(&joint).unwrap();
        let iid = goldie_constant_plugin(&joint, &params, &cfg, &RandomStream::new(4, 3)).unwrap();
        assert!((g.c - iid.c).abs() < 4.0 * g.std_err.hypot(iid.std_err), "{g:?} {iid:?}");
    }

    #[test]
    fn heavy_cycles_have_no_root() {
        let heavy = JointLaw::independent(ScalarLaw::shifted(ScalarLaw::pareto(1.5, 1.0), -3.0), ScalarLaw::point(1.0));
        let pool = simulate_cycles(&ModulatedSpec::trivial(heavy), 20_000, &RandomStream::new(8, 0)).unwrap();
        let r = cycle_beta(&pool, 1e-10, 10, &RandomStream::new(8, 1));
        assert!(matches!(r, Err(Error::NoRoot { .. })), "{r:?}");
    }

    #[test]
    fn kac_and_occupation() {
        let spec = two_state();
        let cycles = simulate_cycles(&spec, 50_000, &RandomStream::new(6, 0)).unwrap();
        let mut m = Moments::default();
        cycles.iter().for_each(|c| m.push(c.tau as f64));
        assert!((m.mean - 1.2).abs() < 3.0 * m.std_err(), "{} ± {}", m.mean, m.std_err());
        let mut rng = RandomStream::new(6, 1);
        let mut w = ModulatedWalker::new(&spec);
        let mut count = [0u64; 2];
        let mut s = 0.0;
        let n = 1_000_000;
        for _ in 0..n {
            s += w.step(&mut rng).0;
            count[w.state] += 1;
        }
        assert!((count[0] as f64 / n as f64 - 5.0 / 6.0).abs() < 0.005);
        assert!((s / n as f64 - drift(&spec).unwrap()).abs() < 0.01);
    }
}
