//! Transient regime: limit theorems for `log D_n` when `E ξ >= 0`.

use crate::error::{domain, Error, Result};
use crate::estimate::{McMean, TailEstimate};
use crate::laws::JointLaw;
use crate::perpetuity::{jump_field_stable, Series};
use crate::rng::{replicate_fold, replicate_map, Moments, RandomStream};

/// `log D_n` (or `log D~_n`) of one fresh path with `η > 0`.
///
/// Tracks `R_n = Σ η_k e^{S_k − S_n}` (for `D~`, `Σ η_k e^{S_{k−1} − S_n}`)
/// so that `log D_n = S_n + log R_n` never overflows. `R` is kept as
/// `r · e^{off}` and renormalised when `r` leaves `[1e-200, 1e200]`.
pub fn log_d_n(joint: &JointLaw, series: Series, n: usize, rng: &mut RandomStream) -> f64 {
    let mut s = 0.0f64;
    let mut r = 0.0f64;
    let mut off = 0.0f64;
    for _ in 0..n {
        let (xi, eta) = joint.sample_pair(rng);
        s += xi;
        let e = if off == 0.0 { eta } else { eta * (-off).exp() };
        r = match series {
            Series::D => r * (-xi).exp() + e,
            Series::DTilde => (r + e) * (-xi).exp(),
        };
        if r > 1e200 || (r < 1e-200 && off != 0.0 && r > 0.0) {
            off += r.ln();
            r = 1.0;
        }
    }
    s + off + r.ln()
}

/// `n_mc` draws of `log D_n`, draw `r` on `stream.child(r)`.
pub fn log_d_pool(joint: &JointLaw, series: Series, n: usize, n_mc: u64, stream: &RandomStream) -> Vec<f64> {
    replicate_map(n_mc, stream, |rng, _| log_d_n(joint, series, n, rng))
}

fn check_transient(joint: &JointLaw) -> Result<(f64, f64)> {
    joint.validate()?;
    if !joint.eta_positive() {
        return Err(domain("eta", "limit theorems for log D_n need eta > 0"));
    }
    let a = joint.xi_mean();
    let s2 = joint.xi_variance();
    if !(s2.is_finite() && s2 > 0.0) {
        return Err(domain("xi", format!("variance must be finite and > 0, got {s2}")));
    }
    if !joint.log1p_eta_second_moment().is_finite() {
        return Err(domain("eta", "E log^2(1 + eta) must be finite"));
    }
    Ok((a, s2))
}

/// `(log D_n − a n)/√(n σ²)` over `n_mc` paths.
pub fn clt_normalized_pool(joint: &JointLaw, series: Series, n: usize, n_mc: u64, stream: &RandomStream) -> Result<Vec<f64>> {
    let (a, s2) = check_transient(joint)?;
    if !(a > 0.0) {
        return Err(domain("xi", format!("CLT needs E xi > 0, got {a}")));
    }
    if n == 0 {
        return Err(domain("n", "must be >= 1"));
    }
    let scale = 1.0 / (n as f64 * s2).sqrt();
    let shift = a * n as f64;
    Ok(log_d_pool(joint, series, n, n_mc, stream)
        .into_iter()
        .map(|v| (v - shift) * scale)
        .collect())
}

/// `Δ/√(2πσ²n) · exp(−(x − na)²/(2nσ²))`.
pub fn local_window_theoretical(a: f64, sigma2: f64, n: usize, x: f64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(domain("n", "must be >= 1"));
    }
    if !(delta > 0.0) {
        return Err(domain("delta", "must be > 0"));
    }
    if !(sigma2 > 0.0) {
        return Err(domain("sigma2", "must be > 0"));
    }
    let v = n as f64 * sigma2;
    let z = x - n as f64 * a;
    Ok(delta / (2.0 * std::f64::consts::PI * v).sqrt() * (-z * z / (2.0 * v)).exp())
}

/// Fraction of `pool` in `(x, x + Δ]`.
pub fn window_fraction(pool: &[f64], x: f64, delta: f64) -> TailEstimate {
    let hits = pool.iter().filter(|&&v| v > x && v <= x + delta).count() as u64;
    TailEstimate::from_counts(x, hits, pool.len() as u64)
}

/// Crude `P{log D_n ∈ (x, x + Δ]}`.
pub fn local_window_empirical(joint: &JointLaw, series: Series, n: usize, x: f64, delta: f64, n_mc: u64, stream: &RandomStream) -> Result<TailEstimate> {
    check_transient(joint)?;
    if !(delta > 0.0) {
        return Err(domain("delta", "must be > 0"));
    }
    Ok(window_fraction(&log_d_pool(joint, series, n, n_mc, stream), x, delta))
}

/// `⌈(x + h)/a + 10 √((x + h)/a) σ/a⌉`.
pub fn green_default_n_max(a: f64, sigma2: f64, x: f64, h: f64) -> usize {
    let t = ((x + h) / a).max(0.0);
    (t + 10.0 * t.sqrt() * sigma2.sqrt() / a).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenSum {
    pub value: f64,
    pub std_err: f64,
    pub n_max: usize,
    /// `h / E ξ`.
    pub limit: f64,
}

/// `Σ_{n=1}^{n_max} P{log D_n ∈ (x, x + h]}`: the mean number of visits of
/// `log D_n` to the window per path.
pub fn green_sum(joint: &JointLaw, x: f64, h: f64, n_max: Option<usize>, n_mc: u64, stream: &RandomStream) -> Result<GreenSum> {
    if joint.xi_is_lattice() {
        let span = joint.xi_marginal().and_then(|l| l.as_point()).map(f64::abs).unwrap_or(0.0);
        return Err(Error::Lattice { span });
    }
    let (a, s2) = check_transient(joint)?;
    if !(a > 0.0) {
        return Err(domain("xi", format!("Green sum needs E xi > 0, got {a}")));
    }
    if !(h > 0.0) {
        return Err(domain("h", "must be > 0"));
    }
    let n_max = n_max.unwrap_or_else(|| green_default_n_max(a, s2, x, h));
    let m = replicate_fold(
        n_mc,
        stream,
        Moments::default,
        |acc, rng, _| {
            let mut s = 0.0f64;
            let mut r = 0.0f64;
            let mut visits = 0u32;
            for _ in 0..n_max {
                let (xi, eta) = joint.sample_pair(rng);
                s += xi;
                r = r * (-xi).exp() + eta;
                let l = s + r.ln();
                if l > x && l <= x + h {
                    visits += 1;
                }
            }
            acc.push(visits as f64);
        },
        Moments::merge,
    );
    Ok(GreenSum {
        value: m.mean,
        std_err: m.std_err(),
        n_max,
        limit: h / a,
    })
}

/// `log² D_n / n` over `n_mc` paths, for `E ξ = 0`.
pub fn gamma_limit_pool(joint: &JointLaw, n: usize, n_mc: u64, stream: &RandomStream) -> Result<Vec<f64>> {
    let (a, _) = check_transient(joint)?;
    if a.abs() > 1e-12 {
        return Err(domain("xi", format!("Gamma limit needs E xi = 0, got {a}")));
    }
    if n == 0 {
        return Err(domain("n", "must be >= 1"));
    }
    Ok(log_d_pool(joint, Series::D, n, n_mc, stream)
        .into_iter()
        .map(|l| l * l / n as f64)
        .collect())
}

/// Shape and scale of the Gamma limit: mean `σ²`, variance `2σ⁴`.
pub fn gamma_limit_params(sigma2: f64) -> (f64, f64) {
    (0.5, 2.0 * sigma2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpDiagnostics {
    pub y: f64,
    pub mean: McMean,
    pub variance: f64,
    /// `sup_{|λ| <= A} |E e^{iλξ(y)} − E e^{iλξ}|` over the λ grid.
    pub charfn_gap: f64,
}

/// Mean, variance and characteristic-function gap of the exact jump at each
/// `y`, on common pairs (replication `r` uses `stream.child(r)` at every
/// `y`). The λ grid has `n_lambda` equally spaced points in `[0, A]`; the
/// gap is symmetric in λ.
pub fn jump_diagnostics(joint: &JointLaw, y_grid: &[f64], lambda_max: f64, n_lambda: usize, n_mc: u64, stream: &RandomStream) -> Result<Vec<JumpDiagnostics>> {
    joint.validate()?;
    if n_lambda < 2 || !(lambda_max > 0.0) {
        return Err(domain("lambda", "need lambda_max > 0 and at least two grid points"));
    }
    let lambdas: Vec<f64> = (0..n_lambda).map(|i| lambda_max * i as f64 / (n_lambda - 1) as f64).collect();
    let pairs = replicate_map(n_mc, stream, |rng, _| joint.sample_pair(rng));
    let nf = n_mc as f64;
    Ok(y_grid
        .iter()
        .map(|&y| {
            let mut m = Moments::default();
            let mut re = vec![0.0; n_lambda];
            let mut im = vec![0.0; n_lambda];
            for &(xi, eta) in &pairs {
                let j = jump_field_stable(y, xi, eta);
                m.push(j);
                if j != xi {
                    for (k, &l) in lambdas.iter().enumerate() {
                        let (sj, cj) = (l * j).sin_cos();
                        let (sx, cx) = (l * xi).sin_cos();
                        re[k] += cj - cx;
                        im[k] += sj - sx;
                    }
                }
            }
            let gap = re.iter().zip(&im).map(|(r, i)| (r * r + i * i).sqrt() / nf).fold(0.0, f64::max);
            JumpDiagnostics {
                y,
                mean: m.into(),
                variance: m.variance(),
                charfn_gap: gap,
            }
        })
        .collect())
}

/// `P{S_k <= k a / 2 for some k in [n, n + horizon]}` by simulation.
pub fn walk_excursion_prob(joint: &JointLaw, n: usize, horizon: usize, n_mc: u64, stream: &RandomStream) -> Result<TailEstimate> {
    joint.validate()?;
    let a = joint.xi_mean();
    if !(a > 0.0) {
        return Err(domain("xi", format!("needs E xi > 0, got {a}")));
    }
    let hits = replicate_fold(
        n_mc,
        stream,
        || 0u64,
        |h, rng, _| {
            let mut s = 0.0;
            for k in 1..=n + horizon {
                s += joint.sample_pair(rng).0;
                if k >= n && s <= 0.5 * a * k as f64 {
                    *h += 1;
                    return;
                }
            }
        },
        |a, b| a + b,
    );
    Ok(TailEstimate::from_counts(n as f64, hits, n_mc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::ScalarLaw;
    use std::f64::consts::E;

    #[test]
    fn scaled_recursion_matches_direct_sum() {
        let j = JointLaw::independent(ScalarLaw::normal(0.3, 1.0), ScalarLaw::exponential(1.0));
        for series in [Series::D, Series::DTilde] {
            for r in 0..20 {
                let st = RandomStream::new(1, r);
                let direct = crate::perpetuity::simulate_d_n(&j, series, 200, &mut st.clone()).ln();
                let scaled = log_d_n(&j, series, 200, &mut st.clone());
                assert!((direct - scaled).abs() < 1e-10, "{direct} {scaled}");
            }
        }
    }

    #[test]
    fn scaled_recursion_survives_overflow() {
        let j = JointLaw::independent(ScalarLaw::point(1.0), ScalarLaw::point(1.0));
        let mut s = RandomStream::new(0, 0);
        let l = log_d_n(&j, Series::D, 5000, &mut s);
        // log Σ_{k<=n} e^k = n + log(1/(1 - e^{-1})) up to e^{-n}
        assert!((l - 5000.0 - (1.0 / (1.0 - 1.0 / E)).ln()).abs() < 1e-9);
        let neg = JointLaw::independent(ScalarLaw::point(-1.0), ScalarLaw::point(1.0));
        let l = log_d_n(&neg, Series::D, 2000, &mut s);
        assert!((l - (-(1.0f64).ln_1p() + (1.0 / (E - 1.0)).ln() + 1.0 - 1.0)).abs() < 1.0);
    }

    #[test]
    fn deterministic_clt_pool_shrinks() {
        let j = JointLaw::independent(ScalarLaw::normal(1.0, 1e-12), ScalarLaw::point(1.0));
        let pool = clt_normalized_pool(&j, Series::D, 100, 10, &RandomStream::new(0, 0)).unwrap();
        let want = (1.0 / (1.0 - 1.0 / E)).ln() / (100.0f64 * 1e-12).sqrt();
        assert!(pool.iter().all(|v| (v / want - 1.0).abs() < 1e-3));
        assert!(clt_normalized_pool(&JointLaw::independent(ScalarLaw::normal(-1.0, 1.0), ScalarLaw::point(1.0)), Series::D, 10, 10, &RandomStream::new(0, 0)).is_err());
    }

    #[test]
    fn local_window_normalisation_and_symmetry() {
        let (a, s2, n, d) = (1.0, 1.0, 2000, 0.01);
        let sd = (n as f64 * s2).sqrt();
        let mut x = n as f64 * a - 6.0 * sd;
        let mut total = 0.0;
        while x < n as f64 * a + 6.0 * sd {
            total += local_window_theoretical(a, s2, n, x, d).unwrap();
            x += d;
        }
        assert!((total - 1.0).abs() < 1e-3);
        let peak = local_window_theoretical(a, s2, n, 2000.0, 0.5).unwrap();
        assert!((peak - 0.5 / (2.0 * std::f64::consts::PI * 2000.0).sqrt()).abs() < 1e-15);
        let l = local_window_theoretical(a, s2, n, 1990.0, 0.5).unwrap();
        let r = local_window_theoretical(a, s2, n, 2010.0, 0.5).unwrap();
        assert!((l - r).abs() < 1e-18);
    }

    #[test]
    fn windows_are_additive() {
        let pool = [0.1, 0.5, 0.7, 1.2, 1.9, 2.5];
        let whole = window_fraction(&pool, 0.0, 3.0);
        assert_eq!(whole.p_hat, 1.0);
        let parts: f64 = [0.0, 1.0, 2.0].iter().map(|&x| window_fraction(&pool, x, 1.0).p_hat).sum();
        assert!((parts - 1.0).abs() < 1e-15);
    }

    #[test]
    fn green_sum_rejects_lattice() {
        let j = JointLaw::independent(ScalarLaw::point(1.0), ScalarLaw::point(1.0));
        assert!(matches!(green_sum(&j, 10.0, 1.0, None, 10, &RandomStream::new(0, 0)), Err(Error::Lattice { .. })));
    }

    #[test]
    fn gamma_pool_checks_drift() {
        let j = JointLaw::independent(ScalarLaw::normal(0.1, 1.0), ScalarLaw::point(1.0));
        assert!(gamma_limit_pool(&j, 10, 10, &RandomStream::new(0, 0)).is_err());
        let z = JointLaw::independent(ScalarLaw::normal(0.0, 1.0), ScalarLaw::point(1.0));
        let p = gamma_limit_pool(&z, 100, 100, &RandomStream::new(0, 0)).unwrap();
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(gamma_limit_params(1.0), (0.5, 2.0));
    }

    #[test]
    fn zero_eta_has_no_jump_gap() {
        let j = JointLaw::independent(ScalarLaw::normal(1.0, 0.01), ScalarLaw::point(0.0));
        let d = jump_diagnostics(&j, &[5.0, 10.0], 10.0, 11, 1000, &RandomStream::new(0, 0)).unwrap();
        for row in d {
            assert_eq!(row.charfn_gap, 0.0);
        }
    }
}
