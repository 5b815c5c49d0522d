//! Heavy-tailed regime: integrated-tail asymptotics for `D_∞`, `D_n` and
//! the single-big-jump events.

use crate::error::{domain, Error, Result};
use crate::estimate::TailEstimate;
use crate::laws::{Combine, DerivedLaw, JointLaw};
use crate::perpetuity::{Series, Trajectory};
use crate::rng::{replicate_fold, RandomStream};

/// The law governing the tail of the given series: `H` of
/// `ξ + log(1 + η)` for `D`, `H~` of `max(ξ, log(1 + η))` for `D~`.
pub fn governing_law(joint: &JointLaw, series: Series, n_mc: u64, stream: &RandomStream) -> Result<DerivedLaw> {
    let kind = match series {
        Series::D => Combine::Sum,
        Series::DTilde => Combine::Max,
    };
    DerivedLaw::new(joint, kind, n_mc, stream)
}

fn check_level(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(domain("a", format!("drift -E xi must be > 0, got {a}")));
    }
    if !(x > std::f64::consts::E) {
        return Err(domain("x", format!("level must exceed e, got {x}")));
    }
    Ok(())
}

/// `(1/a) H̄_I(log x)`.
pub fn asymptote_infinite(a: f64, h: &DerivedLaw, x: f64) -> Result<f64> {
    check_level(a, x)?;
    Ok(h.integrated_tail(x.ln()) / a)
}

/// `(1/a) ∫_{log x}^{log x + na} H̄(y) dy`.
pub fn asymptote_finite(a: f64, h: &DerivedLaw, n: usize, x: f64) -> Result<f64> {
    check_level(a, x)?;
    if n == 0 {
        return Err(domain("n", "horizon must be >= 1"));
    }
    let l = x.ln();
    Ok(h.tail_integral(l, l + n as f64 * a) / a)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BigJumpConfig {
    pub c: f64,
    pub eps: f64,
    pub horizon: usize,
    pub level: f64,
}

impl BigJumpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(domain("c", "must be > 0"));
        }
        if !(self.eps > 0.0) {
            return Err(domain("eps", "must be > 0"));
        }
        if self.horizon == 0 {
            return Err(domain("horizon", "must be >= 1"));
        }
        if !(self.level > 0.0) {
            return Err(domain("level", "must be > 0"));
        }
        Ok(())
    }
}

/// Smallest `k` in `0..n` for which `B_k` (or `B~_k`) holds on the path
/// given by `pairs`.
///
/// The prefix condition only tightens as `k` grows, so the scan stops at the
/// first `j` that violates it.
pub fn classify_pairs(pairs: &[(f64, f64)], cfg: &BigJumpConfig, a: f64, series: Series) -> Result<Option<usize>> {
    if let Some(&(_, e)) = pairs.iter().find(|&&(_, e)| !(e > 0.0)) {
        return Err(domain("eta", format!("big-jump events need eta > 0 on the path, found {e}")));
    }
    let log_x = cfg.level.ln();
    let mut s = 0.0;
    for (k, &(xi, eta)) in pairs.iter().enumerate() {
        // pairs[k] is step k + 1
        let big = match series {
            Series::D => xi + eta.ln(),
            Series::DTilde => xi.max(eta.ln()),
        };
        if big > log_x + k as f64 * a {
            return Ok(Some(k));
        }
        let j = (k + 1) as f64;
        s += xi;
        let bound = 0.5 * (j * cfg.eps + cfg.c);
        let ok = (s + a * j).abs() <= bound
            && eta.ln() <= bound
            && match series {
                Series::D => true,
                Series::DTilde => xi <= bound,
            };
        if !ok {
            return Ok(None);
        }
    }
    Ok(None)
}

/// [`classify_pairs`] over a stored trajectory.
pub fn classify_big_jump(traj: &Trajectory<f64>, cfg: &BigJumpConfig, a: f64, series: Series) -> Result<Option<usize>> {
    let pairs: Vec<(f64, f64)> = traj.xi.iter().copied().zip(traj.eta.iter().copied()).collect();
    classify_pairs(&pairs, cfg, a, series)
}

/// Estimate of `P{∪_{k<n} B_k | D_n > x}` by crude Monte Carlo: simulate
/// `n_mc` paths, keep those with `D_n > x`, classify each.
///
/// `n_samples` of the result is the number of conditioning exceedances.
pub fn conditional_big_jump_prob(
    joint: &JointLaw,
    cfg: &BigJumpConfig,
    a: f64,
    series: Series,
    n_mc: u64,
    stream: &RandomStream,
) -> Result<TailEstimate> {
    cfg.validate()?;
    joint.validate()?;
    let delta = joint.eta_lower();
    if !(delta > 0.0) {
        return Err(domain("eta", format!("big-jump estimate needs eta >= delta > 0, essential infimum is {delta}")));
    }
    let n = cfg.horizon;
    let (exceed, hits, err) = replicate_fold(
        n_mc,
        stream,
        || (0u64, 0u64, None::<Error>),
        |acc, rng, _| {
            let pairs: Vec<(f64, f64)> = (0..n).map(|_| joint.sample_pair(&mut *rng)).collect();
            let mut s = 0.0f64;
            let mut e_prev = 1.0f64;
            let mut d = 0.0f64;
            for &(x, e) in &pairs {
                s += x;
                let e_s = s.exp();
                d += match series {
                    Series::D => e * e_s,
                    Series::DTilde => e * e_prev,
                };
                e_prev = e_s;
            }
            if d > cfg.level {
                acc.0 += 1;
                match classify_pairs(&pairs, cfg, a, series) {
                    Ok(Some(_)) => acc.1 += 1,
                    Ok(None) => {}
                    Err(e) => acc.2 = acc.2.take().or(Some(e)),
                }
            }
        },
        |l, r| (l.0 + r.0, l.1 + r.1, l.2.or(r.2)),
    );
    if let Some(e) = err {
        return Err(e);
    }
    if exceed == 0 {
        return Err(Error::InsufficientData {
            context: format!("no path with D_n > {}", cfg.level),
            attempted: n_mc,
        });
    }
    Ok(TailEstimate::from_counts(cfg.level, hits, exceed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::ScalarLaw;

    /// `ξ ≡ -1` and `log(1 + η) = 1 + Pareto{2, 1}`, so `H = Pareto{2, 1}`
    /// and `a = 1`.
    fn pareto_h() -> JointLaw {
        JointLaw::independent(
            ScalarLaw::point(-1.0),
            ScalarLaw::log_one_plus(ScalarLaw::shifted(ScalarLaw::pareto(2.0, 1.0), 1.0)),
        )
    }

    #[test]
    fn infinite_asymptote_closed_form() {
        let s = RandomStream::new(0, 0);
        let h = governing_law(&pareto_h(), Series::D, 1000, &s).unwrap();
        assert!(matches!(h, DerivedLaw::Analytic { .. }));
        let x = 9f64.exp();
        assert!((asymptote_infinite(1.0, &h, x).unwrap() - 0.1).abs() < 1e-12);
        assert!((asymptote_infinite(2.0, &h, x).unwrap() - 0.05).abs() < 1e-12);
        assert!(asymptote_infinite(1.0, &h, 2.0).is_err());
        assert!(asymptote_infinite(0.0, &h, x).is_err());
    }

    #[test]
    fn finite_asymptote_is_monotone_and_converges() {
        let s = RandomStream::new(0, 0);
        let h = governing_law(&pareto_h(), Series::D, 1000, &s).unwrap();
        let x = 5f64.exp();
        let inf = asymptote_infinite(1.0, &h, x).unwrap();
        let mut prev = 0.0;
        for n in [1, 2, 5, 10, 100, 1000] {
            let v = asymptote_finite(1.0, &h, n, x).unwrap();
            assert!(v >= prev && v <= inf + 1e-12);
            prev = v;
        }
        let far = asymptote_finite(1.0, &h, 10_000_000, x).unwrap();
        assert!((far - inf).abs() < 1e-6);
    }

    #[test]
    fn finite_asymptote_flat_tail() {
        // H̄ ≡ 1 on the window when H is a point mass far to the right
        let j = JointLaw::independent(ScalarLaw::point(0.0), ScalarLaw::point(100f64.exp_m1()));
        let s = RandomStream::new(0, 0);
        let h = governing_law(&j, Series::D, 10, &s).unwrap();
        let v = asymptote_finite(0.5, &h, 1, 10f64.exp()).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    fn cfg(level: f64) -> BigJumpConfig {
        BigJumpConfig {
            c: 2.0,
            eps: 0.1,
            horizon: 10,
            level,
        }
    }

    #[test]
    fn injected_jump_is_found() {
        let a = 1.0;
        let log_x = 20.0;
        for k in 0..5usize {
            let mut pairs = vec![(-a, 1.0); 10];
            // xi + log eta at step k+1 equals log x + ka + 1
            pairs[k] = (-a, (log_x + k as f64 * a + 1.0 + a).exp());
            assert_eq!(classify_pairs(&pairs, &cfg(log_x.exp()), a, Series::D).unwrap(), Some(k));
        }
        let quiet = vec![(-a, 1.0); 10];
        assert_eq!(classify_pairs(&quiet, &cfg(log_x.exp()), a, Series::D).unwrap(), None);
        assert!(classify_pairs(&[(-1.0, 0.0)], &cfg(10.0), a, Series::D).is_err());
    }
}
