//! Kolmogorov–Smirnov goodness of fit.

use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{domain, Result};
use crate::numerics::{kolmogorov_sf, normal_cdf};

#[derive(Clone, Debug, PartialEq)]
pub enum Reference {
    StdNormal,
    Gamma { shape: f64, scale: f64 },
    TwoSample,
    Other(String),
}

impl std::fmt::Display for Reference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reference::StdNormal => write!(f, "std-normal"),
            Reference::Gamma { shape, scale } => write!(f, "gamma{{shape={shape}, scale={scale}}}"),
            Reference::TwoSample => write!(f, "two-sample"),
            Reference::Other(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GofResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_samples: u64,
    pub reference: Reference,
}

fn sorted(pool: &[f64], name: &str) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(domain(name, "pool is empty"));
    }
    if pool.iter().any(|v| v.is_nan()) {
        return Err(domain(name, "pool contains NaN"));
    }
    let mut v = pool.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `sup |F_n − F|` against a continuous reference cdf.
pub fn ks_one_sample<F: Fn(f64) -> f64>(pool: &[f64], cdf: F, reference: Reference) -> Result<GofResult> {
    let v = sorted(pool, "pool")?;
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    Ok(GofResult {
        statistic: d,
        p_value: kolmogorov_sf(n.sqrt() * d),
        n_samples: v.len() as u64,
        reference,
    })
}

pub fn ks_std_normal(pool: &[f64]) -> Result<GofResult> {
    ks_one_sample(pool, normal_cdf, Reference::StdNormal)
}

pub fn ks_gamma(pool: &[f64], shape: f64, scale: f64) -> Result<GofResult> {
    let g = Gamma::new(shape, 1.0 / scale).map_err(|e| domain("gamma", e.to_string()))?;
    ks_one_sample(pool, |x| g.cdf(x.max(0.0)), Reference::Gamma { shape, scale })
}

/// `sup |F_n − G_m|` with the `√(nm/(n+m))` scaling for the p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<GofResult> {
    let a = sorted(a, "pool_a")?;
    let b = sorted(b, "pool_b")?;
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(GofResult {
        statistic: d,
        p_value: kolmogorov_sf((n * m / (n + m)).sqrt() * d),
        n_samples: (a.len() + b.len()) as u64,
        reference: Reference::TwoSample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal_quantile;
    use crate::rng::RandomStream;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn quantile_pool_statistic() {
        let n = 999;
        let pool: Vec<f64> = (1..=n).map(|i| normal_quantile(i as f64 / (n + 1) as f64)).collect();
        let r = ks_std_normal(&pool).unwrap();
        assert!((r.statistic - 1.0 / (n + 1) as f64).abs() < 1e-9, "{}", r.statistic);
    }

    #[test]
    fn identical_pools() {
        let p = [0.3, 1.0, -2.0, 5.0];
        assert_eq!(ks_two_sample(&p, &p).unwrap().statistic, 0.0);
        assert!(ks_two_sample(&[], &p).is_err());
        assert!(ks_std_normal(&[]).is_err());
    }

    #[test]
    fn two_sample_handles_ties_and_shift() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [3.0, 4.0, 5.0, 6.0];
        assert_eq!(ks_two_sample(&a, &b).unwrap().statistic, 0.5);
    }

    #[test]
    fn calibration() {
        let mut low = 0;
        for t in 0..100u64 {
            let mut s = RandomStream::new(77, t);
            let pool: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut s)).collect();
            if ks_std_normal(&pool).unwrap().p_value <= 0.001 {
                low += 1;
            }
        }
        assert!(low <= 1);
    }

    #[test]
    fn gamma_reference_accepts_squared_normals() {
        let mut s = RandomStream::new(3, 3);
        let pool: Vec<f64> = (0..20_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut s);
                z * z
            })
            .collect();
        let r = ks_gamma(&pool, 0.5, 2.0).unwrap();
        assert!(r.p_value > 0.001, "{r:?}");
    }
}
