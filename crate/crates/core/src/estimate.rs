//! Probability estimates with their sampling error.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateMethod {
    /// Deterministic evaluation (closed form or quadrature); `std_err` is 0.
    Exact,
    Crude,
    Tilted,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailEstimate {
    pub level_x: f64,
    pub p_hat: f64,
    pub std_err: f64,
    pub n_samples: u64,
    pub method: EstimateMethod,
}

impl TailEstimate {
    pub fn exact(level_x: f64, p: f64) -> Self {
        Self {
            level_x,
            p_hat: p.clamp(0.0, 1.0),
            std_err: 0.0,
            n_samples: 0,
            method: EstimateMethod::Exact,
        }
    }

    /// Crude Monte Carlo proportion with the binomial standard error.
    pub fn from_counts(level_x: f64, hits: u64, n: u64) -> Self {
        let p = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
        let se = if n == 0 { f64::NAN } else { (p * (1.0 - p) / n as f64).sqrt() };
        Self {
            level_x,
            p_hat: p,
            std_err: se,
            n_samples: n,
            method: EstimateMethod::Crude,
        }
    }

    /// Crude estimate of `P{Z > x}` from a pool of draws of `Z`.
    pub fn from_pool(level_x: f64, pool: &[f64]) -> Self {
        let hits = pool.iter().filter(|&&v| v > level_x).count() as u64;
        Self::from_counts(level_x, hits, pool.len() as u64)
    }

    /// Number of standard errors separating two independent estimates.
    pub fn z_against(&self, other: &TailEstimate) -> f64 {
        let se = (self.std_err.powi(2) + other.std_err.powi(2)).sqrt();
        if se == 0.0 {
            if self.p_hat == other.p_hat {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.p_hat - other.p_hat).abs() / se
        }
    }
}

/// Mean of a Monte Carlo functional with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McMean {
    pub mean: f64,
    pub std_err: f64,
    pub n: u64,
}

impl From<crate::rng::Moments> for McMean {
    fn from(m: crate::rng::Moments) -> Self {
        McMean {
            mean: m.mean,
            std_err: m.std_err(),
            n: m.n,
        }
    }
}
