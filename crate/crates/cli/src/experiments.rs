//! One runner per experiment kind. Each draws only from children of the
//! root stream, so results depend on the seed and nothing else.

use perp_core::cramer::{
    exceedance_horizon, exceedance_time_cdf, exceedance_time_empirical, goldie_constant_empirical, goldie_constant_plugin, hill_default_k, hill_estimate,
    prestationary_empirical, prestationary_tail, solve_cramer_joint, CramerParams, GoldieConfig,
};
use perp_core::gof::{ks_gamma, ks_std_normal, GofResult};
use perp_core::laws::JointLaw;
use perp_core::limits::{clt_normalized_pool, gamma_limit_params, gamma_limit_pool, green_sum, jump_diagnostics, local_window_theoretical, log_d_pool, walk_excursion_prob, window_fraction};
use perp_core::modulated::{check_conditions, modulated_tail, stationary_dist, stationary_residual, ModulatedSpec, ModulatedTailConfig};
use perp_core::numerics::sorted_quantile;
use perp_core::perpetuity::{d_infinity_pool, simulate_d_n, DInfSampler};
use perp_core::rng::{replicate_map, RandomStream};
use perp_core::subexp::{asymptote_finite, asymptote_infinite, conditional_big_jump_prob, governing_law, BigJumpConfig};
use perp_core::{Error, Result, TailEstimate};

use crate::config::{self, ExperimentConfig, Level, Model, Params};
use crate::report::Report;

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    let mut rep = Report::new(cfg.kind.name(), &cfg.name);
    let root = RandomStream::new(cfg.seed, 0);
    let joint = cfg.model.joint();
    match &cfg.params {
        Params::TailInfinite(p) => tail_infinite(joint, p, &root, &mut rep)?,
        Params::TailFinite(p) => tail_finite(joint, p, &root, &mut rep)?,
        Params::BigJump(p) => big_jump(joint, p, &root, &mut rep)?,
        Params::Cramer(p) => cramer(joint, p, &root, &mut rep)?,
        Params::Prestationary(p) => prestationary(joint, p, &root, &mut rep)?,
        Params::Exceedance(p) => exceedance(joint, p, &root, &mut rep)?,
        Params::Modulated(p) => match &cfg.model {
            Model::Modulated(spec) => modulated(spec, p, &root, &mut rep)?,
            Model::Iid(_) => return Err(Error::Domain {
                field: "modulation".into(),
                reason: "modulated experiment needs a modulation section".into(),
            }),
        },
        Params::Clt(p) => clt(joint, p, &root, &mut rep)?,
        Params::Local(p) => local(joint, p, &root, &mut rep)?,
        Params::Green(p) => green(joint, p, &root, &mut rep)?,
        Params::Gamma(p) => gamma(joint, p, &root, &mut rep)?,
        Params::Diagnostics(p) => diagnostics(joint, p, &root, &mut rep)?,
    }
    Ok(rep)
}

fn tail_row(rep: &mut Report, label: &str, log_x: f64, theo: f64, e: &TailEstimate) {
    rep.compare(label, Some(log_x), theo, e.p_hat, e.std_err);
}

fn tail_infinite(joint: &JointLaw, p: &config::TailInfinite, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let a = -joint.xi_mean();
    let h = governing_law(joint, p.series, p.h_mc, &root.child(0))?;
    let sampler = DInfSampler::new(joint, p.series, p.dinf)?;
    let draws = d_infinity_pool(&sampler, p.n_mc, &root.child(1));
    let open = draws.iter().filter(|d| !d.converged).count();
    let pool: Vec<f64> = draws.into_iter().map(|d| d.value).collect();
    for &l in &p.log_levels {
        let x = l.exp();
        let e = TailEstimate::from_pool(x, &pool);
        tail_row(rep, "P{D_inf > x}", l, asymptote_infinite(a, &h, x)?, &e);
    }
    rep.set("a", a);
    rep.set("unconverged_draws", open as u64);
    Ok(())
}

fn tail_finite(joint: &JointLaw, p: &config::TailFinite, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let a = -joint.xi_mean();
    let h = governing_law(joint, p.series, p.h_mc, &root.child(0))?;
    let pool = replicate_map(p.n_mc, &root.child(1), |rng, _| simulate_d_n(joint, p.series, p.n, rng));
    for &l in &p.log_levels {
        let x = l.exp();
        let e = TailEstimate::from_pool(x, &pool);
        tail_row(rep, "P{D_n > x}", l, asymptote_finite(a, &h, p.n, x)?, &e);
    }
    rep.set("a", a);
    rep.set("n", p.n as u64);
    Ok(())
}

/// Upper `q`-quantile of `D_n` from a pilot pool.
pub fn pilot_level(joint: &JointLaw, series: perp_core::perpetuity::Series, n: usize, q: f64, n_pilot: u64, stream: &RandomStream) -> f64 {
    let mut pool = replicate_map(n_pilot, stream, |rng, _| simulate_d_n(joint, series, n, rng));
    pool.sort_by(f64::total_cmp);
    sorted_quantile(&pool, 1.0 - q)
}

fn big_jump(joint: &JointLaw, p: &config::BigJump, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let a = -joint.xi_mean();
    let x = match p.level {
        Level::Log(l) => l.exp(),
        Level::Quantile(q) => pilot_level(joint, p.series, p.n, q, p.n_pilot, &root.child(0)),
        Level::Tail(_) => unreachable!("rejected by the parser"),
    };
    let cfg = BigJumpConfig {
        c: p.c,
        eps: p.eps,
        horizon: p.n,
        level: x,
    };
    let e = conditional_big_jump_prob(joint, &cfg, a, p.series, p.n_mc, &root.child(1))?;
    rep.push("P{big jump | D_n > x}", Some(x.ln()), Some(1.0), Some(e.p_hat), Some(e.std_err), "theoretical value is the limit as x -> infinity");
    rep.push("exceedances", Some(x.ln()), None, Some(e.n_samples as f64), None, "paths with D_n > x; no theoretical count");
    rep.set("x", x);
    rep.set("a", a);
    Ok(())
}

fn hill_se(hill: f64, k: usize) -> f64 {
    hill / (k as f64).sqrt()
}

fn cramer(joint: &JointLaw, p: &config::Cramer, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let params = solve_cramer_joint(joint)?;
    let sampler = DInfSampler::new(joint, p.series, p.dinf)?;
    let pool: Vec<f64> = d_infinity_pool(&sampler, p.n_mc, &root.child(0)).into_iter().map(|d| d.value).collect();
    let k = p.hill_k.unwrap_or_else(|| hill_default_k(pool.len()));
    let hill = hill_estimate(&pool, k)?;
    rep.compare("beta", None, params.beta, hill, hill_se(hill, k));
    rep.push("alpha", None, Some(params.alpha), None, None, "closed form only");
    rep.push("sigma2", None, Some(params.sigma2), None, None, "closed form only");
    let plugin = goldie_constant_plugin(joint, &params, &p.goldie, &root.child(1))?;
    let grid: Vec<f64> = p.log_levels.iter().map(|l| l.exp()).collect();
    match goldie_constant_empirical(&pool, params.beta, &grid) {
        Ok(emp) => {
            let se = plugin.std_err.hypot(emp.estimate.std_err);
            let note = if plugin.warning { "plugin average dominated by a few terms" } else { "" };
            rep.push("goldie_c", None, Some(plugin.c), Some(emp.estimate.c), Some(se), note);
            for (x, v, s) in &emp.levels {
                rep.compare("x^beta P{D > x}", Some(x.ln()), plugin.c, *v, *s);
            }
            rep.push("plateau_ratio", None, Some(1.0), Some(emp.plateau_ratio), None, "max/min of x^beta P{D > x} over the grid");
            rep.set("c_empirical", emp.estimate.c);
        }
        Err(e) => {
            rep.push("goldie_c", None, Some(plugin.c), None, Some(plugin.std_err), format!("empirical estimate unavailable: {e}"));
        }
    }
    rep.set("beta", params.beta);
    rep.set("alpha", params.alpha);
    rep.set("sigma2", params.sigma2);
    rep.set("hill", hill);
    rep.set("c_plugin", plugin.c);
    Ok(())
}

/// Cramér parameters with the plugin Goldie constant.
fn with_goldie(joint: &JointLaw, goldie: &GoldieConfig, stream: &RandomStream) -> Result<CramerParams> {
    let params = solve_cramer_joint(joint)?;
    let c = goldie_constant_plugin(joint, &params, goldie, stream)?;
    Ok(params.with_c(c))
}

fn level_x(params: &CramerParams, level: Level) -> Result<f64> {
    let x = match level {
        Level::Log(l) => l.exp(),
        Level::Tail(t) => {
            let c = params.c.map(|g| g.c).unwrap_or(f64::NAN);
            (c / t).powf(1.0 / params.beta)
        }
        Level::Quantile(_) => unreachable!("rejected by the parser"),
    };
    if !(x > std::f64::consts::E) {
        return Err(Error::Domain {
            field: "level".into(),
            reason: format!("level x must exceed e, got {x}"),
        });
    }
    Ok(x)
}

fn horizons(params: &CramerParams, x: f64, factors: &[f64]) -> Vec<usize> {
    factors.iter().map(|f| ((f * x.ln() / params.alpha).ceil() as usize).max(1)).collect()
}

fn prestationary(joint: &JointLaw, p: &config::Prestationary, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let params = with_goldie(joint, &p.goldie, &root.child(0))?;
    let x = level_x(&params, p.level)?;
    let grid = horizons(&params, x, &p.n_factors);
    let emp = prestationary_empirical(joint, p.series, &grid, x, p.n_mc, &root.child(1))?;
    let c = params.c.expect("set above").c;
    let scale = c * x.powf(-params.beta);
    let mut sup = 0.0f64;
    for (&n, e) in grid.iter().zip(&emp) {
        let t = prestationary_tail(&params, n, x)?;
        sup = sup.max((e.p_hat - t).abs() / scale);
        rep.compare("P{D_n > x}", Some(n as f64), t, e.p_hat, e.std_err);
    }
    rep.push("c x^-beta", Some(x.ln()), Some(scale), None, None, "stationary tail from the plugin constant");
    rep.push("sup gap / c x^-beta", Some(x.ln()), Some(0.0), Some(sup), None, "sup over the horizon grid");
    rep.set("x", x);
    rep.set("c_plugin", c);
    rep.set("sup_normalised_gap", sup);
    Ok(())
}

fn exceedance(joint: &JointLaw, p: &config::Exceedance, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let params = match p.level {
        Level::Tail(_) => with_goldie(joint, &p.goldie, &root.child(0))?,
        _ => solve_cramer_joint(joint)?,
    };
    let x = level_x(&params, p.level)?;
    let grid = horizons(&params, x, &p.n_factors);
    let n_max = grid.iter().copied().max().unwrap_or(1);
    let n_inf = p.n_inf.unwrap_or_else(|| exceedance_horizon(&params, x)).max(n_max);
    let emp = exceedance_time_empirical(joint, &grid, x, n_inf, p.n_mc, &root.child(1))?;
    let mut sup = 0.0f64;
    for (&n, e) in grid.iter().zip(&emp) {
        let t = exceedance_time_cdf(&params, n, x)?;
        sup = sup.max((e.p_hat - t).abs());
        rep.compare("P{T_x <= n | T_x < inf}", Some(n as f64), t, e.p_hat, e.std_err);
    }
    rep.push("sup gap", Some(x.ln()), Some(0.0), Some(sup), None, "sup over the horizon grid");
    rep.set("x", x);
    rep.set("n_inf", n_inf as u64);
    rep.set("sup_gap", sup);
    Ok(())
}

fn modulated(spec: &ModulatedSpec, p: &config::Modulated, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let rho = stationary_dist(&spec.transition)?;
    let resid = stationary_residual(&spec.transition, &rho);
    for (i, r) in rho.iter().enumerate() {
        rep.push(format!("stationary[{i}]"), Some(i as f64), Some(*r), None, None, format!("LU solve, residual {resid:.3e}"));
    }
    let levels: Vec<f64> = p.log_levels.iter().map(|l| l.exp()).collect();
    let cfg = ModulatedTailConfig {
        dinf: p.dinf,
        n_cycles: p.n_cycles,
        n_boot: p.n_boot,
        goldie: p.goldie,
        hill_k: p.hill_k,
    };
    let mt = modulated_tail(spec, &levels, p.n_mc, &cfg, &root.child(0))?;
    let tau = mt.mean_tau;
    rep.compare("mean_tau", Some(spec.atom as f64), 1.0 / rho[spec.atom], tau.mean, tau.std_err);
    let k = p.hill_k.unwrap_or_else(|| hill_default_k(p.n_mc as usize));
    match mt.cycle_beta {
        Some(b) => rep.push("cycle_beta", None, None, Some(b.beta), Some(b.std_err), "root of E e^{beta S_tau} = 1 over the cycle pool"),
        None => rep.push("cycle_beta", None, None, None, None, "no usable cycle root"),
    }
    let cb = mt.cycle_beta.map(|b| b.beta);
    match mt.hill {
        Some(h) => rep.push("hill", None, cb, Some(h), Some(hill_se(h, k)), if cb.is_some() { "" } else { "no cycle root to compare with" }),
        None => rep.push("hill", None, cb, None, None, "Hill estimate unavailable"),
    }
    rep.push("phi_hat_root", None, mt.phi_hat_beta, None, None, "root of the stationary-averaged mgf; a reference value, not the tail index");
    if let Some(c) = mt.cycle_c {
        rep.push("cycle_c", None, None, Some(c.c), Some(c.std_err), "Goldie constant of the cycle pair");
    }
    for ((l, e), t) in p.log_levels.iter().zip(&mt.direct).zip(&mt.cycle_tail) {
        let note = if t.is_some() { "" } else { "no cycle reduction" };
        rep.push("P{D_inf > x}", Some(*l), *t, Some(e.p_hat), Some(e.std_err), note);
    }
    if let Some(b) = cb {
        let c = check_conditions(spec, b, p.conditions_mc, &root.child(1))?;
        rep.push("condition c1", None, Some(c.c1), None, None, "bound on the state maps");
        rep.push("condition c2", None, Some(c.c2), None, None, "bound on the state maps");
        rep.push("condition K", None, Some(c.k), None, None, "per-step growth bound");
        rep.push("taboo_radius", None, Some(c.taboo_radius), None, None, "spectral radius of the chain killed at the atom");
        rep.push("moment_ok", None, Some(c.moment_ok as u8 as f64), None, None, "1 when K times the taboo radius is below 1");
        rep.push("cycle moment", None, None, Some(c.moment_empirical.mean), Some(c.moment_empirical.std_err), "cycle average of tau^max(beta,1) K^tau");
        rep.set("cycle_beta", b);
    }
    rep.set("stationary", rho);
    rep.set("mean_tau", tau.mean);
    if let Some(h) = mt.hill {
        rep.set("hill", h);
    }
    Ok(())
}

/// `(mean, s.e. of mean, variance, s.e. of variance)` of a pool.
pub fn pool_moments(pool: &[f64]) -> (f64, f64, f64, f64) {
    let n = pool.len() as f64;
    let mean = pool.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &v in pool {
        let d = (v - mean) * (v - mean);
        m2 += d;
        m4 += d * d;
    }
    let var = m2 / (n - 1.0);
    let m4 = m4 / n;
    (mean, (var / n).sqrt(), var, ((m4 - var * var).max(0.0) / n).sqrt())
}

fn ks_rows(rep: &mut Report, g: &GofResult) {
    let r = g.reference.to_string();
    rep.push("ks_statistic", None, None, Some(g.statistic), None, format!("against {r}"));
    rep.push("ks_p_value", None, None, Some(g.p_value), None, format!("asymptotic Kolmogorov p-value against {r}"));
}

fn clt(joint: &JointLaw, p: &config::Clt, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let pool = clt_normalized_pool(joint, p.series, p.n, p.n_mc, &root.child(0))?;
    let g = ks_std_normal(&pool)?;
    ks_rows(rep, &g);
    let (m, sm, v, sv) = pool_moments(&pool);
    rep.compare("mean", Some(p.n as f64), 0.0, m, sm);
    rep.compare("variance", Some(p.n as f64), 1.0, v, sv);
    rep.set("ks_statistic", g.statistic);
    rep.set("ks_p_value", g.p_value);
    rep.set("variance", v);
    Ok(())
}

fn local(joint: &JointLaw, p: &config::Local, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let (a, s2) = (joint.xi_mean(), joint.xi_variance());
    let pool = log_d_pool(joint, p.series, p.n, p.n_mc, &root.child(0));
    let sd = (p.n as f64 * s2).sqrt();
    let centre = p.n as f64 * a;
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    for j in 0..p.points {
        let z = if p.points == 1 { 0.0 } else { -p.sd_span + 2.0 * p.sd_span * j as f64 / (p.points - 1) as f64 };
        let x = centre + z * sd;
        let t = local_window_theoretical(a, s2, p.n, x, p.delta)?;
        let e = window_fraction(&pool, x, p.delta);
        let central = z.abs() <= p.central_sd + 1e-12;
        if central {
            rel = rel.max((e.p_hat / t - 1.0).abs());
        }
        abs = abs.max((e.p_hat - t).abs() / (e.std_err + 1.0 / p.n as f64));
        rep.push("window", Some(x), Some(t), Some(e.p_hat), Some(e.std_err), if central { "central" } else { "" });
    }
    rep.set("max_relative_gap_central", rel);
    rep.set("max_gap_over_se_plus_inv_n", abs);
    Ok(())
}

fn green(joint: &JointLaw, p: &config::Green, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let g = green_sum(joint, p.x, p.h, p.n_max, p.n_mc, &root.child(0))?;
    rep.push("green_sum", Some(p.x), Some(g.limit), Some(g.value), Some(g.std_err), format!("n_max = {}", g.n_max));
    rep.set("green_sum", g.value);
    rep.set("limit", g.limit);
    Ok(())
}

fn gamma(joint: &JointLaw, p: &config::Gamma, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let pool = gamma_limit_pool(joint, p.n, p.n_mc, &root.child(0))?;
    let s2 = joint.xi_variance();
    let (shape, scale) = gamma_limit_params(s2);
    let g = ks_gamma(&pool, shape, scale)?;
    ks_rows(rep, &g);
    let (m, sm, v, sv) = pool_moments(&pool);
    rep.compare("mean", Some(p.n as f64), s2, m, sm);
    rep.compare("variance", Some(p.n as f64), 2.0 * s2 * s2, v, sv);
    rep.set("ks_statistic", g.statistic);
    rep.set("ks_p_value", g.p_value);
    Ok(())
}

fn diagnostics(joint: &JointLaw, p: &config::Diagnostics, root: &RandomStream, rep: &mut Report) -> Result<()> {
    let (a, s2) = (joint.xi_mean(), joint.xi_variance());
    let rows = jump_diagnostics(joint, &p.y_grid, p.lambda_max, p.n_lambda, p.n_mc, &root.child(0))?;
    for d in &rows {
        rep.compare("jump_mean", Some(d.y), a, d.mean.mean, d.mean.std_err);
        rep.push("jump_variance", Some(d.y), Some(s2), Some(d.variance), None, "no standard error");
        rep.push("charfn_gap", Some(d.y), Some(0.0), Some(d.charfn_gap), None, format!("sup over lambda in [0, {}]", p.lambda_max));
    }
    let walks = root.child(1);
    for (i, &n) in p.excursion_n.iter().enumerate() {
        let e = walk_excursion_prob(joint, n, p.excursion_horizon, p.n_mc, &walks.child(i as u64))?;
        rep.push("walk_excursion", Some(n as f64), None, Some(e.p_hat), Some(e.std_err), format!("P{{S_k <= k a/2 for some k in [n, n + {}]}}; bound only", p.excursion_horizon));
    }
    Ok(())
}
