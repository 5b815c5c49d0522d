//! Model checks run before any simulation starts.

use perp_core::cramer::solve_cramer_joint;
use perp_core::laws::JointLaw;
use perp_core::Error;

use crate::config::{ExperimentConfig, Level, Model, Params};

/// Config key owning a core error's field.
fn key_of(field: &str) -> String {
    let head = field.split('.').next().unwrap_or(field);
    match head {
        "xi" | "eta" | "shift" => format!("model.{field}"),
        "transition" | "atom" | "maps" | "f" | "g" => format!("modulation.{field}"),
        _ => format!("params.{field}"),
    }
}

fn describe(e: &Error, key_for_other: &str) -> String {
    match e {
        Error::Domain { field, reason } => format!("`{}`: {reason}", key_of(field)),
        other => format!("`{key_for_other}`: {other}"),
    }
}

fn drift_negative(joint: &JointLaw, out: &mut Vec<String>) -> f64 {
    let a = -joint.xi_mean();
    if !(a > 0.0) {
        out.push(format!("`model.xi`: this experiment needs E xi < 0, got E xi = {}", -a));
    }
    a
}

fn drift_positive(joint: &JointLaw, out: &mut Vec<String>) {
    let a = joint.xi_mean();
    if !(a > 0.0) {
        out.push(format!("`model.xi`: this experiment needs E xi > 0, got E xi = {a}"));
    }
}

fn transient(joint: &JointLaw, out: &mut Vec<String>) {
    let s2 = joint.xi_variance();
    if !(s2.is_finite() && s2 > 0.0) {
        out.push(format!("`model.xi`: variance must be finite and > 0, got {s2}"));
    }
    if !joint.eta_positive() {
        out.push("`model.eta`: limit theorems for log D_n need eta > 0 almost surely".into());
    }
    if !joint.log1p_eta_second_moment().is_finite() {
        out.push("`model.eta`: E log^2(1 + eta) must be finite".into());
    }
}

fn cramer(joint: &JointLaw, out: &mut Vec<String>) {
    if let Err(e) = solve_cramer_joint(joint) {
        out.push(describe(&e, "model.xi"));
    }
}

/// Every violated precondition of the experiment, phrased with the
/// offending key.
pub fn check(cfg: &ExperimentConfig) -> Vec<String> {
    let mut out = Vec::new();
    let joint = cfg.model.joint();
    if let Err(e) = joint.validate() {
        out.push(describe(&e, "model"));
        return out;
    }
    match &cfg.params {
        Params::TailInfinite(_) | Params::TailFinite(_) => {
            drift_negative(joint, &mut out);
        }
        Params::BigJump(p) => {
            drift_negative(joint, &mut out);
            let delta = joint.eta_lower();
            if !(delta > 0.0) {
                out.push(format!("`model.eta`: big-jump estimate needs eta >= delta > 0, essential infimum is {delta}"));
            }
            if let Level::Log(l) = p.level {
                if !(l > 0.0) {
                    out.push("`params.log_level`: must be > 0".into());
                }
            }
        }
        Params::Cramer(_) => cramer(joint, &mut out),
        Params::Prestationary(_) | Params::Exceedance(_) => {
            cramer(joint, &mut out);
            let level = match &cfg.params {
                Params::Prestationary(p) => p.level,
                Params::Exceedance(p) => p.level,
                _ => unreachable!(),
            };
            if let Level::Log(l) = level {
                if !(l > 1.0) {
                    out.push(format!("`params.log_level`: level x must exceed e, got log x = {l}"));
                }
            }
        }
        Params::Modulated(_) => {
            if let Model::Modulated(spec) = &cfg.model {
                if let Err(e) = spec.validate() {
                    out.push(describe(&e, "modulation"));
                }
            }
        }
        Params::Clt(_) | Params::Local(_) => {
            drift_positive(joint, &mut out);
            transient(joint, &mut out);
        }
        Params::Green(_) => {
            drift_positive(joint, &mut out);
            transient(joint, &mut out);
            if joint.xi_is_lattice() {
                out.push("`model.xi`: the renewal limit needs a non-lattice xi".into());
            }
        }
        Params::Gamma(_) => {
            let a = joint.xi_mean();
            if a.abs() > 1e-12 {
                out.push(format!("`model.xi`: Gamma limit needs E xi = 0, got {a}"));
            }
            transient(joint, &mut out);
        }
        Params::Diagnostics(_) => drift_positive(joint, &mut out),
    }
    out
}
