//! Flat `key = value` experiment configuration.
//!
//! Keys are dotted paths (`model.xi.kind = normal`). `#` starts a comment.
//! Parsing never stops at the first problem: every unknown, duplicate,
//! missing or out-of-range key is reported together.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use perp_core::cramer::GoldieConfig;
use perp_core::laws::{JointLaw, ScalarLaw};
use perp_core::modulated::{AffineMap, ModulatedSpec};
use perp_core::perpetuity::{DInfConfig, Series};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ExperimentKind {
    TailInfinite,
    TailFinite,
    BigJump,
    Cramer,
    Prestationary,
    Exceedance,
    Modulated,
    Clt,
    Local,
    Green,
    Gamma,
    Diagnostics,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        ExperimentKind::TailInfinite,
        ExperimentKind::TailFinite,
        ExperimentKind::BigJump,
        ExperimentKind::Cramer,
        ExperimentKind::Prestationary,
        ExperimentKind::Exceedance,
        ExperimentKind::Modulated,
        ExperimentKind::Clt,
        ExperimentKind::Local,
        ExperimentKind::Green,
        ExperimentKind::Gamma,
        ExperimentKind::Diagnostics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TailInfinite => "tail-infinite",
            ExperimentKind::TailFinite => "tail-finite",
            ExperimentKind::BigJump => "big-jump",
            ExperimentKind::Cramer => "cramer",
            ExperimentKind::Prestationary => "prestationary",
            ExperimentKind::Exceedance => "exceedance",
            ExperimentKind::Modulated => "modulated",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Local => "local",
            ExperimentKind::Green => "green",
            ExperimentKind::Gamma => "gamma",
            ExperimentKind::Diagnostics => "diagnostics",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ExperimentKind::TailInfinite => "P{D_inf > x} against the integrated-tail asymptote (heavy tails)",
            ExperimentKind::TailFinite => "P{D_n > x} against the finite-horizon window integral (heavy tails)",
            ExperimentKind::BigJump => "probability of a single big jump given D_n > x",
            ExperimentKind::Cramer => "Cramer exponent, Hill index and the two Goldie constant estimators",
            ExperimentKind::Prestationary => "P{D_n > x} against c x^-beta times the normal factor",
            ExperimentKind::Exceedance => "conditional law of the first exceedance time of level x",
            ExperimentKind::Modulated => "Markov-modulated perpetuity: direct tail, Hill index and cycle reduction",
            ExperimentKind::Clt => "normalised log D_n against the standard normal",
            ExperimentKind::Local => "P{log D_n in (x, x + delta]} against the Gaussian window",
            ExperimentKind::Green => "expected visits of log D_n to (x, x + h] against h / E xi",
            ExperimentKind::Gamma => "log^2 D_n / n against Gamma(1/2, 2 sigma^2) when E xi = 0",
            ExperimentKind::Diagnostics => "moments and characteristic-function gap of the exact jump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Iid(JointLaw),
    Modulated(ModulatedSpec),
}

impl Model {
    /// The driving i.i.d. law, or the base law of a modulated model.
    pub fn joint(&self) -> &JointLaw {
        match self {
            Model::Iid(j) => j,
            Model::Modulated(m) => &m.base,
        }
    }
}

/// How the level `x` of an experiment is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Level {
    /// `x = e^v`.
    Log(f64),
    /// `x` at this upper quantile of a pilot pool.
    Quantile(f64),
    /// `x` solving `c x^{-β} = p`.
    Tail(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailInfinite {
    pub series: Series,
    pub log_levels: Vec<f64>,
    pub n_mc: u64,
    pub h_mc: u64,
    pub dinf: DInfConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TailFinite {
    pub series: Series,
    pub n: usize,
    pub log_levels: Vec<f64>,
    pub n_mc: u64,
    pub h_mc: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BigJump {
    pub series: Series,
    pub n: usize,
    pub c: f64,
    pub eps: f64,
    pub level: Level,
    pub n_pilot: u64,
    pub n_mc: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cramer {
    pub series: Series,
    pub log_levels: Vec<f64>,
    pub n_mc: u64,
    pub hill_k: Option<usize>,
    pub goldie: GoldieConfig,
    pub dinf: DInfConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prestationary {
    pub series: Series,
    pub level: Level,
    pub n_factors: Vec<f64>,
    pub n_mc: u64,
    pub goldie: GoldieConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exceedance {
    pub level: Level,
    pub n_factors: Vec<f64>,
    pub n_inf: Option<usize>,
    pub n_mc: u64,
    pub goldie: GoldieConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Modulated {
    pub log_levels: Vec<f64>,
    pub n_mc: u64,
    pub n_cycles: u64,
    pub n_boot: u64,
    pub conditions_mc: u64,
    pub hill_k: Option<usize>,
    pub goldie: GoldieConfig,
    pub dinf: DInfConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clt {
    pub series: Series,
    pub n: usize,
    pub n_mc: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Local {
    pub series: Series,
    pub n: usize,
    pub delta: f64,
    pub sd_span: f64,
    pub points: usize,
    pub central_sd: f64,
    pub n_mc: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Green {
    pub x: f64,
    pub h: f64,
    pub n_max: Option<usize>,
    pub n_mc: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gamma {
    pub n: usize,
    pub n_mc: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub y_grid: Vec<f64>,
    pub lambda_max: f64,
    pub n_lambda: usize,
    pub n_mc: u64,
    pub excursion_n: Vec<usize>,
    pub excursion_horizon: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Params {
    TailInfinite(TailInfinite),
    TailFinite(TailFinite),
    BigJump(BigJump),
    Cramer(Cramer),
    Prestationary(Prestationary),
    Exceedance(Exceedance),
    Modulated(Modulated),
    Clt(Clt),
    Local(Local),
    Green(Green),
    Gamma(Gamma),
    Diagnostics(Diagnostics),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// File stem of the outputs; defaults to the kind.
    pub name: String,
    pub seed: u64,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub model: Model,
    pub params: Params,
}

/// Every problem found in a configuration, one message per entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry {
    line: usize,
    value: String,
}

type Check = fn(f64) -> Option<&'static str>;

fn finite(v: f64) -> Option<&'static str> {
    (!v.is_finite()).then_some("must be finite")
}

fn positive(v: f64) -> Option<&'static str> {
    (!(v > 0.0 && v.is_finite())).then_some("must be > 0")
}

fn nonnegative(v: f64) -> Option<&'static str> {
    (!(v >= 0.0 && v.is_finite())).then_some("must be >= 0")
}

fn unit_open(v: f64) -> Option<&'static str> {
    (!(v > 0.0 && v < 1.0)).then_some("must lie in (0, 1)")
}

struct Reader {
    entries: BTreeMap<String, Entry>,
    used: BTreeSet<String>,
    errors: Vec<String>,
}

impl Reader {
    fn parse(text: &str) -> Self {
        let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
        let mut errors = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                errors.push(format!("line {line}: expected `key = value`"));
                continue;
            };
            let key = k.trim().to_string();
            let value = v.trim().to_string();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
                errors.push(format!("line {line}: malformed key `{key}`"));
                continue;
            }
            if value.is_empty() {
                errors.push(format!("line {line}: `{key}` has an empty value"));
                continue;
            }
            if let Some(prev) = entries.get(&key) {
                errors.push(format!("line {line}: duplicate key `{key}` (first set on line {})", prev.line));
                continue;
            }
            entries.insert(key, Entry { line, value });
        }
        Reader {
            entries,
            used: BTreeSet::new(),
            errors,
        }
    }

    fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        let e = self.entries.get(key)?;
        self.used.insert(key.to_string());
        Some((e.line, e.value.clone()))
    }

    fn missing(&mut self, key: &str) {
        self.errors.push(format!("missing required key `{key}`"));
    }

    fn bad(&mut self, line: usize, key: &str, msg: impl fmt::Display) {
        self.errors.push(format!("line {line}: `{key}` {msg}"));
    }

    fn opt_str(&mut self, key: &str) -> Option<String> {
        self.raw(key).map(|(_, v)| v)
    }

    fn req_str(&mut self, key: &str) -> Option<String> {
        let v = self.opt_str(key);
        if v.is_none() {
            self.missing(key);
        }
        v
    }

    fn opt_f64(&mut self, key: &str, check: Check) -> Option<f64> {
        let (line, v) = self.raw(key)?;
        match v.parse::<f64>() {
            Ok(x) => match check(x) {
                None => Some(x),
                Some(msg) => {
                    self.bad(line, key, format_args!("{msg}, got {x}"));
                    None
                }
            },
            Err(_) => {
                self.bad(line, key, format_args!("is not a number: `{v}`"));
                None
            }
        }
    }

    fn req_f64(&mut self, key: &str, check: Check) -> Option<f64> {
        if !self.has(key) {
            self.missing(key);
            return None;
        }
        self.opt_f64(key, check)
    }

    fn f64_or(&mut self, key: &str, default: f64, check: Check) -> f64 {
        if self.has(key) {
            self.opt_f64(key, check).unwrap_or(default)
        } else {
            default
        }
    }

    fn opt_u64(&mut self, key: &str, min: u64) -> Option<u64> {
        let (line, v) = self.raw(key)?;
        // accept 1e5 style counts
        let parsed = v.parse::<u64>().ok().or_else(|| {
            v.parse::<f64>()
                .ok()
                .filter(|x| x.fract() == 0.0 && *x >= 0.0 && *x < 1.8e19)
                .map(|x| x as u64)
        });
        match parsed {
            Some(x) if x >= min => Some(x),
            Some(x) => {
                self.bad(line, key, format_args!("must be >= {min}, got {x}"));
                None
            }
            None => {
                self.bad(line, key, format_args!("is not a non-negative integer: `{v}`"));
                None
            }
        }
    }

    fn req_u64(&mut self, key: &str, min: u64) -> Option<u64> {
        if !self.has(key) {
            self.missing(key);
            return None;
        }
        self.opt_u64(key, min)
    }

    fn u64_or(&mut self, key: &str, default: u64, min: u64) -> u64 {
        if self.has(key) {
            self.opt_u64(key, min).unwrap_or(default)
        } else {
            default
        }
    }

    fn req_usize(&mut self, key: &str, min: u64) -> Option<usize> {
        self.req_u64(key, min).map(|v| v as usize)
    }

    fn usize_or(&mut self, key: &str, default: usize, min: u64) -> usize {
        self.u64_or(key, default as u64, min) as usize
    }

    fn opt_list(&mut self, key: &str, check: Check) -> Option<Vec<f64>> {
        let (line, v) = self.raw(key)?;
        let mut out = Vec::new();
        for part in v.split(',') {
            let p = part.trim();
            match p.parse::<f64>() {
                Ok(x) => match check(x) {
                    None => out.push(x),
                    Some(msg) => {
                        self.bad(line, key, format_args!("entries {msg}, got {x}"));
                        return None;
                    }
                },
                Err(_) => {
                    self.bad(line, key, format_args!("has a non-numeric entry `{p}`"));
                    return None;
                }
            }
        }
        Some(out)
    }

    fn req_list(&mut self, key: &str, check: Check) -> Option<Vec<f64>> {
        if !self.has(key) {
            self.missing(key);
            return None;
        }
        self.opt_list(key, check)
    }

    fn req_count_list(&mut self, key: &str) -> Option<Vec<usize>> {
        let line = self.entries.get(key).map(|e| e.line);
        let v = self.req_list(key, positive)?;
        if v.iter().any(|x| x.fract() != 0.0) {
            self.bad(line.unwrap_or(0), key, "entries must be integers");
            return None;
        }
        Some(v.into_iter().map(|x| x as usize).collect())
    }

    fn series(&mut self, key: &str, default: Series) -> Series {
        match self.raw(key) {
            None => default,
            Some((_, v)) if v == "d" => Series::D,
            Some((_, v)) if v == "d_tilde" => Series::DTilde,
            Some((line, v)) => {
                self.bad(line, key, format_args!("must be `d` or `d_tilde`, got `{v}`"));
                default
            }
        }
    }

    fn law(&mut self, prefix: &str) -> Option<ScalarLaw> {
        let kind_key = format!("{prefix}.kind");
        let line = self.entries.get(&kind_key).map(|e| e.line);
        let kind = self.req_str(&kind_key)?;
        let k = |name: &str| format!("{prefix}.{name}");
        let law = match kind.as_str() {
            "normal" => {
                let mean = self.req_f64(&k("mean"), finite);
                let var = self.req_f64(&k("variance"), positive);
                ScalarLaw::normal(mean?, var?)
            }
            "exponential" => ScalarLaw::exponential(self.req_f64(&k("rate"), positive)?),
            "shifted_exponential" => {
                let rate = self.req_f64(&k("rate"), positive);
                let shift = self.req_f64(&k("shift"), finite);
                ScalarLaw::shifted_exponential(rate?, shift?)
            }
            "pareto" => {
                let index = self.req_f64(&k("index"), positive);
                let scale = self.req_f64(&k("scale"), positive);
                ScalarLaw::pareto(index?, scale?)
            }
            "lognormal" => {
                let mu = self.req_f64(&k("mu"), finite);
                let s2 = self.req_f64(&k("sigma2"), positive);
                ScalarLaw::lognormal(mu?, s2?)
            }
            "weibull" => {
                let shape = self.req_f64(&k("shape"), positive);
                let scale = self.req_f64(&k("scale"), positive);
                ScalarLaw::weibull(shape?, scale?)
            }
            "point_mass" => ScalarLaw::point(self.req_f64(&k("value"), finite)?),
            "shifted" => {
                let offset = self.req_f64(&k("offset"), finite);
                let base = self.law(&k("base"));
                ScalarLaw::shifted(base?, offset?)
            }
            "log_one_plus" => ScalarLaw::log_one_plus(self.law(&k("base"))?),
            other => {
                self.bad(
                    line.unwrap_or(0),
                    &kind_key,
                    format_args!(
                        "unknown law `{other}` (expected normal, exponential, shifted_exponential, pareto, lognormal, weibull, point_mass, shifted or log_one_plus)"
                    ),
                );
                return None;
            }
        };
        Some(law)
    }

    fn joint(&mut self) -> Option<JointLaw> {
        let coupling = self.opt_str("model.coupling").unwrap_or_else(|| "independent".into());
        match coupling.as_str() {
            "independent" => {
                let xi = self.law("model.xi");
                let eta = self.law("model.eta");
                Some(JointLaw::independent(xi?, eta?))
            }
            "comonotone" => {
                let eta = self.law("model.eta");
                let shift = self.req_f64("model.shift", finite);
                Some(JointLaw::comonotone(eta?, shift?))
            }
            other => {
                let line = self.entries.get("model.coupling").map(|e| e.line).unwrap_or(0);
                self.bad(line, "model.coupling", format_args!("must be `independent` or `comonotone`, got `{other}`"));
                None
            }
        }
    }

    fn affine(&mut self, prefix: &str, default_slope: f64) -> AffineMap {
        let slope = self.f64_or(&format!("{prefix}.slope"), default_slope, finite);
        let intercept = self.f64_or(&format!("{prefix}.intercept"), 0.0, finite);
        AffineMap::new(intercept, slope)
    }

    fn modulation(&mut self, base: Option<JointLaw>) -> Option<ModulatedSpec> {
        let m = self.req_usize("modulation.states", 1)?;
        let mut rows = Vec::with_capacity(m);
        let mut ok = true;
        for i in 0..m {
            let key = format!("modulation.transition.{i}");
            let line = self.entries.get(&key).map(|e| e.line).unwrap_or(0);
            match self.req_list(&key, nonnegative) {
                Some(r) if r.len() == m => rows.push(r),
                Some(r) => {
                    self.bad(line, &key, format_args!("must have {m} entries, got {}", r.len()));
                    ok = false;
                }
                None => ok = false,
            }
        }
        let atom = self.usize_or("modulation.atom", 0, 0);
        if atom >= m {
            self.errors.push(format!("`modulation.atom` must be < modulation.states = {m}, got {atom}"));
            ok = false;
        }
        let f = (0..m).map(|i| self.affine(&format!("modulation.f.{i}"), 1.0)).collect();
        let g = (0..m).map(|i| self.affine(&format!("modulation.g.{i}"), 1.0)).collect();
        if !ok {
            return None;
        }
        Some(ModulatedSpec {
            transition: rows,
            atom,
            f,
            g,
            base: base?,
        })
    }

    fn dinf(&mut self) -> DInfConfig {
        let d = DInfConfig::default();
        DInfConfig {
            tol: self.f64_or("params.dinf.tol", d.tol, positive),
            n_cap: self.usize_or("params.dinf.n_cap", d.n_cap, 1),
            eta_tail: self.f64_or("params.dinf.eta_tail", d.eta_tail, unit_open),
        }
    }

    fn goldie(&mut self) -> GoldieConfig {
        let d = GoldieConfig::default();
        GoldieConfig {
            burn_in: self.usize_or("params.goldie.burn_in", d.burn_in, 0),
            n_pi: self.usize_or("params.goldie.n_pi", d.n_pi, 1),
            n_inner: self.usize_or("params.goldie.n_inner", d.n_inner, 1),
            thin: self.usize_or("params.goldie.thin", d.thin, 1),
            chains: self.u64_or("params.goldie.chains", d.chains, 1),
            batch: self.usize_or("params.goldie.batch", d.batch, 1),
        }
    }

    /// Exactly one of the given level keys.
    fn level(&mut self, options: &[(&str, Check, fn(f64) -> Level)]) -> Option<Level> {
        let present: Vec<_> = options.iter().filter(|(k, _, _)| self.has(k)).collect();
        let names: Vec<_> = options.iter().map(|(k, _, _)| format!("`{k}`")).collect();
        match present.as_slice() {
            [(k, check, make)] => self.opt_f64(k, *check).map(make),
            [] => {
                self.errors.push(format!("missing level: set one of {}", names.join(", ")));
                None
            }
            _ => {
                for (k, _, _) in &present {
                    self.used.insert(k.to_string());
                }
                self.errors.push(format!("conflicting level keys: set only one of {}", names.join(", ")));
                None
            }
        }
    }

    fn hill_k(&mut self) -> Option<usize> {
        self.opt_u64("params.hill_k", 1).map(|v| v as usize)
    }

    fn finish(mut self) -> Vec<String> {
        for (k, e) in &self.entries {
            if !self.used.contains(k) {
                self.errors.push(format!("line {}: unknown key `{k}`", e.line));
            }
        }
        self.errors
    }
}

fn check_log_levels(r: &mut Reader, key: &str) -> Option<Vec<f64>> {
    let line = r.entries.get(key).map(|e| e.line).unwrap_or(0);
    let v = r.req_list(key, finite)?;
    if let Some(&l) = v.iter().find(|&&l| !(l > 1.0)) {
        r.bad(line, key, format_args!("entries must exceed 1 (level x > e), got {l}"));
        return None;
    }
    Some(v)
}

fn params(r: &mut Reader, kind: ExperimentKind) -> Option<Params> {
    use ExperimentKind as K;
    Some(match kind {
        K::TailInfinite => {
            let series = r.series("params.series", Series::D);
            let log_levels = check_log_levels(r, "params.log_levels");
            let n_mc = r.req_u64("params.n_mc", 1);
            let h_mc = r.u64_or("params.h_mc", 1_000_000, 1);
            let dinf = r.dinf();
            Params::TailInfinite(TailInfinite {
                series,
                log_levels: log_levels?,
                n_mc: n_mc?,
                h_mc,
                dinf,
            })
        }
        K::TailFinite => {
            let series = r.series("params.series", Series::D);
            let n = r.req_usize("params.n", 1);
            let log_levels = check_log_levels(r, "params.log_levels");
            let n_mc = r.req_u64("params.n_mc", 1);
            let h_mc = r.u64_or("params.h_mc", 1_000_000, 1);
            Params::TailFinite(TailFinite {
                series,
                n: n?,
                log_levels: log_levels?,
                n_mc: n_mc?,
                h_mc,
            })
        }
        K::BigJump => {
            let series = r.series("params.series", Series::D);
            let n = r.req_usize("params.n", 1);
            let c = r.req_f64("params.c", positive);
            let eps = r.req_f64("params.eps", positive);
            let level = r.level(&[("params.log_level", positive, Level::Log), ("params.level_quantile", unit_open, Level::Quantile)]);
            let n_mc = r.req_u64("params.n_mc", 1);
            let n_pilot = r.u64_or("params.n_pilot", n_mc.unwrap_or(1), 1);
            Params::BigJump(BigJump {
                series,
                n: n?,
                c: c?,
                eps: eps?,
                level: level?,
                n_pilot,
                n_mc: n_mc?,
            })
        }
        K::Cramer => {
            let series = r.series("params.series", Series::DTilde);
            let log_levels = r.req_list("params.log_levels", positive);
            let n_mc = r.req_u64("params.n_mc", 1);
            let hill_k = r.hill_k();
            let goldie = r.goldie();
            let dinf = r.dinf();
            Params::Cramer(Cramer {
                series,
                log_levels: log_levels?,
                n_mc: n_mc?,
                hill_k,
                goldie,
                dinf,
            })
        }
        K::Prestationary => {
            let series = r.series("params.series", Series::D);
            let level = r.level(&[("params.log_level", positive, Level::Log), ("params.target_tail", unit_open, Level::Tail)]);
            let n_factors = r.req_list("params.n_factors", positive);
            let n_mc = r.req_u64("params.n_mc", 1);
            let goldie = r.goldie();
            Params::Prestationary(Prestationary {
                series,
                level: level?,
                n_factors: n_factors?,
                n_mc: n_mc?,
                goldie,
            })
        }
        K::Exceedance => {
            let level = r.level(&[("params.log_level", positive, Level::Log), ("params.target_tail", unit_open, Level::Tail)]);
            let n_factors = r.req_list("params.n_factors", positive);
            let n_inf = r.opt_u64("params.n_inf", 1).map(|v| v as usize);
            let n_mc = r.req_u64("params.n_mc", 1);
            let goldie = r.goldie();
            Params::Exceedance(Exceedance {
                level: level?,
                n_factors: n_factors?,
                n_inf,
                n_mc: n_mc?,
                goldie,
            })
        }
        K::Modulated => {
            let log_levels = r.req_list("params.log_levels", positive);
            let n_mc = r.req_u64("params.n_mc", 1);
            let n_cycles = r.u64_or("params.n_cycles", 100_000, 1);
            let n_boot = r.u64_or("params.n_boot", 100, 2);
            let conditions_mc = r.u64_or("params.conditions_mc", 100_000, 1);
            let hill_k = r.hill_k();
            let goldie = r.goldie();
            let dinf = r.dinf();
            Params::Modulated(Modulated {
                log_levels: log_levels?,
                n_mc: n_mc?,
                n_cycles,
                n_boot,
                conditions_mc,
                hill_k,
                goldie,
                dinf,
            })
        }
        K::Clt => {
            let series = r.series("params.series", Series::D);
            let n = r.req_usize("params.n", 1);
            let n_mc = r.req_u64("params.n_mc", 1);
            Params::Clt(Clt {
                series,
                n: n?,
                n_mc: n_mc?,
            })
        }
        K::Local => {
            let series = r.series("params.series", Series::D);
            let n = r.req_usize("params.n", 1);
            let delta = r.req_f64("params.delta", positive);
            let sd_span = r.f64_or("params.sd_span", 3.0, positive);
            let points = r.usize_or("params.points", 13, 1);
            let central_sd = r.f64_or("params.central_sd", 1.0, nonnegative);
            let n_mc = r.req_u64("params.n_mc", 1);
            Params::Local(Local {
                series,
                n: n?,
                delta: delta?,
                sd_span,
                points,
                central_sd,
                n_mc: n_mc?,
            })
        }
        K::Green => {
            let x = r.req_f64("params.x", finite);
            let h = r.req_f64("params.h", positive);
            let n_max = r.opt_u64("params.n_max", 1).map(|v| v as usize);
            let n_mc = r.req_u64("params.n_mc", 1);
            Params::Green(Green {
                x: x?,
                h: h?,
                n_max,
                n_mc: n_mc?,
            })
        }
        K::Gamma => {
            let n = r.req_usize("params.n", 1);
            let n_mc = r.req_u64("params.n_mc", 1);
            Params::Gamma(Gamma { n: n?, n_mc: n_mc? })
        }
        K::Diagnostics => {
            let y_grid = r.req_list("params.y_grid", finite);
            let lambda_max = r.f64_or("params.lambda_max", 10.0, positive);
            let n_lambda = r.usize_or("params.n_lambda", 101, 2);
            let n_mc = r.req_u64("params.n_mc", 1);
            let excursion_n = r.req_count_list("params.excursion_n");
            let excursion_horizon = r.usize_or("params.excursion_horizon", 1000, 1);
            Params::Diagnostics(Diagnostics {
                y_grid: y_grid?,
                lambda_max,
                n_lambda,
                n_mc: n_mc?,
                excursion_n: excursion_n?,
                excursion_horizon,
            })
        }
    })
}

/// Parses and validates a configuration. Model preconditions of the
/// experiment are checked too, so a config that parses is safe to run.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigErrors> {
    let mut r = Reader::parse(text);
    let kind = match r.req_str("experiment") {
        Some(s) => match ExperimentKind::parse(&s) {
            Some(k) => Some(k),
            None => {
                let names: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                r.errors.push(format!("`experiment` must be one of {}, got `{s}`", names.join(", ")));
                None
            }
        },
        None => None,
    };
    let name = r.opt_str("name");
    if let Some(n) = &name {
        if !n.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            r.errors.push(format!("`name` may only contain letters, digits, `-`, `_` and `.`, got `{n}`"));
        }
    }
    let seed = r.u64_or("seed", 0, 0);
    let workers = r.opt_u64("workers", 1).map(|v| v as usize);
    let output_dir = r.opt_str("output.dir").map(PathBuf::from);
    let joint = r.joint();
    let model = match kind {
        Some(ExperimentKind::Modulated) => r.modulation(joint).map(Model::Modulated),
        _ => joint.map(Model::Iid),
    };
    let params = kind.and_then(|k| params(&mut r, k));
    let mut errors = r.finish();
    if let (Some(kind), Some(model), Some(params)) = (kind, model, params) {
        let cfg = ExperimentConfig {
            kind,
            name: name.unwrap_or_else(|| kind.name().to_string()),
            seed,
            workers,
            output_dir,
            model,
            params,
        };
        if errors.is_empty() {
            errors.extend(crate::preflight::check(&cfg));
        }
        if errors.is_empty() {
            return Ok(cfg);
        }
    }
    if errors.is_empty() {
        errors.push("configuration is incomplete".into());
    }
    Err(ConfigErrors(errors))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLT: &str = "
experiment = clt
seed = 7
model.xi.kind = normal
model.xi.mean = 1
model.xi.variance = 1
model.eta.kind = exponential
model.eta.rate = 1   # trailing comment
params.n = 200
params.n_mc = 1e3
";

    #[test]
    fn minimal_clt_parses() {
        let c = parse_config(CLT).unwrap();
        assert_eq!(c.kind, ExperimentKind::Clt);
        assert_eq!(c.seed, 7);
        assert_eq!(c.name, "clt");
        assert_eq!(
            c.params,
            Params::Clt(Clt {
                series: Series::D,
                n: 200,
                n_mc: 1000
            })
        );
    }

    #[test]
    fn negative_pareto_index_names_field() {
        let text = CLT.replace("model.eta.kind = exponential\nmodel.eta.rate = 1   # trailing comment", "model.eta.kind = pareto\nmodel.eta.index = -2\nmodel.eta.scale = 1");
        let e = parse_config(&text).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("model.eta.index") && m.contains("> 0")), "{e}");
    }

    #[test]
    fn duplicates_unknowns_and_missing_all_reported() {
        let text = format!("{CLT}\nparams.n = 3\nparams.bogus = 1\n").replace("params.n_mc = 1e3", "");
        let e = parse_config(&text).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("duplicate key `params.n`")), "{e}");
        assert!(e.0.iter().any(|m| m.contains("unknown key `params.bogus`")), "{e}");
        assert!(e.0.iter().any(|m| m.contains("missing required key `params.n_mc`")), "{e}");
    }

    #[test]
    fn nested_laws() {
        let text = "
experiment = tail-infinite
model.xi.kind = normal
model.xi.mean = -1
model.xi.variance = 0.25
model.eta.kind = log_one_plus
model.eta.base.kind = pareto
model.eta.base.index = 2
model.eta.base.scale = 1
params.log_levels = 5, 8
params.n_mc = 10
";
        let c = parse_config(text).unwrap();
        match c.model {
            Model::Iid(JointLaw::Independent { eta, .. }) => {
                assert_eq!(eta, ScalarLaw::log_one_plus(ScalarLaw::pareto(2.0, 1.0)))
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn modulation_section() {
        let text = "
experiment = modulated
model.xi.kind = normal
model.xi.mean = -0.5
model.xi.variance = 1
model.eta.kind = exponential
model.eta.rate = 1
modulation.states = 2
modulation.transition.0 = 0.9, 0.1
modulation.transition.1 = 0.5, 0.5
modulation.f.0.intercept = -0.2
modulation.f.1.intercept = 0.2
modulation.g.1.slope = 2
params.log_levels = 2, 4
params.n_mc = 100
";
        let c = parse_config(text).unwrap();
        let Model::Modulated(m) = c.model else { panic!() };
        assert_eq!(m.f[0], AffineMap::new(-0.2, 1.0));
        assert_eq!(m.g[1], AffineMap::new(0.0, 2.0));
        assert_eq!(m.transition[1], vec![0.5, 0.5]);
    }

    #[test]
    fn modulation_keys_rejected_elsewhere() {
        let e = parse_config(&format!("{CLT}modulation.states = 2\n")).unwrap_err();
        assert!(e.0.iter().any(|m| m.contains("unknown key `modulation.states`")));
    }
}
