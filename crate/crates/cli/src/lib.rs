//! Experiment harness: config parsing, per-experiment runners and reports.

pub mod config;
pub mod experiments;
pub mod preflight;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{parse_config, ConfigErrors, ExperimentConfig, ExperimentKind};
pub use report::{Report, ReportRow};

/// Overrides environment variable for the seed.
pub const SEED_ENV: &str = "PERP_SEED";
/// Overrides environment variable for the worker count.
pub const WORKERS_ENV: &str = "PERP_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{0}")]
    Model(#[from] perp_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl RunError {
    /// Process exit code: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}

/// Runs on a pool of `workers` threads. Results do not depend on
/// `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<Report, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    Ok(pool.install(|| experiments::run(cfg))?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub csv: PathBuf,
    pub json: PathBuf,
}

/// Writes `<name>.csv` and `<name>.json` into `dir`.
pub fn write_outputs(report: &Report, dir: &Path, seed: u64, workers: usize, seconds: f64) -> Result<Outputs, RunError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join(format!("{}.csv", report.name));
    let json = dir.join(format!("{}.json", report.name));
    std::fs::write(&csv, report.csv_string()).map_err(io(&csv))?;
    let body = serde_json::to_string_pretty(&report.summary_json(seed, workers, seconds)).expect("json values serialise");
    std::fs::write(&json, body + "\n").map_err(io(&json))?;
    Ok(Outputs { csv, json })
}

/// Command-line and environment overrides; `None` keeps the config value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Reads [`SEED_ENV`] and [`WORKERS_ENV`]; flags set on `self` win.
    pub fn with_env(mut self) -> Result<Self, ConfigErrors> {
        let mut errs = Vec::new();
        if self.seed.is_none() {
            if let Ok(v) = std::env::var(SEED_ENV) {
                match v.trim().parse() {
                    Ok(s) => self.seed = Some(s),
                    Err(_) => errs.push(format!("{SEED_ENV} must be a non-negative integer, got `{v}`")),
                }
            }
        }
        if self.workers.is_none() {
            if let Ok(v) = std::env::var(WORKERS_ENV) {
                match v.trim().parse::<usize>() {
                    Ok(w) if w >= 1 => self.workers = Some(w),
                    _ => errs.push(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")),
                }
            }
        }
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(ConfigErrors(errs))
        }
    }

    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = &self.out {
            cfg.output_dir = Some(o.clone());
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Parse, run and write outputs for one config file.
pub fn run_file(path: &Path, ov: &Overrides) -> Result<(Report, Outputs), RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = parse_config(&text)?;
    ov.apply(&mut cfg);
    let workers = cfg.workers.unwrap_or_else(default_workers);
    let start = Instant::now();
    let report = run_experiment(&cfg, workers)?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let out = write_outputs(&report, &dir, cfg.seed, workers, start.elapsed().as_secs_f64())?;
    Ok((report, out))
}
