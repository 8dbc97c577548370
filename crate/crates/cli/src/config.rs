//! Campaign configuration: a TOML file, flag overrides and defaults merged
//! into one validated [`CampaignConfig`].

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use swfc_art::{Pattern, Strategy};

use crate::error::CliError;

pub const SEED_ENV: &str = "ART_SEED";

/// Keys accepted in the config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub strategies: Option<Vec<String>>,
    pub dimensions: Option<Vec<usize>>,
    pub thetas: Option<Vec<f64>>,
    pub patterns: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub n_targets: Option<Vec<usize>>,
    pub output_path: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub repeats: Option<usize>,
    pub subdomains: Option<usize>,
    pub queries: Option<usize>,
    pub max_tests: Option<usize>,
    pub domain: Option<[f64; 2]>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Flags shared by every subcommand. Anything given here wins over the file.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trials per cell (seeds per series for `discrepancy`).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Base seed; falls back to the config file, then $ART_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Comma-separated strategies: rt, fscs, kd-exact, swfc.
    #[arg(long, value_delimiter = ',')]
    pub strategy: Vec<String>,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    /// Comma-separated failure rates.
    #[arg(long, value_delimiter = ',')]
    pub thetas: Vec<f64>,
    /// Comma-separated failure patterns: block, strip, point.
    #[arg(long, value_delimiter = ',')]
    pub pattern: Vec<String>,
    /// Comma-separated test-case counts for bench, discrepancy and recall.
    #[arg(long = "n", value_delimiter = ',')]
    pub n_targets: Vec<usize>,
    /// Timing repeats per series.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Bench,
    Discrepancy,
    Recall,
}

impl Mode {
    fn default_targets(self) -> Vec<usize> {
        match self {
            Mode::Simulate => Vec::new(),
            Mode::Bench => vec![500, 1000, 2000, 5000, 10000, 20000],
            Mode::Discrepancy => vec![100, 1000, 10000],
            Mode::Recall => vec![500],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignConfig {
    pub strategies: Vec<Strategy>,
    pub dimensions: Vec<usize>,
    pub thetas: Vec<f64>,
    pub patterns: Vec<Pattern>,
    pub trials: usize,
    pub seed: u64,
    pub n_targets: Vec<usize>,
    pub output_path: PathBuf,
    pub jobs: usize,
    pub repeats: usize,
    pub subdomains: usize,
    pub queries: usize,
    /// `None` means ten times the expected random-testing F-measure.
    pub max_tests: Option<usize>,
    pub domain: [f64; 2],
}

fn pick<T>(flag: Vec<T>, file: Option<Vec<T>>, default: impl FnOnce() -> Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.unwrap_or_else(default)
    }
}

fn parse_all<T: std::str::FromStr>(field: &str, names: Vec<String>) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    names
        .iter()
        .map(|n| n.trim().parse().map_err(|e| CliError::Config(format!("{field}: {e}"))))
        .collect()
}

fn seed_from_env(value: Option<String>) -> Result<Option<u64>, CliError> {
    value
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV}: `{v}` is not a u64")))
        })
        .transpose()
}

impl CampaignConfig {
    /// Merges flags over the config file over defaults and validates the
    /// result. `env_seed` is the raw value of `$ART_SEED`, if set.
    pub fn resolve(mode: Mode, flags: Overrides, env_seed: Option<String>) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        let strategies = parse_all(
            "strategies",
            pick(flags.strategy, file.strategies, || {
                Strategy::ALL.iter().map(|s| s.to_string()).collect()
            }),
        )?;
        let patterns = parse_all("patterns", pick(flags.pattern, file.patterns, || vec!["block".into()]))?;
        let seed = match flags.seed.or(file.seed) {
            Some(s) => s,
            None => seed_from_env(env_seed)?.unwrap_or(0),
        };
        let config = CampaignConfig {
            strategies,
            dimensions: pick(flags.dims, file.dimensions, || vec![2]),
            thetas: pick(flags.thetas, file.thetas, || vec![0.01]),
            patterns,
            trials: flags.trials.or(file.trials).unwrap_or(100),
            seed,
            n_targets: pick(flags.n_targets, file.n_targets, || mode.default_targets()),
            output_path: flags
                .out
                .or(file.output_path)
                .unwrap_or_else(|| PathBuf::from("results")),
            jobs: flags
                .jobs
                .or(file.jobs)
                .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
            repeats: flags.repeats.or(file.repeats).unwrap_or(3),
            subdomains: file.subdomains.unwrap_or(1000),
            queries: file.queries.unwrap_or(1000),
            max_tests: file.max_tests,
            domain: file.domain.unwrap_or([-5000.0, 5000.0]),
        };
        config.validate(mode)?;
        Ok(config)
    }

    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.strategies.is_empty() {
            return fail("strategies: at least one strategy is required".into());
        }
        if self.dimensions.is_empty() || self.dimensions.contains(&0) {
            return fail("dimensions: need at least one, each >= 1".into());
        }
        if self.thetas.is_empty() || self.thetas.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return fail("thetas: need at least one, each in (0, 1)".into());
        }
        if self.patterns.is_empty() {
            return fail("patterns: at least one pattern is required".into());
        }
        if mode == Mode::Simulate && self.patterns.contains(&Pattern::Strip) && self.dimensions.contains(&1) {
            return fail("patterns: strip needs every dimension >= 2".into());
        }
        if self.trials == 0 {
            return fail("trials: must be >= 1".into());
        }
        if self.jobs == 0 {
            return fail("jobs: must be >= 1".into());
        }
        if self.repeats == 0 {
            return fail("repeats: must be >= 1".into());
        }
        if self.subdomains == 0 || self.queries == 0 {
            return fail("subdomains and queries: must be >= 1".into());
        }
        if self.max_tests == Some(0) {
            return fail("max_tests: must be >= 1".into());
        }
        let [lo, hi] = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return fail(format!("domain: need finite lo < hi, got [{lo}, {hi}]"));
        }
        if mode != Mode::Simulate {
            if self.n_targets.is_empty() || self.n_targets.contains(&0) {
                return fail("n_targets: need at least one, each >= 1".into());
            }
            if self.n_targets.windows(2).any(|w| w[0] >= w[1]) {
                return fail("n_targets: must be strictly ascending".into());
            }
        }
        Ok(())
    }

    /// Seed of trial `i` in every cell.
    pub fn trial_seed(&self, i: usize) -> u64 {
        self.seed.wrapping_add(i as u64)
    }
}
