//! TOML input files: tariffs, demand specs and experiment configs.
//!
//! Tariff file:
//!
//! ```toml
//! [[period]]
//! start_hour = 0
//! end_hour = 7
//! rate_cents_per_kwh = 6.7
//! ```
//!
//! Demand file, one record per period in daily order. Records may carry a
//! `user` key; each distinct user gets its own demand spec.
//!
//! ```toml
//! [[period]]
//! kind = "log_normal"
//! mean = 3.5
//! cv = 0.5
//! ```

use std::fs;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::demand::{DemandDescriptor, DemandError, DemandSpec, DEFAULT_GRID_STEP, DEFAULT_TAIL_MASS};
use crate::experiments::ExperimentConfig;
use crate::money::Rate;
use crate::policy::DEFAULT_TOL;
use crate::tariff::{Period, TariffError, TouScheme};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error(transparent)]
    Tariff(#[from] TariffError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub fn read_file(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodRecord {
    pub start_hour: f64,
    pub end_hour: f64,
    pub rate_cents_per_kwh: Rate,
}

impl From<&PeriodRecord> for Period {
    fn from(r: &PeriodRecord) -> Self {
        Period::new(r.start_hour, r.end_hour, r.rate_cents_per_kwh)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TariffFile {
    period: Vec<PeriodRecord>,
}

pub fn scheme_from_records(records: &[PeriodRecord]) -> Result<TouScheme, ConfigError> {
    let raw: Vec<Period> = records.iter().map(Period::from).collect();
    Ok(TouScheme::validate(&raw)?)
}

pub fn parse_tariff(text: &str, origin: &str) -> Result<TouScheme, ConfigError> {
    let file: TariffFile = parse_toml(text, origin)?;
    scheme_from_records(&file.period)
}

pub fn load_tariff(path: &Path) -> Result<TouScheme, ConfigError> {
    parse_tariff(&read_file(path)?, &path.display().to_string())
}

#[derive(Debug, Deserialize)]
struct DemandRecord {
    #[serde(default)]
    user: Option<toml::Value>,
    #[serde(flatten)]
    descriptor: DemandDescriptor,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandFile {
    period: Vec<DemandRecord>,
}

/// Parses a demand file into one spec per user, in order of first appearance.
pub fn parse_demand(text: &str, origin: &str) -> Result<Vec<DemandSpec>, ConfigError> {
    let file: DemandFile = parse_toml(text, origin)?;
    let mut users: Vec<(Option<String>, DemandSpec)> = Vec::new();
    for record in file.period {
        let key = record.user.map(|v| match v {
            toml::Value::String(s) => s,
            other => other.to_string(),
        });
        match users.iter_mut().find(|(k, _)| *k == key) {
            Some((_, spec)) => spec.periods.push(record.descriptor),
            None => users.push((key, DemandSpec::new(vec![record.descriptor]))),
        }
    }
    if users.is_empty() {
        return Err(ConfigError::Invalid(format!("{origin}: no demand periods")));
    }
    Ok(users.into_iter().map(|(_, spec)| spec).collect())
}

pub fn load_demand(path: &Path) -> Result<Vec<DemandSpec>, ConfigError> {
    parse_demand(&read_file(path)?, &path.display().to_string())
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_tail_mass() -> f64 {
    DEFAULT_TAIL_MASS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    pi_s: Rate,
    #[serde(default)]
    cv_grid: Vec<f64>,
    #[serde(default)]
    group_sizes: Vec<usize>,
    #[serde(default)]
    days: u64,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_grid_step")]
    grid_step: f64,
    #[serde(default = "default_tail_mass")]
    tail_mass: f64,
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default = "default_true")]
    reoptimize_baseline: bool,
    tariff: Vec<PeriodRecord>,
    user_demand: Vec<DemandRecord>,
}

pub fn parse_experiment(text: &str, origin: &str) -> Result<ExperimentConfig, ConfigError> {
    let file: ExperimentFile = parse_toml(text, origin)?;
    let scheme = scheme_from_records(&file.tariff)?;
    let user = DemandSpec::new(file.user_demand.into_iter().map(|r| r.descriptor).collect());
    let config = ExperimentConfig {
        scheme,
        user,
        cv_grid: file.cv_grid,
        group_sizes: file.group_sizes,
        days: file.days,
        seed: file.seed,
        pi_s: file.pi_s,
        grid_step: file.grid_step,
        tail_mass: file.tail_mass,
        tol: file.tol,
        reoptimize_baseline: file.reoptimize_baseline,
    };
    config.check().map_err(ConfigError::Invalid)?;
    Ok(config)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    parse_experiment(&read_file(path)?, &path.display().to_string())
}
