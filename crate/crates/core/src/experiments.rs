//! Desk-scale studies on synthetic demand: how demand randomness moves the
//! optimized daily bill, and how pooling users behind one shared storage
//! lowers the per-user bill.
//!
//! Every scenario is sized at its own optimal capacity and scored by its total
//! daily cost: expected grid purchases plus amortized storage cost `pi_s * C*`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::demand::{aggregate_users, align_to_scheme, DemandDescriptor, DemandError, DemandSpec, DiscreteDemand};
use crate::money::Rate;
use crate::oracle::{simulate_policy, OracleError, SimulationReport};
use crate::policy::{compute_policy, expected_cost};
use crate::sizing::{optimal_capacity_for_policy, SizingError, SizingOptions};
use crate::tariff::TouScheme;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Sizing(#[from] SizingError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid experiment config: {0}")]
    Config(String),
}

impl From<crate::policy::PolicyError> for ExperimentError {
    fn from(e: crate::policy::PolicyError) -> Self {
        ExperimentError::Sizing(e.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scheme: TouScheme,
    /// One representative user's per-period demand.
    pub user: DemandSpec,
    pub cv_grid: Vec<f64>,
    pub group_sizes: Vec<usize>,
    /// Monte Carlo days per scenario; zero skips simulation.
    pub days: u64,
    pub seed: u64,
    pub pi_s: Rate,
    pub grid_step: f64,
    pub tail_mass: f64,
    pub tol: f64,
    /// Size the constant-demand baseline at its own optimum rather than at the
    /// random scenario's capacity.
    pub reoptimize_baseline: bool,
}

impl ExperimentConfig {
    pub fn check(&self) -> Result<(), String> {
        if self.user.len() != self.scheme.len() && self.user.len() != self.scheme.raw_len() {
            return Err(format!(
                "user demand has {} periods, tariff has {}",
                self.user.len(),
                self.scheme.len()
            ));
        }
        if self.cv_grid.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || self.cv_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err("cv_grid must be nonnegative and strictly ascending".into());
        }
        if self.group_sizes.contains(&0) || self.group_sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err("group_sizes must be positive and strictly ascending".into());
        }
        if !self.pi_s.is_positive() {
            return Err("pi_s must be positive".into());
        }
        if self.user.periods.iter().any(|d| d.mean() <= 0.0) {
            return Err("every user demand period needs a positive mean".into());
        }
        Ok(())
    }

    fn sizing_options(&self) -> SizingOptions {
        SizingOptions { tol: self.tol, curve_points: 0 }
    }
}

/// Outcome of sizing and operating storage for one demand scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub c_star: f64,
    pub expected_cost: f64,
    /// `expected_cost + pi_s * c_star`.
    pub total_cost: f64,
    pub simulation: Option<SimulationReport>,
}

fn run_scenario(
    config: &ExperimentConfig,
    demands: &[DiscreteDemand],
    capacity_override: Option<usize>,
    seed_offset: u64,
) -> Result<(ScenarioOutcome, usize), ExperimentError> {
    let scheme = &config.scheme;
    let policy = compute_policy(scheme, demands, config.tol)?;
    let capacity = match capacity_override {
        Some(c) => c,
        None => optimal_capacity_for_policy(&policy, scheme, demands, config.pi_s, config.sizing_options())?.c_star_cells,
    };
    let c_star = capacity as f64 * config.grid_step;
    let cost = expected_cost(&policy, capacity, scheme, demands)?;
    let simulation = if config.days > 0 {
        let seed = config.seed.wrapping_add(seed_offset.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        Some(simulate_policy(&policy, capacity, scheme, demands, config.days, seed)?)
    } else {
        None
    };
    let outcome = ScenarioOutcome { c_star, expected_cost: cost, total_cost: cost + config.pi_s.cents() * c_star, simulation };
    Ok((outcome, capacity))
}

fn scenario_demands(config: &ExperimentConfig, spec: &DemandSpec) -> Result<Vec<DiscreteDemand>, ExperimentError> {
    let discrete = spec.discretize(config.grid_step, config.tail_mass)?;
    Ok(align_to_scheme(discrete, &config.scheme)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvGapRow {
    pub cv: f64,
    /// `(random - baseline) / baseline` total daily cost.
    pub cost_gap: f64,
    pub random: ScenarioOutcome,
    pub baseline: ScenarioOutcome,
}

/// For each CV level, LogNormal demand with the user's per-period means versus
/// constant demand at those means.
pub fn cv_cost_gap_experiment(config: &ExperimentConfig) -> Result<Vec<CvGapRow>, ExperimentError> {
    config.check().map_err(ExperimentError::Config)?;
    let means: Vec<f64> = config.user.periods.iter().map(DemandDescriptor::mean).collect();
    let spec_at = |cv: f64| {
        DemandSpec::new(
            means
                .iter()
                .map(|&mean| {
                    if cv == 0.0 {
                        DemandDescriptor::PointMass { value: mean }
                    } else {
                        DemandDescriptor::LogNormal { mean, cv }
                    }
                })
                .collect(),
        )
    };
    let baseline_demands = scenario_demands(config, &spec_at(0.0))?;
    let (own_baseline, _) = run_scenario(config, &baseline_demands, None, 0)?;

    config
        .cv_grid
        .par_iter()
        .enumerate()
        .map(|(k, &cv)| {
            let demands = scenario_demands(config, &spec_at(cv))?;
            let (random, capacity) = run_scenario(config, &demands, None, k as u64 + 1)?;
            let baseline = if config.reoptimize_baseline {
                own_baseline.clone()
            } else {
                run_scenario(config, &baseline_demands, Some(capacity), 0)?.0
            };
            let cost_gap = (random.total_cost - baseline.total_cost) / baseline.total_cost;
            Ok(CvGapRow { cv, cost_gap, random, baseline })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationRow {
    pub group_size: usize,
    pub per_user_cost: f64,
    pub group: ScenarioOutcome,
}

/// Per-user total daily cost when `k` independent copies of the user share one
/// meter and one optimally sized storage.
pub fn aggregation_experiment(config: &ExperimentConfig) -> Result<Vec<AggregationRow>, ExperimentError> {
    config.check().map_err(ExperimentError::Config)?;
    config
        .group_sizes
        .par_iter()
        .map(|&k| {
            let users = vec![config.user.clone(); k];
            let demands = align_to_scheme(aggregate_users(&users, config.grid_step, config.tail_mass)?, &config.scheme)?;
            let (group, _) = run_scenario(config, &demands, None, k as u64)?;
            Ok(AggregationRow { group_size: k, per_user_cost: group.total_cost / k as f64, group })
        })
        .collect()
}
