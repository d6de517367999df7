//! Ground truth for the policy solver.
//!
//! [`brute_force_dp`] solves the daily storage problem by exhaustive backward
//! induction: after seeing each period's demand the user may end the period at
//! any level they can reach without selling energy back. Nothing here calls
//! into the policy module's recursions; transitions and costs are rebuilt from
//! the problem statement.
//!
//! [`simulate_policy`] runs a reservation policy on sampled days. Each day draws
//! from its own ChaCha stream keyed by `(seed, day)`, so reports do not depend
//! on how many threads run the simulation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::demand::DiscreteDemand;
use crate::policy::ReservationPolicy;
use crate::tariff::TouScheme;

/// Largest number of (state, demand outcome, action) triples the DP will enumerate.
pub const MAX_DP_WORK: u64 = 10_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("state space needs {work} state-outcome-action evaluations, limit is {limit}")]
    StateSpaceTooLarge { work: u64, limit: u64 },
    #[error("expected {expected} demand distributions, found {found}")]
    PeriodCountMismatch { expected: usize, found: usize },
    #[error("demand grids differ")]
    GridMismatch,
    #[error("simulation needs at least one day")]
    NoDays,
}

/// Value function and decisions for one period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpStage {
    /// Expected cost of this and all later periods, by incoming level (cells).
    pub value: Vec<f64>,
    /// Optimal closing level, indexed `[incoming level][demand cell]`; `None`
    /// where the demand cell has zero probability.
    pub argmin: Vec<Vec<Option<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DpTable {
    pub capacity_cells: usize,
    pub stages: Vec<DpStage>,
}

fn check(scheme: &TouScheme, demands: &[DiscreteDemand]) -> Result<f64, OracleError> {
    if demands.len() != scheme.len() {
        return Err(OracleError::PeriodCountMismatch { expected: scheme.len(), found: demands.len() });
    }
    if demands.iter().any(|d| !d.same_grid(&demands[0])) {
        return Err(OracleError::GridMismatch);
    }
    Ok(demands[0].step())
}

/// Exact optimal expected daily cost with capacity `capacity` cells, starting
/// and ending the day full.
pub fn brute_force_dp(
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
    capacity: usize,
) -> Result<(f64, DpTable), OracleError> {
    let step = check(scheme, demands)?;
    let states = capacity as u64 + 1;
    let work: u64 = demands.iter().map(|d| states * (d.support_max() as u64 + 1) * states).sum();
    if work > MAX_DP_WORK {
        return Err(OracleError::StateSpaceTooLarge { work, limit: MAX_DP_WORK });
    }
    let n = scheme.len();
    let rates = scheme.rates_f64();
    let c = capacity as i64;

    let mut stages: Vec<DpStage> = Vec::with_capacity(n);
    // Cost-to-go from the start of the next period, by level; after the last
    // period only the full level is admissible and costs nothing more.
    let mut next: Vec<f64> = (0..=capacity).map(|r| if r == capacity { 0.0 } else { f64::INFINITY }).collect();

    for i in (0..n).rev() {
        let price = rates[i] * step;
        let masses = demands[i].masses();
        let mut value = vec![0.0; capacity + 1];
        let mut argmin = vec![vec![None; masses.len()]; capacity + 1];
        for incoming in 0..=c {
            let mut expected = 0.0;
            for (x, &p) in masses.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let after_demand = incoming - x as i64;
                let lowest = after_demand.max(0);
                let mut best = f64::INFINITY;
                let mut best_level = None;
                for closing in lowest..=c {
                    let bought = (closing - after_demand) as f64;
                    let total = price * bought + next[closing as usize];
                    if total < best {
                        best = total;
                        best_level = Some(closing as usize);
                    }
                }
                expected += p * best;
                argmin[incoming as usize][x] = best_level;
            }
            value[incoming as usize] = expected;
        }
        next = value.clone();
        stages.push(DpStage { value, argmin });
    }
    stages.reverse();
    let cost = stages[0].value[capacity];
    Ok((cost, DpTable { capacity_cells: capacity, stages }))
}

/// Largest violation of discrete convexity, `max(-(v[k-1] - 2 v[k] + v[k+1]))`.
pub fn convexity_violation(values: &[f64]) -> f64 {
    values.windows(3).map(|w| -(w[0] - 2.0 * w[1] + w[2])).fold(0.0, f64::max)
}

/// Inverse-CDF sampler over a discretized demand.
#[derive(Debug, Clone)]
pub struct DemandSampler {
    cumulative: Vec<f64>,
}

impl DemandSampler {
    pub fn new(demand: &DiscreteDemand) -> Self {
        Self { cumulative: demand.cumulative() }
    }

    /// Demand in cells for a uniform draw `u` in `[0, 1)`.
    pub fn cells_for(&self, u: f64) -> usize {
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.cells_for(rng.random::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub days: u64,
    pub mean_cost: f64,
    pub sd_cost: f64,
    pub cv_cost: f64,
    /// Half-width of the normal-approximation 95% confidence interval on the mean.
    pub ci_halfwidth: f64,
}

const Z_95: f64 = 1.959_963_984_540_054;

pub fn day_rng(seed: u64, day: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(day);
    rng
}

/// Monte Carlo estimate of a policy's daily cost.
pub fn simulate_policy(
    policy: &ReservationPolicy,
    capacity: usize,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
    days: u64,
    seed: u64,
) -> Result<SimulationReport, OracleError> {
    let step = check(scheme, demands)?;
    if days == 0 {
        return Err(OracleError::NoDays);
    }
    if policy.len() != scheme.len() {
        return Err(OracleError::PeriodCountMismatch { expected: scheme.len(), found: policy.len() });
    }
    let n = scheme.len();
    let samplers: Vec<DemandSampler> = demands.iter().map(DemandSampler::new).collect();
    let floors: Vec<i64> = policy
        .reservations()
        .iter()
        .enumerate()
        .map(|(k, r)| if k + 1 == n { capacity as i64 } else { r.project(capacity) as i64 })
        .collect();
    let rates = scheme.rates_f64();

    let daily: Vec<f64> = (0..days)
        .into_par_iter()
        .map(|day| {
            let mut rng = day_rng(seed, day);
            let mut level = capacity as i64;
            let mut cost = 0.0;
            for k in 0..n {
                let after = level - samplers[k].sample(&mut rng) as i64;
                if after < floors[k] {
                    cost += rates[k] * (floors[k] - after) as f64 * step;
                    level = floors[k];
                } else {
                    level = after;
                }
            }
            cost
        })
        .collect();

    let count = days as f64;
    let mean = daily.iter().sum::<f64>() / count;
    let var = if days > 1 {
        daily.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let sd = var.sqrt();
    Ok(SimulationReport {
        days,
        mean_cost: mean,
        sd_cost: sd,
        cv_cost: if mean > 0.0 { sd / mean } else { 0.0 },
        ci_halfwidth: Z_95 * sd / count.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::money::Rate;
    use crate::policy::{compute_policy, expected_cost};

    fn scheme(rates: &[&str]) -> TouScheme {
        TouScheme::from_rates(&rates.iter().map(|s| s.parse::<Rate>().unwrap()).collect::<Vec<_>>()).unwrap()
    }

    fn points(step: f64, cells: &[usize]) -> Vec<DiscreteDemand> {
        cells.iter().map(|&c| DiscreteDemand::point_mass(step, c).unwrap()).collect()
    }

    #[test]
    fn zero_capacity_is_spot_bill() {
        let s = scheme(&["10", "20", "5"]);
        let demands = vec![
            DiscreteDemand::from_masses(0.5, vec![0.25, 0.5, 0.25]).unwrap(),
            DiscreteDemand::from_masses(0.5, vec![0.0, 0.5, 0.0, 0.5]).unwrap(),
            DiscreteDemand::point_mass(0.5, 2).unwrap(),
        ];
        let (cost, table) = brute_force_dp(&s, &demands, 0).unwrap();
        let spot: f64 = demands.iter().zip(s.rates_f64()).map(|(d, r)| d.mean() * r).sum();
        assert!((cost - spot).abs() < 1e-12);
        assert_eq!(table.stages.len(), 3);
        assert!(table.stages.iter().all(|st| st.value.len() == 1));
    }

    #[test]
    fn two_period_hand_example() {
        let (cost, _) = brute_force_dp(&scheme(&["10", "5"]), &points(1.0, &[3, 1]), 2).unwrap();
        assert_eq!(cost, 25.0);
    }

    #[test]
    fn point_mass_instance_matches_policy() {
        let s = scheme(&["8", "12", "5"]);
        let demands = points(1.0, &[1, 2, 1]);
        let policy = compute_policy(&s, &demands, 1e-9).unwrap();
        for c in 0..6 {
            let (dp, _) = brute_force_dp(&s, &demands, c).unwrap();
            assert_eq!(dp, expected_cost(&policy, c, &s, &demands).unwrap(), "capacity {c}");
        }
    }

    #[test]
    fn guards_large_state_spaces() {
        let s = scheme(&["10", "5"]);
        let demands = points(0.01, &[300, 300]);
        assert!(matches!(brute_force_dp(&s, &demands, 4000), Err(OracleError::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn value_functions_are_convex() {
        let s = scheme(&["7", "11", "9", "13", "4"]);
        let demands = vec![
            DiscreteDemand::from_masses(1.0, vec![0.1, 0.3, 0.4, 0.2]).unwrap(),
            DiscreteDemand::from_masses(1.0, vec![0.0, 0.5, 0.5]).unwrap(),
            DiscreteDemand::from_masses(1.0, vec![0.3, 0.3, 0.4]).unwrap(),
            DiscreteDemand::from_masses(1.0, vec![0.2, 0.0, 0.0, 0.8]).unwrap(),
            DiscreteDemand::from_masses(1.0, vec![0.5, 0.5]).unwrap(),
        ];
        let (_, table) = brute_force_dp(&s, &demands, 12).unwrap();
        for stage in &table.stages {
            assert!(convexity_violation(&stage.value) < 1e-9);
        }
    }

    #[test]
    fn sampler_inverts_cdf() {
        let d = DiscreteDemand::from_masses(1.0, vec![0.25, 0.0, 0.75]).unwrap();
        let sampler = DemandSampler::new(&d);
        assert_eq!(sampler.cells_for(0.0), 0);
        assert_eq!(sampler.cells_for(0.2499), 0);
        assert_eq!(sampler.cells_for(0.25), 2);
        assert_eq!(sampler.cells_for(0.9999), 2);
    }

    #[test]
    fn simulation_is_reproducible_and_exact_for_point_masses() {
        let s = scheme(&["8", "12", "5"]);
        let demands = points(1.0, &[1, 2, 1]);
        let policy = compute_policy(&s, &demands, 1e-9).unwrap();
        let a = simulate_policy(&policy, 2, &s, &demands, 1000, 7).unwrap();
        let b = simulate_policy(&policy, 2, &s, &demands, 1000, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sd_cost, 0.0);
        assert!((a.mean_cost - expected_cost(&policy, 2, &s, &demands).unwrap()).abs() < 1e-9);
        assert_eq!(simulate_policy(&policy, 2, &s, &demands, 0, 7), Err(OracleError::NoDays));
    }
}
