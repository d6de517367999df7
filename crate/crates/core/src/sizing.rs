//! Storage sizing: choose the capacity where the daily marginal revenue of one
//! more kWh of storage falls to its amortized daily cost.
//!
//! One extra cell of capacity raises every reservation that the capacity
//! binds (`M_i > C`) by one cell and starts the day with one more cell. Its
//! value is the saving of each of those cells, `MR_i(C) - rate_i`, with the
//! extra start-of-day cell priced at the overnight refill rate. Summed, this
//! equals `cost(C) - cost(C + step)` per kWh exactly on the grid.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::demand::DiscreteDemand;
use crate::money::Rate;
use crate::policy::{
    self, bisect_first_at_most, check_inputs, compute_policy, expected_cost, MonotoneProbe, PolicyError,
    Reservation, ReservationPolicy,
};
use crate::tariff::{pi_max, TouScheme};

pub const DEFAULT_CURVE_POINTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SizingError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("amortized storage cost must be positive, got {0}")]
    NonPositiveCost(Rate),
}

/// Per-period breakdown of the capacity marginal revenue at one capacity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityMarginalRevenue {
    /// Contribution of the extra start-of-day cell, refilled overnight.
    pub overnight: f64,
    /// Contribution of each period whose reservation the capacity binds
    /// (zero elsewhere). The last entry is always zero; its refill is the
    /// overnight term.
    pub periods: Vec<f64>,
}

impl CapacityMarginalRevenue {
    pub fn total(&self) -> f64 {
        self.overnight + self.periods.iter().sum::<f64>()
    }
}

pub fn capacity_marginal_revenue_breakdown(
    capacity: usize,
    policy: &ReservationPolicy,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
) -> Result<CapacityMarginalRevenue, SizingError> {
    check_inputs(scheme, demands)?;
    let n = scheme.len();
    if policy.len() != n {
        return Err(PolicyError::PeriodCountMismatch { expected: n, found: policy.len() }.into());
    }
    let thresholds = policy.thresholds();
    let rates = scheme.rates_f64();
    let mut periods = vec![0.0; n];
    for i in 0..n - 1 {
        if policy.reservations()[i].exceeds(capacity) {
            periods[i] = policy::marginal_revenue(i, capacity, &thresholds, demands, scheme)? - rates[i];
        }
    }
    let overnight =
        policy::start_of_day_marginal_revenue(capacity, &thresholds, demands, scheme)? - scheme.off_peak_rate().cents();
    Ok(CapacityMarginalRevenue { overnight, periods })
}

/// Total daily marginal revenue of capacity, ¢ per kWh of capacity.
pub fn capacity_marginal_revenue(
    capacity: usize,
    policy: &ReservationPolicy,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
) -> Result<f64, SizingError> {
    Ok(capacity_marginal_revenue_breakdown(capacity, policy, scheme, demands)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SizingOptions {
    pub tol: f64,
    pub curve_points: usize,
}

impl Default for SizingOptions {
    fn default() -> Self {
        Self { tol: policy::DEFAULT_TOL, curve_points: DEFAULT_CURVE_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizingResult {
    pub feasible: bool,
    pub pi_s: Rate,
    pub pi_max: Rate,
    pub step: f64,
    pub c_star_cells: usize,
    /// Optimal capacity in kWh (zero when infeasible).
    pub c_star: f64,
    /// Total marginal revenue at `c_star - step` and `c_star`; `pi_s` lies
    /// between them (the first is absent when `c_star` is zero).
    pub bracket: (Option<f64>, f64),
    /// Sampled `(capacity kWh, total marginal revenue)` pairs, ascending.
    pub mr_curve: Vec<(f64, f64)>,
    pub expected_daily_cost_at_c_star: f64,
    pub expected_daily_cost_without_storage: f64,
    pub search_upper_cells: usize,
    pub warnings: Vec<String>,
}

impl SizingResult {
    /// Operating cost plus amortized storage cost at the chosen capacity.
    pub fn total_daily_cost(&self) -> f64 {
        self.expected_daily_cost_at_c_star + self.pi_s.cents() * self.c_star
    }

    pub fn daily_savings(&self) -> f64 {
        self.expected_daily_cost_without_storage - self.total_daily_cost()
    }
}

/// Capacity beyond which marginal revenue is zero: one full day of demand,
/// or the largest finite reservation if that is larger.
pub fn search_upper_bound(policy: &ReservationPolicy, demands: &[DiscreteDemand]) -> usize {
    let day: usize = demands.iter().map(|d| d.support_max()).sum();
    policy.max_finite().unwrap_or(0).max(day)
}

pub fn optimal_capacity(
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
    pi_s: Rate,
    options: SizingOptions,
) -> Result<SizingResult, SizingError> {
    let policy = compute_policy(scheme, demands, options.tol)?;
    optimal_capacity_for_policy(&policy, scheme, demands, pi_s, options)
}

pub fn optimal_capacity_for_policy(
    policy: &ReservationPolicy,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
    pi_s: Rate,
    options: SizingOptions,
) -> Result<SizingResult, SizingError> {
    if !pi_s.is_positive() {
        return Err(SizingError::NonPositiveCost(pi_s));
    }
    if options.tol.is_nan() || options.tol <= 0.0 {
        return Err(PolicyError::InvalidTolerance(options.tol).into());
    }
    let step = check_inputs(scheme, demands)?;
    let max_profit = pi_max(scheme);
    let upper = search_upper_bound(policy, demands);
    let without_storage = expected_cost(policy, 0, scheme, demands)?;

    let mut warnings = Vec::new();
    let n = scheme.len();
    if policy.reservations()[..n - 1].contains(&Reservation::Unbounded) {
        warnings.push(format!(
            "unbounded reservations before the last period; capacity search capped at one day of demand ({:.4} kWh)",
            upper as f64 * step
        ));
    }

    let mr_curve = sample_curve(policy, scheme, demands, upper, options.curve_points)?;

    if pi_s > max_profit {
        return Ok(SizingResult {
            feasible: false,
            pi_s,
            pi_max: max_profit,
            step,
            c_star_cells: 0,
            c_star: 0.0,
            bracket: (None, capacity_marginal_revenue(0, policy, scheme, demands)?),
            mr_curve,
            expected_daily_cost_at_c_star: without_storage,
            expected_daily_cost_without_storage: without_storage,
            search_upper_cells: upper,
            warnings,
        });
    }

    let max_rate = scheme.rates_f64().into_iter().fold(0.0, f64::max);
    let mut probe = MonotoneProbe::new(n, options.tol.max(1e-9 * max_rate));
    let target = pi_s.cents() + options.tol;
    let c_star = bisect_first_at_most(upper, target, |c| {
        let mr = capacity_marginal_revenue(c, policy, scheme, demands).map_err(|e| match e {
            SizingError::Policy(p) => p,
            SizingError::NonPositiveCost(_) => unreachable!(),
        })?;
        probe.record(c, mr)
    })?;
    let at = capacity_marginal_revenue(c_star, policy, scheme, demands)?;
    let before = match c_star {
        0 => None,
        c => Some(capacity_marginal_revenue(c - 1, policy, scheme, demands)?),
    };
    Ok(SizingResult {
        feasible: true,
        pi_s,
        pi_max: max_profit,
        step,
        c_star_cells: c_star,
        c_star: c_star as f64 * step,
        bracket: (before, at),
        mr_curve,
        expected_daily_cost_at_c_star: expected_cost(policy, c_star, scheme, demands)?,
        expected_daily_cost_without_storage: without_storage,
        search_upper_cells: upper,
        warnings,
    })
}

fn sample_curve(
    policy: &ReservationPolicy,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
    upper: usize,
    points: usize,
) -> Result<Vec<(f64, f64)>, SizingError> {
    if points == 0 {
        return Ok(Vec::new());
    }
    let mut cells: Vec<usize> = if points == 1 || upper == 0 {
        vec![0]
    } else {
        (0..points).map(|k| (k * upper + (points - 1) / 2) / (points - 1)).collect()
    };
    cells.dedup();
    let step = policy.step();
    cells
        .par_iter()
        .map(|&c| Ok((c as f64 * step, capacity_marginal_revenue(c, policy, scheme, demands)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme(rates: &[&str]) -> TouScheme {
        TouScheme::from_rates(&rates.iter().map(|s| s.parse::<Rate>().unwrap()).collect::<Vec<_>>()).unwrap()
    }

    fn points(step: f64, cells: &[usize]) -> Vec<DiscreteDemand> {
        cells.iter().map(|&c| DiscreteDemand::point_mass(step, c).unwrap()).collect()
    }

    #[test]
    fn step_function_marginal_revenue() {
        // Rates [8, 12, 5], demand 1, 2, 1 kWh on a 1 kWh grid; M_1 = 2.
        let s = scheme(&["8", "12", "5"]);
        let demands = points(1.0, &[1, 2, 1]);
        let policy = compute_policy(&s, &demands, 1e-9).unwrap();
        assert_eq!(policy.reservations()[0], Reservation::Finite(2));
        let mr = |c| capacity_marginal_revenue(c, &policy, &s, &demands).unwrap();
        assert_eq!(mr(0), 7.0);
        assert_eq!(mr(1), 7.0);
        assert_eq!(mr(2), 3.0);
        assert_eq!(mr(3), 0.0);
        assert_eq!(mr(10), 0.0);
        for c in 0..6 {
            let diff = expected_cost(&policy, c, &s, &demands).unwrap() - expected_cost(&policy, c + 1, &s, &demands).unwrap();
            assert!((diff - mr(c)).abs() < 1e-12, "c={c}: {diff} vs {}", mr(c));
        }
    }

    #[test]
    fn infeasible_when_storage_costs_more_than_spread() {
        let s = scheme(&["8", "12", "5"]);
        let demands = points(1.0, &[1, 2, 1]);
        let result = optimal_capacity(&s, &demands, "7.01".parse().unwrap(), SizingOptions::default()).unwrap();
        assert!(!result.feasible);
        assert_eq!(result.c_star, 0.0);
        assert_eq!(result.expected_daily_cost_at_c_star, result.expected_daily_cost_without_storage);
    }

    #[test]
    fn sizing_finds_first_capacity_below_cost() {
        let s = scheme(&["8", "12", "5"]);
        let demands = points(1.0, &[1, 2, 1]);
        let opts = SizingOptions { tol: 1e-9, curve_points: 8 };
        let at = |pi: &str| optimal_capacity(&s, &demands, pi.parse().unwrap(), opts).unwrap();
        assert_eq!(at("7").c_star_cells, 0);
        assert_eq!(at("5").c_star_cells, 2);
        assert_eq!(at("2").c_star_cells, 3);
        let r = at("2");
        assert_eq!(r.bracket, (Some(3.0), 0.0));
        assert_eq!(r.expected_daily_cost_at_c_star, 20.0);
        assert_eq!(r.mr_curve.first().unwrap().0, 0.0);
    }

    #[test]
    fn rejects_non_positive_cost() {
        let s = scheme(&["8", "5"]);
        let demands = points(1.0, &[1, 1]);
        assert!(matches!(
            optimal_capacity(&s, &demands, Rate::ZERO, SizingOptions::default()),
            Err(SizingError::NonPositiveCost(_))
        ));
    }
}
