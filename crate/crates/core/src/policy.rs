//! Virtual-reservation policies.
//!
//! After period `i` the user keeps at least `N_i = min(M_i, C)` kWh in storage
//! for later periods, where `M_i` is a capacity-free virtual reservation. During
//! a period the level first drops by that period's demand; if it falls strictly
//! below `N_i` the shortfall plus the top-up is bought from the grid. Energy is
//! never discarded, so the level after period `i` is `max(N_i, r_{i-1} - X_i)`.
//! The last period always refills to capacity.
//!
//! All energies are integer grid cells; see [`crate::demand`].

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conv;
use crate::demand::DiscreteDemand;
use crate::tariff::TouScheme;

pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("demand grids differ: {0} vs {1} kWh")]
    GridMismatch(f64, f64),
    #[error("period index {index} out of range for {periods} periods")]
    IndexOutOfRange { index: usize, periods: usize },
    #[error("expected {expected} demand distributions, found {found}")]
    PeriodCountMismatch { expected: usize, found: usize },
    #[error(
        "marginal revenue of period {period} increases from {low:.9} at {at_low} cells to {high:.9} at {at_high} cells"
    )]
    NotMonotone { period: usize, at_low: usize, low: f64, at_high: usize, high: f64 },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

/// A virtual reservation, in grid cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Reservation {
    Finite(usize),
    /// Keep everything: projects to the capacity for every capacity.
    Unbounded,
}

impl Reservation {
    pub fn project(self, capacity: usize) -> usize {
        match self {
            Reservation::Finite(m) => m.min(capacity),
            Reservation::Unbounded => capacity,
        }
    }

    pub fn exceeds(self, capacity: usize) -> bool {
        match self {
            Reservation::Finite(m) => m > capacity,
            Reservation::Unbounded => true,
        }
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Reservation::Finite(m) => Some(m),
            Reservation::Unbounded => None,
        }
    }

    fn threshold(self) -> Threshold {
        match self {
            Reservation::Finite(m) => Threshold::Level(m),
            Reservation::Unbounded => Threshold::Always,
        }
    }
}

/// Downstream charging rule seen by the charge-timing recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threshold {
    /// Charge when the post-demand level is strictly below this many cells.
    Level(usize),
    /// Any arriving level charges.
    Always,
}

/// `probs[k]` is the probability that period `period + 1 + k` is the first
/// future period that buys from the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChargeTimingDistribution {
    pub period: usize,
    pub probs: Vec<f64>,
}

impl ChargeTimingDistribution {
    pub fn prob(&self, j: usize) -> f64 {
        j.checked_sub(self.period + 1).and_then(|k| self.probs.get(k)).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReservationPolicy {
    virtual_reservations: Vec<Reservation>,
    step: f64,
    inputs: String,
}

impl ReservationPolicy {
    pub fn reservations(&self) -> &[Reservation] {
        &self.virtual_reservations
    }

    pub fn len(&self) -> usize {
        self.virtual_reservations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.virtual_reservations.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Digest of the tariff and demand grids the policy was solved for.
    pub fn inputs_digest(&self) -> &str {
        &self.inputs
    }

    /// Physical reservations `N_i = min(M_i, C)`.
    pub fn projections(&self, capacity: usize) -> Vec<usize> {
        self.virtual_reservations.iter().map(|r| r.project(capacity)).collect()
    }

    pub fn thresholds(&self) -> Vec<Threshold> {
        self.virtual_reservations.iter().map(|r| r.threshold()).collect()
    }

    /// Largest finite virtual reservation.
    pub fn max_finite(&self) -> Option<usize> {
        self.virtual_reservations.iter().filter_map(|r| r.finite()).max()
    }

    /// Builds a policy from explicit reservations, for evaluating alternatives.
    pub fn from_reservations(
        reservations: Vec<Reservation>,
        scheme: &TouScheme,
        demands: &[DiscreteDemand],
    ) -> Result<Self, PolicyError> {
        let step = check_inputs(scheme, demands)?;
        if reservations.len() != scheme.len() {
            return Err(PolicyError::PeriodCountMismatch { expected: scheme.len(), found: reservations.len() });
        }
        Ok(Self { virtual_reservations: reservations, step, inputs: inputs_digest(scheme, demands) })
    }
}

/// Checks demand count and grid agreement; returns the common grid step.
pub(crate) fn check_inputs(scheme: &TouScheme, demands: &[DiscreteDemand]) -> Result<f64, PolicyError> {
    if demands.len() != scheme.len() {
        return Err(PolicyError::PeriodCountMismatch { expected: scheme.len(), found: demands.len() });
    }
    let step = demands[0].step();
    for d in &demands[1..] {
        if !d.same_grid(&demands[0]) {
            return Err(PolicyError::GridMismatch(step, d.step()));
        }
    }
    Ok(step)
}

pub fn inputs_digest(scheme: &TouScheme, demands: &[DiscreteDemand]) -> String {
    let mut hasher = Sha256::new();
    for rate in scheme.rates() {
        hasher.update(rate.hundredths().to_le_bytes());
    }
    for d in demands {
        hasher.update(d.step().to_bits().to_le_bytes());
        hasher.update((d.masses().len() as u64).to_le_bytes());
        for m in d.masses() {
            hasher.update(m.to_bits().to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Sub-distribution of the storage level over cells `offset..offset + mass.len()`.
#[derive(Debug, Clone)]
struct LevelDist {
    offset: usize,
    mass: Vec<f64>,
}

/// Distribution of `level - demand` over signed cells starting at `base`.
struct Drawdown {
    base: i64,
    mass: Vec<f64>,
}

impl LevelDist {
    fn point(level: usize) -> Self {
        Self { offset: level, mass: vec![1.0] }
    }

    fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    fn draw_down(&self, demand: &DiscreteDemand) -> Drawdown {
        let reversed: Vec<f64> = demand.masses().iter().rev().copied().collect();
        Drawdown {
            base: self.offset as i64 - demand.support_max() as i64,
            mass: conv::convolve(&self.mass, &reversed),
        }
    }
}

impl Drawdown {
    /// Splits at `floor`: returns the mass strictly below it and the
    /// surviving part at or above it.
    fn split_below(self, floor: usize) -> (f64, Option<LevelDist>) {
        let cut = (floor as i64 - self.base).clamp(0, self.mass.len() as i64) as usize;
        let below: f64 = self.mass[..cut].iter().sum();
        let mut rest = &self.mass[cut..];
        let mut offset = (self.base + cut as i64) as usize;
        while let Some((&0.0, tail)) = rest.split_first() {
            rest = tail;
            offset += 1;
        }
        let survivors = (!rest.is_empty()).then(|| LevelDist { offset, mass: rest.to_vec() });
        (below, survivors)
    }

    /// Refills everything below `floor` up to it. Returns the expected top-up
    /// (cells of shortfall plus refill) and the resulting level distribution.
    fn refill_to(self, floor: usize) -> (f64, LevelDist) {
        let cut = (floor as i64 - self.base).clamp(0, self.mass.len() as i64) as usize;
        let mut refilled = 0.0;
        let mut bought = 0.0;
        for (j, &m) in self.mass[..cut].iter().enumerate() {
            refilled += m;
            bought += m * (floor as i64 - (self.base + j as i64)) as f64;
        }
        let top = self.base + self.mass.len() as i64 - 1;
        let end = (top.max(floor as i64) + 1) as usize;
        let mut mass = vec![0.0; end - floor];
        mass[0] = refilled;
        for (j, &m) in self.mass[cut..].iter().enumerate() {
            let level = (self.base + (cut + j) as i64) as usize;
            mass[level - floor] += m;
        }
        (bought, LevelDist { offset: floor, mass })
    }
}

/// First-charge probabilities over every period, starting with `level` cells
/// in storage just before period `first`. Entries before `first` are zero.
fn first_charge(first: usize, level: usize, thresholds: &[Threshold], demands: &[DiscreteDemand]) -> Vec<f64> {
    let n = demands.len();
    let mut probs = vec![0.0; n];
    let mut dist = LevelDist::point(level);
    for k in first..n {
        let floor = match thresholds[k] {
            _ if k + 1 == n => None,
            Threshold::Always => None,
            Threshold::Level(floor) => Some(floor),
        };
        let Some(floor) = floor else {
            probs[k] = dist.total();
            break;
        };
        let (below, survivors) = dist.draw_down(&demands[k]).split_below(floor);
        probs[k] = below;
        match survivors {
            Some(next) => dist = next,
            None => break,
        }
    }
    probs
}

fn check_period(i: usize, n: usize) -> Result<(), PolicyError> {
    if i + 1 >= n {
        return Err(PolicyError::IndexOutOfRange { index: i, periods: n });
    }
    Ok(())
}

/// Probability that each later period is the first to buy from the grid when
/// `level` cells are held after period `i` and `downstream` rules apply to
/// periods `i+1..n` (entries up to `i` are ignored; the last period always
/// charges).
pub fn charge_timing_probs(
    i: usize,
    level: usize,
    downstream: &[Threshold],
    demands: &[DiscreteDemand],
) -> Result<ChargeTimingDistribution, PolicyError> {
    check_period(i, demands.len())?;
    check_grid(demands)?;
    if downstream.len() != demands.len() {
        return Err(PolicyError::PeriodCountMismatch { expected: demands.len(), found: downstream.len() });
    }
    let probs = first_charge(i + 1, level, downstream, demands);
    Ok(ChargeTimingDistribution { period: i, probs: probs[i + 1..].to_vec() })
}

/// First-charge probabilities for energy held at the start of the day,
/// indexed by period.
pub fn start_of_day_charge_timing(
    level: usize,
    thresholds: &[Threshold],
    demands: &[DiscreteDemand],
) -> Result<Vec<f64>, PolicyError> {
    check_grid(demands)?;
    if thresholds.len() != demands.len() {
        return Err(PolicyError::PeriodCountMismatch { expected: demands.len(), found: thresholds.len() });
    }
    Ok(first_charge(0, level, thresholds, demands))
}

fn check_grid(demands: &[DiscreteDemand]) -> Result<(), PolicyError> {
    let Some(first) = demands.first() else {
        return Err(PolicyError::PeriodCountMismatch { expected: 1, found: 0 });
    };
    for d in &demands[1..] {
        if !d.same_grid(first) {
            return Err(PolicyError::GridMismatch(first.step(), d.step()));
        }
    }
    Ok(())
}

fn weighted_rate(probs: &[f64], rates: &[f64]) -> f64 {
    probs.iter().zip(rates).map(|(p, r)| p * r).sum()
}

/// Expected saving, in ¢/kWh, from holding one more cell after period `i`:
/// the rate of the period that would otherwise have bought it.
pub fn marginal_revenue(
    i: usize,
    level: usize,
    downstream: &[Threshold],
    demands: &[DiscreteDemand],
    scheme: &TouScheme,
) -> Result<f64, PolicyError> {
    let timing = charge_timing_probs(i, level, downstream, demands)?;
    Ok(weighted_rate(&timing.probs, &scheme.rates_f64()[i + 1..]))
}

/// Same as [`marginal_revenue`] for energy held at the start of the day.
pub fn start_of_day_marginal_revenue(
    level: usize,
    thresholds: &[Threshold],
    demands: &[DiscreteDemand],
    scheme: &TouScheme,
) -> Result<f64, PolicyError> {
    let probs = start_of_day_charge_timing(level, thresholds, demands)?;
    Ok(weighted_rate(&probs, &scheme.rates_f64()))
}

/// Evaluations of a nonincreasing function made during a bisection, checked
/// for monotonicity as they arrive.
pub(crate) struct MonotoneProbe {
    period: usize,
    slack: f64,
    seen: Vec<(usize, f64)>,
}

impl MonotoneProbe {
    pub(crate) fn new(period: usize, slack: f64) -> Self {
        Self { period, slack, seen: Vec::new() }
    }

    pub(crate) fn record(&mut self, at: usize, value: f64) -> Result<f64, PolicyError> {
        for &(other, seen) in &self.seen {
            let (at_low, low, at_high, high) = if other < at { (other, seen, at, value) } else { (at, value, other, seen) };
            if at_low != at_high && high > low + self.slack {
                return Err(PolicyError::NotMonotone { period: self.period, at_low, low, at_high, high });
            }
        }
        self.seen.push((at, value));
        Ok(value)
    }
}

/// Smallest `x` in `0..=hi` with `f(x) <= target`, assuming `f` nonincreasing
/// and `f(hi) <= target`.
pub(crate) fn bisect_first_at_most(
    hi: usize,
    target: f64,
    mut f: impl FnMut(usize) -> Result<f64, PolicyError>,
) -> Result<usize, PolicyError> {
    if f(0)? <= target {
        return Ok(0);
    }
    let (mut lo, mut hi) = (0usize, hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Optimal virtual reservation for period `i` given solved reservations for
/// the later periods.
pub fn solve_reservation(
    i: usize,
    downstream: &[Reservation],
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
    tol: f64,
) -> Result<Reservation, PolicyError> {
    check_inputs(scheme, demands)?;
    let n = scheme.len();
    if i >= n {
        return Err(PolicyError::IndexOutOfRange { index: i, periods: n });
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(PolicyError::InvalidTolerance(tol));
    }
    if i + 1 == n {
        return Ok(Reservation::Unbounded);
    }
    if downstream.len() != n {
        return Err(PolicyError::PeriodCountMismatch { expected: n, found: downstream.len() });
    }
    let rate = scheme.rate(i);
    if rate >= scheme.rate(i + 1) {
        return Ok(Reservation::Finite(0));
    }
    if rate == scheme.off_peak_rate() {
        // Later energy is never cheaper; no finite root exists.
        return Ok(Reservation::Unbounded);
    }
    let thresholds: Vec<Threshold> = downstream.iter().map(|r| r.threshold()).collect();
    let target = rate.cents() + tol;
    let upper: usize = demands[i + 1..].iter().map(|d| d.support_max()).sum();
    let max_rate = scheme.rates_f64().into_iter().fold(0.0, f64::max);
    let mut probe = MonotoneProbe::new(i, tol.max(1e-9 * max_rate));
    let mut revenue = |m: usize| probe.record(m, marginal_revenue(i, m, &thresholds, demands, scheme)?);
    if revenue(upper)? > target {
        return Ok(Reservation::Unbounded);
    }
    bisect_first_at_most(upper, target, revenue).map(Reservation::Finite)
}

/// Backward pass over all periods.
pub fn compute_policy(scheme: &TouScheme, demands: &[DiscreteDemand], tol: f64) -> Result<ReservationPolicy, PolicyError> {
    let step = check_inputs(scheme, demands)?;
    let n = scheme.len();
    let mut reservations = vec![Reservation::Unbounded; n];
    for i in (0..n - 1).rev() {
        reservations[i] = solve_reservation(i, &reservations, scheme, demands, tol)?;
    }
    Ok(ReservationPolicy { virtual_reservations: reservations, step, inputs: inputs_digest(scheme, demands) })
}

/// Expected grid purchases and costs of running a policy for one day.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyEvaluation {
    pub capacity_cells: usize,
    pub projections: Vec<usize>,
    /// kWh bought in each period.
    pub purchases: Vec<f64>,
    /// ¢ spent in each period.
    pub costs: Vec<f64>,
    pub total: f64,
}

/// Expected purchases in periods `first..n`, starting with `level` cells just
/// before period `first` and following `projections` (the last period refills
/// to `capacity`).
fn expected_purchases(
    first: usize,
    level: usize,
    projections: &[usize],
    capacity: usize,
    demands: &[DiscreteDemand],
) -> Vec<f64> {
    let n = demands.len();
    let mut purchases = vec![0.0; n];
    let mut dist = LevelDist::point(level);
    for k in first..n {
        let floor = if k + 1 == n { capacity } else { projections[k].min(capacity) };
        let (bought, next) = dist.draw_down(&demands[k]).refill_to(floor);
        purchases[k] = bought;
        dist = next;
    }
    purchases
}

/// Daily cost of following arbitrary physical reservations `projections`
/// with storage capacity `capacity` (both in cells).
pub fn evaluate_projections(
    projections: &[usize],
    capacity: usize,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
) -> Result<PolicyEvaluation, PolicyError> {
    let step = check_inputs(scheme, demands)?;
    if projections.len() != scheme.len() {
        return Err(PolicyError::PeriodCountMismatch { expected: scheme.len(), found: projections.len() });
    }
    let cells = expected_purchases(0, capacity, projections, capacity, demands);
    let purchases: Vec<f64> = cells.iter().map(|c| c * step).collect();
    let costs: Vec<f64> = purchases.iter().zip(scheme.rates_f64()).map(|(q, r)| q * r).collect();
    let total = costs.iter().sum();
    Ok(PolicyEvaluation {
        capacity_cells: capacity,
        projections: projections.iter().map(|&p| p.min(capacity)).collect(),
        purchases,
        costs,
        total,
    })
}

pub fn evaluate_policy(
    policy: &ReservationPolicy,
    capacity: usize,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
) -> Result<PolicyEvaluation, PolicyError> {
    if policy.len() != scheme.len() {
        return Err(PolicyError::PeriodCountMismatch { expected: scheme.len(), found: policy.len() });
    }
    evaluate_projections(&policy.projections(capacity), capacity, scheme, demands)
}

/// Expected daily cost in cents.
pub fn expected_cost(
    policy: &ReservationPolicy,
    capacity: usize,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
) -> Result<f64, PolicyError> {
    Ok(evaluate_policy(policy, capacity, scheme, demands)?.total)
}

/// Expected cost of periods `i+1..n` when `level` cells are held after
/// period `i`.
pub fn cost_to_go(
    i: usize,
    level: usize,
    projections: &[usize],
    capacity: usize,
    scheme: &TouScheme,
    demands: &[DiscreteDemand],
) -> Result<f64, PolicyError> {
    let step = check_inputs(scheme, demands)?;
    check_period(i, scheme.len())?;
    if projections.len() != scheme.len() {
        return Err(PolicyError::PeriodCountMismatch { expected: scheme.len(), found: projections.len() });
    }
    let cells = expected_purchases(i + 1, level, projections, capacity, demands);
    Ok(cells.iter().zip(scheme.rates_f64()).map(|(c, r)| c * step * r).sum())
}
