//! Per-period stochastic demand on a uniform energy grid.
//!
//! Every energy quantity in the solvers (demand, reservation, storage level,
//! capacity) is an integer number of grid cells of width `step` kWh. A
//! continuous distribution is discretized by giving grid point `k` the
//! probability of `[(k - 1/2) step, (k + 1/2) step)`; grid point 0 receives
//! `[0, step/2)`. The upper tail beyond the `1 - tail_mass` quantile is folded
//! into the last cell so every support is finite.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal, Normal};
use thiserror::Error;

use crate::conv;
use crate::tariff::TouScheme;

pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_TAIL_MASS: f64 = 1e-6;

const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("grid step {step} kWh exceeds the {quantile} kWh upper quantile of a non-degenerate distribution")]
    DegenerateGrid { step: f64, quantile: f64 },
    #[error("grid steps differ: {0} vs {1} kWh")]
    GridMismatch(f64, f64),
    #[error("distribution has zero mean")]
    ZeroMean,
    #[error("invalid demand parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid discretization: {0}")]
    InvalidGrid(String),
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("expected {expected} demand periods, found {found}")]
    PeriodCountMismatch { expected: usize, found: usize },
    #[error("no users given")]
    NoUsers,
}

/// Parametric description of one period's demand, in kWh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandDescriptor {
    Exponential { mean: f64 },
    #[serde(alias = "lognormal")]
    LogNormal { mean: f64, cv: f64 },
    /// Normal with location `mean` and scale `sd`, conditioned on being nonnegative.
    TruncatedNormal { mean: f64, sd: f64 },
    PointMass { value: f64 },
    EmpiricalHistogram { bin_edges: Vec<f64>, masses: Vec<f64> },
}

impl DemandDescriptor {
    fn check(&self) -> Result<(), DemandError> {
        let bad = |msg: String| Err(DemandError::InvalidParameter(msg));
        match self {
            Self::Exponential { mean } if !(mean.is_finite() && *mean > 0.0) => {
                bad(format!("exponential mean must be positive, got {mean}"))
            }
            Self::LogNormal { mean, cv } if !(mean.is_finite() && *mean > 0.0 && cv.is_finite() && *cv > 0.0) => {
                bad(format!("lognormal needs mean > 0 and cv > 0, got mean {mean}, cv {cv}"))
            }
            Self::TruncatedNormal { mean, sd } if !(mean.is_finite() && sd.is_finite() && *sd > 0.0) => {
                bad(format!("truncated normal needs finite mean and sd > 0, got {mean}, {sd}"))
            }
            Self::PointMass { value } if !(value.is_finite() && *value >= 0.0) => {
                bad(format!("point mass must be a nonnegative value, got {value}"))
            }
            Self::EmpiricalHistogram { bin_edges, masses } => {
                if bin_edges.len() < 2 || masses.len() + 1 != bin_edges.len() {
                    return bad(format!(
                        "histogram needs n+1 edges for n masses, got {} edges and {} masses",
                        bin_edges.len(),
                        masses.len()
                    ));
                }
                if bin_edges[0] < 0.0 || bin_edges.iter().any(|e| !e.is_finite()) {
                    return bad("histogram edges must be finite and nonnegative".into());
                }
                if bin_edges.windows(2).any(|w| w[1] <= w[0]) {
                    return bad("histogram edges must be strictly increasing".into());
                }
                if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                    return bad("histogram masses must be nonnegative".into());
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > 1e-6 {
                    return bad(format!("histogram masses sum to {total}, expected 1"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { mean } | Self::LogNormal { mean, .. } => *mean,
            Self::PointMass { value } => *value,
            Self::TruncatedNormal { mean, sd } => {
                let std = Normal::standard();
                let alpha = -mean / sd;
                let tail = std.sf(alpha);
                let density = (-0.5 * alpha * alpha).exp() / (2.0 * std::f64::consts::PI).sqrt();
                mean + sd * density / tail
            }
            Self::EmpiricalHistogram { bin_edges, masses } => {
                let total: f64 = masses.iter().sum();
                masses
                    .iter()
                    .zip(bin_edges.windows(2))
                    .map(|(m, w)| m * 0.5 * (w[0] + w[1]))
                    .sum::<f64>()
                    / total
            }
        }
    }

    fn continuous(&self) -> Continuous {
        match self {
            Self::Exponential { mean } => Continuous::Exponential { mean: *mean },
            Self::LogNormal { mean, cv } => {
                let sigma2 = (1.0 + cv * cv).ln();
                let location = mean.ln() - 0.5 * sigma2;
                Continuous::LogNormal(LogNormal::new(location, sigma2.sqrt()).expect("validated parameters"))
            }
            Self::TruncatedNormal { mean, sd } => {
                let normal = Normal::new(*mean, *sd).expect("validated parameters");
                let below = normal.cdf(0.0);
                Continuous::TruncatedNormal { normal, below }
            }
            Self::EmpiricalHistogram { bin_edges, masses } => {
                let total: f64 = masses.iter().sum();
                Continuous::Histogram {
                    edges: bin_edges.clone(),
                    masses: masses.iter().map(|m| m / total).collect(),
                }
            }
            Self::PointMass { .. } => unreachable!("point masses are discretized directly"),
        }
    }
}

enum Continuous {
    Exponential { mean: f64 },
    LogNormal(LogNormal),
    TruncatedNormal { normal: Normal, below: f64 },
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
}

impl Continuous {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match self {
            Self::Exponential { mean } => -(-x / mean).exp_m1(),
            Self::LogNormal(d) => d.cdf(x),
            Self::TruncatedNormal { normal, below } => ((normal.cdf(x) - below) / (1.0 - below)).clamp(0.0, 1.0),
            Self::Histogram { edges, masses } => {
                let mut acc = 0.0;
                for (m, w) in masses.iter().zip(edges.windows(2)) {
                    if x >= w[1] {
                        acc += m;
                    } else {
                        if x > w[0] {
                            acc += m * (x - w[0]) / (w[1] - w[0]);
                        }
                        break;
                    }
                }
                acc.min(1.0)
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        match self {
            Self::Exponential { mean } => -mean * (-p).ln_1p(),
            Self::LogNormal(d) => d.inverse_cdf(p),
            Self::TruncatedNormal { normal, below } => normal.inverse_cdf(below + p * (1.0 - below)).max(0.0),
            Self::Histogram { edges, masses } => {
                let mut acc = 0.0;
                for (m, w) in masses.iter().zip(edges.windows(2)) {
                    if *m > 0.0 && acc + m >= p {
                        return w[0] + (w[1] - w[0]) * ((p - acc) / m).clamp(0.0, 1.0);
                    }
                    acc += m;
                }
                edges[edges.len() - 1]
            }
        }
    }
}

/// Demand descriptors for each period of one user's day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub periods: Vec<DemandDescriptor>,
}

impl DemandSpec {
    pub fn new(periods: Vec<DemandDescriptor>) -> Self {
        Self { periods }
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn discretize(&self, step: f64, tail_mass: f64) -> Result<Vec<DiscreteDemand>, DemandError> {
        self.periods.iter().map(|d| discretize(d, step, tail_mass)).collect()
    }
}

/// A probability mass function over grid points `0, step, 2 step, ...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteDemand {
    step: f64,
    masses: Vec<f64>,
}

impl DiscreteDemand {
    /// Builds a distribution from raw masses; trailing zero cells are dropped.
    pub fn from_masses(step: f64, mut masses: Vec<f64>) -> Result<Self, DemandError> {
        check_step(step)?;
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(DemandError::InvalidParameter("masses must be finite and nonnegative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(DemandError::NotNormalized(total));
        }
        while masses.len() > 1 && masses[masses.len() - 1] == 0.0 {
            masses.pop();
        }
        Ok(Self { step, masses })
    }

    pub fn point_mass(step: f64, cells: usize) -> Result<Self, DemandError> {
        check_step(step)?;
        let mut masses = vec![0.0; cells + 1];
        masses[cells] = 1.0;
        Ok(Self { step, masses })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Mass at each grid point; index `k` is demand `k * step` kWh.
    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, cells: usize) -> f64 {
        self.masses.get(cells).copied().unwrap_or(0.0)
    }

    /// Largest grid point carrying mass.
    pub fn support_max(&self) -> usize {
        self.masses.len() - 1
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Mean in grid cells.
    pub fn mean_cells(&self) -> f64 {
        self.masses.iter().enumerate().map(|(k, m)| k as f64 * m).sum()
    }

    pub fn mean(&self) -> f64 {
        self.mean_cells() * self.step
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean_cells();
        let var_cells: f64 = self
            .masses
            .iter()
            .enumerate()
            .map(|(k, m)| {
                let d = k as f64 - mean;
                d * d * m
            })
            .sum();
        var_cells * self.step * self.step
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Cumulative mass at each grid point, with the final entry pinned to 1.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut cum: Vec<f64> = self
            .masses
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        cum
    }

    /// Folds upper-tail cells holding at most `eps` total mass into the new
    /// last cell.
    pub fn fold_upper_tail(mut self, eps: f64) -> Self {
        let mut tail = 0.0;
        let mut cut = self.masses.len();
        while cut > 1 && tail + self.masses[cut - 1] <= eps {
            tail += self.masses[cut - 1];
            cut -= 1;
        }
        if cut < self.masses.len() {
            self.masses.truncate(cut);
            self.masses[cut - 1] += tail;
        }
        self
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        same_step(self.step, other.step)
    }
}

fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn check_step(step: f64) -> Result<(), DemandError> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(DemandError::InvalidGrid(format!("grid step must be positive, got {step}")))
    }
}

/// Rounds a kWh quantity to the nearest grid point.
pub fn to_cells(kwh: f64, step: f64) -> usize {
    (kwh / step).round().max(0.0) as usize
}

pub fn discretize(spec: &DemandDescriptor, step: f64, tail_mass: f64) -> Result<DiscreteDemand, DemandError> {
    check_step(step)?;
    if !(tail_mass > 0.0 && tail_mass <= 1e-4) {
        return Err(DemandError::InvalidGrid(format!("tail mass must be in (0, 1e-4], got {tail_mass}")));
    }
    spec.check()?;
    if let DemandDescriptor::PointMass { value } = spec {
        return DiscreteDemand::point_mass(step, to_cells(*value, step));
    }
    let dist = spec.continuous();
    let quantile = dist.quantile(1.0 - tail_mass);
    if step > quantile {
        return Err(DemandError::DegenerateGrid { step, quantile });
    }
    let last = to_cells(quantile, step).max(1);
    let mut masses = Vec::with_capacity(last + 1);
    let mut below = 0.0;
    for k in 0..last {
        let upper = dist.cdf((k as f64 + 0.5) * step);
        masses.push((upper - below).max(0.0));
        below = upper;
    }
    masses.push((1.0 - below).max(0.0));
    DiscreteDemand::from_masses(step, masses)
}

pub fn convolve(a: &DiscreteDemand, b: &DiscreteDemand) -> Result<DiscreteDemand, DemandError> {
    if !a.same_grid(b) {
        return Err(DemandError::GridMismatch(a.step, b.step));
    }
    let mut masses = conv::convolve(&a.masses, &b.masses);
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter_mut().for_each(|m| *m /= total);
    }
    DiscreteDemand::from_masses(a.step, masses)
}

/// Coefficient of variation, sd / mean.
pub fn cv(d: &DiscreteDemand) -> Result<f64, DemandError> {
    let mean = d.mean();
    if mean <= 0.0 {
        return Err(DemandError::ZeroMean);
    }
    Ok(d.sd() / mean)
}

/// Per-period demand of a group of independent users sharing one meter.
pub fn aggregate_users(users: &[DemandSpec], step: f64, tail_mass: f64) -> Result<Vec<DiscreteDemand>, DemandError> {
    let first = users.first().ok_or(DemandError::NoUsers)?;
    for user in users {
        if user.len() != first.len() {
            return Err(DemandError::PeriodCountMismatch { expected: first.len(), found: user.len() });
        }
    }
    let mut totals = first.discretize(step, tail_mass)?;
    for user in &users[1..] {
        for (total, desc) in totals.iter_mut().zip(&user.periods) {
            let next = discretize(desc, step, tail_mass)?;
            *total = convolve(total, &next)?.fold_upper_tail(1e-14);
        }
    }
    Ok(totals)
}

/// Matches a demand vector to a validated scheme. Demands given per raw
/// (pre-merge) period are convolved within each merged group.
pub fn align_to_scheme(demands: Vec<DiscreteDemand>, scheme: &TouScheme) -> Result<Vec<DiscreteDemand>, DemandError> {
    if demands.len() == scheme.len() {
        return Ok(demands);
    }
    if demands.len() != scheme.raw_len() {
        return Err(DemandError::PeriodCountMismatch { expected: scheme.len(), found: demands.len() });
    }
    scheme
        .merged_groups()
        .iter()
        .map(|group| {
            let mut acc = demands[group.start].clone();
            for d in &demands[group.start + 1..group.end] {
                acc = convolve(&acc, d)?;
            }
            Ok(acc)
        })
        .collect()
}
