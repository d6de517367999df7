//! Python bindings for the storage solver.
//!
//! Energies are in kWh on the demand grid, rates in cents per kWh.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tou_core::config;
use tou_core::demand::{self, DemandDescriptor};
use tou_core::experiments;
use tou_core::oracle::{self, OracleError};
use tou_core::policy::{self, PolicyError, Threshold, DEFAULT_TOL};
use tou_core::sizing::{self, SizingError, SizingOptions};
use tou_core::tariff;
use tou_core::{DiscreteDemand, Rate, Reservation, ReservationPolicy, TouScheme};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy_error(e: PolicyError) -> PyErr {
    match e {
        PolicyError::NotMonotone { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_error(other),
    }
}

fn sizing_error(e: SizingError) -> PyErr {
    match e {
        SizingError::Policy(p) => policy_error(p),
        other => value_error(other),
    }
}

fn oracle_error(e: OracleError) -> PyErr {
    match e {
        OracleError::StateSpaceTooLarge { .. } => PyRuntimeError::new_err(e.to_string()),
        other => value_error(other),
    }
}

fn experiment_error(e: experiments::ExperimentError) -> PyErr {
    match e {
        experiments::ExperimentError::Sizing(s) => sizing_error(s),
        experiments::ExperimentError::Oracle(o) => oracle_error(o),
        other => value_error(other),
    }
}

fn rate_from_f64(cents: f64) -> PyResult<Rate> {
    Rate::from_cents_f64(cents).ok_or_else(|| value_error(format!("rate {cents} is not a valid price")))
}

/// A validated time-of-use tariff.
#[pyclass(name = "Tariff", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTariff {
    inner: TouScheme,
}

#[pymethods]
impl PyTariff {
    /// Equal-length periods with the given rates; the last must be the cheapest.
    #[new]
    fn new(rates: Vec<f64>) -> PyResult<Self> {
        let rates = rates.into_iter().map(rate_from_f64).collect::<PyResult<Vec<_>>>()?;
        Ok(Self { inner: TouScheme::from_rates(&rates).map_err(value_error)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: config::parse_tariff(text, "<string>").map_err(value_error)? })
    }

    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: config::load_tariff(&path).map_err(value_error)? })
    }

    #[getter]
    fn rates(&self) -> Vec<f64> {
        self.inner.rates_f64()
    }

    /// Start and end hour of each merged period.
    #[getter]
    fn periods(&self) -> Vec<(f64, f64)> {
        self.inner.periods().iter().map(|p| (p.start, p.end)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn pi_max(&self) -> f64 {
        tariff::pi_max(&self.inner).cents()
    }

    /// `(maxima, minima)` of the cyclic rate sequence.
    fn local_extrema(&self) -> (Vec<f64>, Vec<f64>) {
        let e = tariff::local_extrema(&self.inner);
        (e.maxima.iter().map(|r| r.cents()).collect(), e.minima.iter().map(|r| r.cents()).collect())
    }

    fn __repr__(&self) -> String {
        let rates: Vec<String> = self.inner.rates().iter().map(Rate::to_string).collect();
        format!("Tariff([{}])", rates.join(", "))
    }
}

/// One period's demand on an energy grid.
#[pyclass(name = "Demand", frozen, from_py_object)]
#[derive(Clone)]
pub struct PyDemand {
    inner: DiscreteDemand,
}

fn discretized(descriptor: DemandDescriptor, step: f64, tail_mass: f64) -> PyResult<PyDemand> {
    Ok(PyDemand { inner: demand::discretize(&descriptor, step, tail_mass).map_err(value_error)? })
}

#[pymethods]
impl PyDemand {
    /// Probability masses on cells `0, step, 2*step, ...`.
    #[new]
    fn new(step: f64, masses: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: DiscreteDemand::from_masses(step, masses).map_err(value_error)? })
    }

    #[staticmethod]
    #[pyo3(signature = (mean, step = demand::DEFAULT_GRID_STEP, tail_mass = demand::DEFAULT_TAIL_MASS))]
    fn exponential(mean: f64, step: f64, tail_mass: f64) -> PyResult<Self> {
        discretized(DemandDescriptor::Exponential { mean }, step, tail_mass)
    }

    #[staticmethod]
    #[pyo3(signature = (mean, cv, step = demand::DEFAULT_GRID_STEP, tail_mass = demand::DEFAULT_TAIL_MASS))]
    fn log_normal(mean: f64, cv: f64, step: f64, tail_mass: f64) -> PyResult<Self> {
        discretized(DemandDescriptor::LogNormal { mean, cv }, step, tail_mass)
    }

    #[staticmethod]
    #[pyo3(signature = (mean, sd, step = demand::DEFAULT_GRID_STEP, tail_mass = demand::DEFAULT_TAIL_MASS))]
    fn truncated_normal(mean: f64, sd: f64, step: f64, tail_mass: f64) -> PyResult<Self> {
        discretized(DemandDescriptor::TruncatedNormal { mean, sd }, step, tail_mass)
    }

    #[staticmethod]
    #[pyo3(signature = (value, step = demand::DEFAULT_GRID_STEP))]
    fn point_mass(value: f64, step: f64) -> PyResult<Self> {
        discretized(DemandDescriptor::PointMass { value }, step, demand::DEFAULT_TAIL_MASS)
    }

    #[staticmethod]
    #[pyo3(signature = (bin_edges, masses, step = demand::DEFAULT_GRID_STEP, tail_mass = demand::DEFAULT_TAIL_MASS))]
    fn histogram(bin_edges: Vec<f64>, masses: Vec<f64>, step: f64, tail_mass: f64) -> PyResult<Self> {
        discretized(DemandDescriptor::EmpiricalHistogram { bin_edges, masses }, step, tail_mass)
    }

    /// Total demand of independent draws from `self` and `other`.
    fn convolve(&self, other: &PyDemand) -> PyResult<Self> {
        Ok(Self { inner: demand::convolve(&self.inner, &other.inner).map_err(value_error)? })
    }

    #[getter]
    fn step(&self) -> f64 {
        self.inner.step()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses().to_vec()
    }

    #[getter]
    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    #[getter]
    fn sd(&self) -> f64 {
        self.inner.sd()
    }

    #[getter]
    fn cv(&self) -> PyResult<f64> {
        demand::cv(&self.inner).map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Demand(step={}, cells={}, mean={:.4})", self.inner.step(), self.inner.masses().len(), self.inner.mean())
    }
}

/// Loads a demand file on a grid; several users are pooled into one meter.
#[pyfunction]
#[pyo3(signature = (path, tariff, step = demand::DEFAULT_GRID_STEP, tail_mass = demand::DEFAULT_TAIL_MASS))]
fn load_demand(path: std::path::PathBuf, tariff: &PyTariff, step: f64, tail_mass: f64) -> PyResult<Vec<PyDemand>> {
    let users = config::load_demand(&path).map_err(value_error)?;
    let grid = if users.len() == 1 {
        users[0].discretize(step, tail_mass)
    } else {
        demand::aggregate_users(&users, step, tail_mass)
    }
    .map_err(value_error)?;
    let aligned = demand::align_to_scheme(grid, &tariff.inner).map_err(value_error)?;
    Ok(aligned.into_iter().map(|inner| PyDemand { inner }).collect())
}

fn unwrap_demands(demands: &[PyDemand]) -> Vec<DiscreteDemand> {
    demands.iter().map(|d| d.inner.clone()).collect()
}

fn grid_step(demands: &[DiscreteDemand]) -> PyResult<f64> {
    demands.first().map(DiscreteDemand::step).ok_or_else(|| value_error("no demand periods"))
}

fn to_cells(kwh: f64, step: f64) -> PyResult<usize> {
    if !(kwh.is_finite() && kwh >= 0.0) {
        return Err(value_error(format!("energy must be nonnegative, got {kwh}")));
    }
    Ok(demand::to_cells(kwh, step))
}

/// Virtual reservations for one tariff and demand profile.
#[pyclass(name = "Policy", frozen)]
pub struct PyPolicy {
    inner: ReservationPolicy,
    scheme: TouScheme,
    demands: Vec<DiscreteDemand>,
}

#[pymethods]
impl PyPolicy {
    /// Virtual reservations in kWh; `inf` where the reservation is unbounded.
    #[getter]
    fn reservations(&self) -> Vec<f64> {
        let step = self.inner.step();
        self.inner
            .reservations()
            .iter()
            .map(|r| match r {
                Reservation::Finite(m) => *m as f64 * step,
                Reservation::Unbounded => f64::INFINITY,
            })
            .collect()
    }

    #[getter]
    fn step(&self) -> f64 {
        self.inner.step()
    }

    /// Physical reservations `min(M_i, C)` in kWh.
    fn projections(&self, capacity: f64) -> PyResult<Vec<f64>> {
        let step = self.inner.step();
        let cells = to_cells(capacity, step)?;
        Ok(self.inner.projections(cells).into_iter().map(|c| c as f64 * step).collect())
    }

    /// Expected daily grid cost in cents with storage capacity `capacity` kWh.
    fn expected_cost(&self, capacity: f64) -> PyResult<f64> {
        let cells = to_cells(capacity, self.inner.step())?;
        policy::expected_cost(&self.inner, cells, &self.scheme, &self.demands).map_err(policy_error)
    }

    /// Expected kWh bought in each period.
    fn expected_purchases(&self, capacity: f64) -> PyResult<Vec<f64>> {
        let cells = to_cells(capacity, self.inner.step())?;
        Ok(policy::evaluate_policy(&self.inner, cells, &self.scheme, &self.demands).map_err(policy_error)?.purchases)
    }

    /// Probability that each later period is the first to buy from the grid,
    /// holding `level` kWh after `period`. With a capacity, later periods
    /// follow the projected reservations.
    #[pyo3(signature = (period, level, capacity = None))]
    fn charge_timing(&self, period: usize, level: f64, capacity: Option<f64>) -> PyResult<Vec<f64>> {
        let thresholds = self.thresholds(capacity)?;
        let cells = to_cells(level, self.inner.step())?;
        let timing = policy::charge_timing_probs(period, cells, &thresholds, &self.demands).map_err(policy_error)?;
        Ok(timing.probs)
    }

    /// Expected saving in cents/kWh from one more grid cell held after `period`.
    #[pyo3(signature = (period, level, capacity = None))]
    fn marginal_revenue(&self, period: usize, level: f64, capacity: Option<f64>) -> PyResult<f64> {
        let thresholds = self.thresholds(capacity)?;
        let cells = to_cells(level, self.inner.step())?;
        policy::marginal_revenue(period, cells, &thresholds, &self.demands, &self.scheme).map_err(policy_error)
    }

    /// Total marginal revenue of storage capacity at `capacity` kWh.
    fn capacity_marginal_revenue(&self, capacity: f64) -> PyResult<f64> {
        let cells = to_cells(capacity, self.inner.step())?;
        sizing::capacity_marginal_revenue(cells, &self.inner, &self.scheme, &self.demands).map_err(sizing_error)
    }

    /// Monte Carlo estimate of the daily cost.
    #[pyo3(signature = (capacity, days, seed = 0))]
    fn simulate<'py>(&self, py: Python<'py>, capacity: f64, days: u64, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let cells = to_cells(capacity, self.inner.step())?;
        let report = py
            .detach(|| oracle::simulate_policy(&self.inner, cells, &self.scheme, &self.demands, days, seed))
            .map_err(oracle_error)?;
        let out = PyDict::new(py);
        out.set_item("days", report.days)?;
        out.set_item("mean_cost", report.mean_cost)?;
        out.set_item("sd_cost", report.sd_cost)?;
        out.set_item("cv_cost", report.cv_cost)?;
        out.set_item("ci_halfwidth", report.ci_halfwidth)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        let parts: Vec<String> = self.reservations().iter().map(|m| format!("{m:.4}")).collect();
        format!("Policy([{}])", parts.join(", "))
    }
}

impl PyPolicy {
    fn thresholds(&self, capacity: Option<f64>) -> PyResult<Vec<Threshold>> {
        match capacity {
            None => Ok(self.inner.thresholds()),
            Some(c) => {
                let cells = to_cells(c, self.inner.step())?;
                Ok(self.inner.projections(cells).into_iter().map(Threshold::Level).collect())
            }
        }
    }
}

#[pyfunction]
#[pyo3(signature = (tariff, demands, tol = DEFAULT_TOL))]
fn compute_policy(py: Python<'_>, tariff: &PyTariff, demands: Vec<PyDemand>, tol: f64) -> PyResult<PyPolicy> {
    let demands = unwrap_demands(&demands);
    let scheme = tariff.inner.clone();
    let inner = py.detach(|| policy::compute_policy(&scheme, &demands, tol)).map_err(policy_error)?;
    Ok(PyPolicy { inner, scheme, demands })
}

/// Optimal storage capacity for amortized cost `pi_s` cents per kWh per day.
#[pyfunction]
#[pyo3(signature = (tariff, demands, pi_s, tol = DEFAULT_TOL, curve_points = sizing::DEFAULT_CURVE_POINTS))]
fn optimal_capacity<'py>(
    py: Python<'py>,
    tariff: &PyTariff,
    demands: Vec<PyDemand>,
    pi_s: f64,
    tol: f64,
    curve_points: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let demands = unwrap_demands(&demands);
    let pi_s = rate_from_f64(pi_s)?;
    let scheme = &tariff.inner;
    let result = py
        .detach(|| sizing::optimal_capacity(scheme, &demands, pi_s, SizingOptions { tol, curve_points }))
        .map_err(sizing_error)?;
    let out = PyDict::new(py);
    out.set_item("feasible", result.feasible)?;
    out.set_item("pi_s", result.pi_s.cents())?;
    out.set_item("pi_max", result.pi_max.cents())?;
    out.set_item("c_star", result.c_star)?;
    out.set_item("expected_daily_cost", result.expected_daily_cost_at_c_star)?;
    out.set_item("expected_daily_cost_without_storage", result.expected_daily_cost_without_storage)?;
    out.set_item("total_daily_cost", result.total_daily_cost())?;
    out.set_item("daily_savings", result.daily_savings())?;
    out.set_item("mr_curve", result.mr_curve.clone())?;
    out.set_item("warnings", result.warnings.clone())?;
    Ok(out)
}

/// Exact optimal expected daily cost by dynamic programming over all levels.
#[pyfunction]
fn brute_force_dp(py: Python<'_>, tariff: &PyTariff, demands: Vec<PyDemand>, capacity: f64) -> PyResult<f64> {
    let demands = unwrap_demands(&demands);
    let cells = to_cells(capacity, grid_step(&demands)?)?;
    let scheme = &tariff.inner;
    let (cost, _) = py.detach(|| oracle::brute_force_dp(scheme, &demands, cells)).map_err(oracle_error)?;
    Ok(cost)
}

/// `[(cv, cost_gap), ...]` for an experiment file.
#[pyfunction]
fn cv_gap_experiment(py: Python<'_>, config_path: std::path::PathBuf) -> PyResult<Vec<(f64, f64)>> {
    let config = config::load_experiment(&config_path).map_err(value_error)?;
    let rows = py.detach(|| experiments::cv_cost_gap_experiment(&config)).map_err(experiment_error)?;
    Ok(rows.iter().map(|r| (r.cv, r.cost_gap)).collect())
}

/// `[(group_size, per_user_cost), ...]` for an experiment file.
#[pyfunction]
fn aggregation_experiment(py: Python<'_>, config_path: std::path::PathBuf) -> PyResult<Vec<(usize, f64)>> {
    let config = config::load_experiment(&config_path).map_err(value_error)?;
    let rows = py.detach(|| experiments::aggregation_experiment(&config)).map_err(experiment_error)?;
    Ok(rows.iter().map(|r| (r.group_size, r.per_user_cost)).collect())
}

#[pymodule]
fn tou_storage(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTariff>()?;
    m.add_class::<PyDemand>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(load_demand, m)?)?;
    m.add_function(wrap_pyfunction!(compute_policy, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_dp, m)?)?;
    m.add_function(wrap_pyfunction!(cv_gap_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(aggregation_experiment, m)?)?;
    m.add("DEFAULT_GRID_STEP", demand::DEFAULT_GRID_STEP)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weekday() -> PyTariff {
        PyTariff::new(vec![6.7, 12.4, 10.4, 12.4, 6.7]).unwrap()
    }

    #[test]
    fn tariff_wrapper() {
        let t = weekday();
        assert_eq!(t.__len__(), 5);
        assert!((t.pi_max() - 7.7).abs() < 1e-12);
        assert_eq!(t.local_extrema().0, vec![12.4, 12.4]);
    }

    #[test]
    fn module_round_trip() {
        Python::initialize();
        Python::attach(|py| {
            let module = PyModule::new(py, "tou_storage").unwrap();
            tou_storage(&module).unwrap();
            let t = Bound::new(py, PyTariff::new(vec![10.0, 20.0, 5.0]).unwrap()).unwrap();
            let d = PyDemand::exponential(1.0, 0.01, 1e-6).unwrap();
            let policy = compute_policy(py, &t.borrow(), vec![d.clone(), d.clone(), d], DEFAULT_TOL).unwrap();
            let m1 = policy.reservations()[0];
            assert!((m1 - 3f64.ln()).abs() <= 0.02, "{m1}");
            assert!(policy.reservations()[2].is_infinite());
            let compute = module.getattr("compute_policy").unwrap();
            assert!(compute.is_callable());
        });
    }

    #[test]
    fn errors_map_to_python_exceptions() {
        Python::initialize();
        Python::attach(|py| {
            let err = PyTariff::new(vec![5.0, 9.0]).err().unwrap();
            assert!(err.is_instance_of::<PyValueError>(py));
        });
    }
}
