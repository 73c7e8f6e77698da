//! Python bindings. Structured results cross the boundary as plain dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use gridsim::auction::{self, AssignmentInstance};
use gridsim::cost;
use gridsim::domain;
use gridsim::engine::{self, FailureModel, RunLimit, DEFAULT_REPAIR_TIME};
use gridsim::generate::{generate_scenario, ArrivalMode, GenerateOptions};
use gridsim::properties::{self, presets, GridProperties, JobProperties, PropertiesKind, UserProperties};
use gridsim::report::{self, ReportFormat};
use gridsim::sweep::{run_sweep, Regime, ScenarioSource, SweepParameter, SweepSpec};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: for<'de> serde::Deserialize<'de>>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(value_err)
}

fn kind(name: &str) -> PyResult<PropertiesKind> {
    match name {
        "grid" => Ok(PropertiesKind::Grid),
        "user" => Ok(PropertiesKind::User),
        "job" => Ok(PropertiesKind::Job),
        _ => Err(value_err(format!("unknown property kind {name:?}, expected grid, user or job"))),
    }
}

/// Parses property-file text of the given kind ("grid", "user" or "job") into a dict.
#[pyfunction]
fn parse_properties<'py>(py: Python<'py>, text: &str, kind_name: &str) -> PyResult<Bound<'py, PyAny>> {
    match properties::parse_any(text, kind(kind_name)?).map_err(value_err)? {
        properties::Properties::Grid(p) => to_py(py, &p),
        properties::Properties::User(p) => to_py(py, &p),
        properties::Properties::Job(p) => to_py(py, &p),
    }
}

/// Renders a properties dict back to property-file text.
#[pyfunction]
fn print_properties(props: &Bound<'_, PyAny>, kind_name: &str) -> PyResult<String> {
    Ok(match kind(kind_name)? {
        PropertiesKind::Grid => properties::print_properties(&from_py::<GridProperties>(props)?),
        PropertiesKind::User => properties::print_properties(&from_py::<UserProperties>(props)?),
        PropertiesKind::Job => properties::print_properties(&from_py::<JobProperties>(props)?),
    })
}

/// Property-file text of a published grid column, e.g. "G7".
#[pyfunction]
fn grid_preset(name: &str) -> PyResult<String> {
    Ok(properties::print_properties(&presets::grid_preset(name).map_err(value_err)?))
}

/// Property-file text of a built-in user population (1 or 2).
#[pyfunction]
fn user_group(group: u32) -> PyResult<String> {
    Ok(properties::print_properties(&presets::user_group(group).map_err(value_err)?))
}

/// Property-file text of the built-in job ranges.
#[pyfunction]
fn job_preset() -> String {
    properties::print_properties(&presets::JOBS)
}

#[pyclass(name = "StrategyParams", from_py_object)]
#[derive(Clone, Copy)]
struct PyStrategyParams {
    #[pyo3(get, set)]
    fp: f64,
    #[pyo3(get, set)]
    qp: f64,
    #[pyo3(get, set)]
    sp: f64,
    #[pyo3(get, set)]
    balance_global: bool,
    #[pyo3(get, set)]
    balance_local: bool,
}

#[pymethods]
impl PyStrategyParams {
    #[new]
    #[pyo3(signature = (fp=0.0, qp=0.0, sp=0.0, balance_global=false, balance_local=false))]
    fn new(fp: f64, qp: f64, sp: f64, balance_global: bool, balance_local: bool) -> PyResult<Self> {
        let p = Self {
            fp,
            qp,
            sp,
            balance_global,
            balance_local,
        };
        p.core()?;
        Ok(p)
    }

    fn __repr__(&self) -> String {
        format!(
            "StrategyParams(fp={}, qp={}, sp={}, balance_global={}, balance_local={})",
            self.fp,
            self.qp,
            self.sp,
            if self.balance_global { "True" } else { "False" },
            if self.balance_local { "True" } else { "False" },
        )
    }
}

impl PyStrategyParams {
    fn core(&self) -> PyResult<cost::StrategyParams> {
        let p = cost::StrategyParams {
            fp: self.fp,
            qp: self.qp,
            sp: self.sp,
            balance_global: self.balance_global,
            balance_local: self.balance_local,
        };
        p.validate().map_err(value_err)?;
        Ok(p)
    }
}

#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: domain::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Draws a scenario from property-file texts.
    #[staticmethod]
    #[pyo3(signature = (grid, users, jobs=None, seed=0, job_sets=30, jobs_per_set=10, horizon=100, peak=false))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        grid: &str,
        users: &str,
        jobs: Option<&str>,
        seed: u64,
        job_sets: u32,
        jobs_per_set: u32,
        horizon: u64,
        peak: bool,
    ) -> PyResult<Self> {
        let g: GridProperties = properties::parse_properties(grid).map_err(value_err)?;
        let u: UserProperties = properties::parse_properties(users).map_err(value_err)?;
        let j = match jobs {
            Some(t) => properties::parse_properties(t).map_err(value_err)?,
            None => presets::JOBS,
        };
        let o = options(job_sets, jobs_per_set, horizon, peak);
        Ok(Self {
            inner: generate_scenario(&g, &u, &j, &o, seed),
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: domain::Scenario = serde_json::from_str(text).map_err(value_err)?;
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_err)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn n_resources(&self) -> usize {
        self.inner.resources.len()
    }

    #[getter]
    fn n_machines(&self) -> usize {
        self.inner.machine_count()
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.inner.users.len()
    }

    #[getter]
    fn n_jobs(&self) -> usize {
        self.inner.jobs.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(resources={}, machines={}, users={}, jobs={})",
            self.n_resources(),
            self.n_machines(),
            self.n_users(),
            self.n_jobs()
        )
    }
}

#[pyclass(name = "RunReport")]
struct PyRunReport {
    inner: engine::RunReport,
}

#[pymethods]
impl PyRunReport {
    #[getter]
    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metrics)
    }

    #[getter]
    fn outcomes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.outcomes)
    }

    #[getter]
    fn loading<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.loading)
    }

    #[getter]
    fn loading_variance(&self) -> Vec<f64> {
        self.inner.loading_variance.clone()
    }

    #[getter]
    fn truncated(&self) -> bool {
        self.inner.metrics.truncated
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(value_err)
    }

    /// Writes the report files into `dir`; format is "csv", "json" or "both".
    #[pyo3(signature = (dir, format="both"))]
    fn write(&self, dir: PathBuf, format: &str) -> PyResult<Vec<PathBuf>> {
        let format = match format {
            "csv" => ReportFormat::Csv,
            "json" => ReportFormat::Json,
            "both" => ReportFormat::Both,
            _ => return Err(value_err(format!("unknown format {format:?}"))),
        };
        report::emit_report(&self.inner, &dir, format).map_err(|e| PyOSError::new_err(format!("{e}")))
    }

    fn __repr__(&self) -> String {
        let m = &self.inner.metrics;
        format!(
            "RunReport(jobs={}, processed={}, failed={}, removed={}, ticks={})",
            m.total_jobs, m.processed, m.failed, m.removed, m.ticks
        )
    }
}

fn options(job_sets: u32, jobs_per_set: u32, horizon: u64, peak: bool) -> GenerateOptions {
    GenerateOptions {
        n_job_sets: job_sets,
        jobs_per_set,
        horizon,
        arrivals: if peak { ArrivalMode::Peak } else { ArrivalMode::Spread },
        qos_extremes: false,
    }
}

fn limit(max_ticks: u64, horizon: Option<u64>) -> RunLimit {
    match horizon {
        Some(h) => RunLimit::Horizon(h),
        None => RunLimit::AllTerminal(max_ticks),
    }
}

fn failures(machines: bool, resources: bool, users: bool, repair_time: u64, seed: u64) -> FailureModel {
    FailureModel {
        machines,
        resource_networks: resources,
        user_networks: users,
        repair_time,
        seed,
    }
}

/// Simulates a scenario. With `horizon` the run lasts exactly that many ticks;
/// otherwise it stops when every job is terminal or at `max_ticks`.
#[pyfunction]
#[pyo3(signature = (
    scenario, params=None, seed=0, max_ticks=100_000, horizon=None,
    machine_failures=true, resource_failures=true, user_failures=false, repair_time=DEFAULT_REPAIR_TIME,
))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    scenario: &PyScenario,
    params: Option<PyStrategyParams>,
    seed: u64,
    max_ticks: u64,
    horizon: Option<u64>,
    machine_failures: bool,
    resource_failures: bool,
    user_failures: bool,
    repair_time: u64,
) -> PyResult<PyRunReport> {
    let params = match params {
        Some(p) => p.core()?,
        None => cost::StrategyParams::default(),
    };
    let f = failures(machine_failures, resource_failures, user_failures, repair_time, seed);
    let s = scenario.inner.clone();
    let inner = py
        .detach(|| engine::run(s, params, f, limit(max_ticks, horizon)))
        .map_err(value_err)?;
    Ok(PyRunReport { inner })
}

/// Minimum-cost assignment of rows to capacitated columns.
/// Returns `(matching, objective)` where `matching[i]` is a column or None.
#[pyfunction]
#[pyo3(signature = (costs, capacities, precision=1000))]
fn solve(costs: Vec<Vec<f64>>, capacities: Vec<usize>, precision: u32) -> PyResult<(Vec<Option<usize>>, f64)> {
    let inst = AssignmentInstance::new(costs, capacities).map_err(value_err)?;
    let r = auction::solve(&inst, precision).map_err(value_err)?;
    Ok((r.matching, r.objective))
}

/// Sweeps one strategy parameter over seeds. Without `scenario` a fresh one is
/// drawn per seed from the property texts. Returns one dict per value.
#[pyfunction]
#[pyo3(signature = (
    parameter, values, seeds, scenario=None, grid=None, users=None, jobs=None,
    job_sets=30, jobs_per_set=10, horizon=100, regime="under-peak", base=None,
    max_ticks=100_000, run_horizon=None, machine_failures=true, resource_failures=true, user_failures=false,
))]
#[allow(clippy::too_many_arguments)]
fn sweep<'py>(
    py: Python<'py>,
    parameter: &str,
    values: Vec<f64>,
    seeds: Vec<u64>,
    scenario: Option<PyScenario>,
    grid: Option<&str>,
    users: Option<&str>,
    jobs: Option<&str>,
    job_sets: u32,
    jobs_per_set: u32,
    horizon: u64,
    regime: &str,
    base: Option<PyStrategyParams>,
    max_ticks: u64,
    run_horizon: Option<u64>,
    machine_failures: bool,
    resource_failures: bool,
    user_failures: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let parameter = match parameter {
        "sp" => SweepParameter::Sp,
        "fp" => SweepParameter::Fp,
        "qp" => SweepParameter::Qp,
        "balance" => SweepParameter::Balance,
        _ => return Err(value_err(format!("unknown sweep parameter {parameter:?}"))),
    };
    let regime = match regime {
        "under-peak" => Regime::UnderPeak,
        "in-peak" => Regime::InPeak,
        _ => return Err(value_err(format!("unknown regime {regime:?}"))),
    };
    let source = match (scenario, grid, users) {
        (Some(s), None, None) => ScenarioSource::Fixed(s.inner),
        (None, Some(g), Some(u)) => ScenarioSource::Generated {
            grid: properties::parse_properties(g).map_err(value_err)?,
            users: properties::parse_properties(u).map_err(value_err)?,
            jobs: match jobs {
                Some(t) => properties::parse_properties(t).map_err(value_err)?,
                None => presets::JOBS,
            },
            options: options(job_sets, jobs_per_set, horizon, false),
        },
        _ => return Err(value_err("pass either scenario or both grid and users")),
    };
    let spec = SweepSpec {
        parameter,
        values,
        seeds,
        scenario: source,
        regime,
        base: match base {
            Some(p) => p.core()?,
            None => cost::StrategyParams::default(),
        },
        failures: failures(machine_failures, resource_failures, user_failures, DEFAULT_REPAIR_TIME, 0),
        limit: limit(max_ticks, run_horizon),
    };
    let result = py.detach(|| run_sweep(&spec)).map_err(value_err)?;
    to_py(py, &result.cells)
}

#[pymodule]
fn gridsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStrategyParams>()?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunReport>()?;
    m.add_function(wrap_pyfunction!(parse_properties, m)?)?;
    m.add_function(wrap_pyfunction!(print_properties, m)?)?;
    m.add_function(wrap_pyfunction!(grid_preset, m)?)?;
    m.add_function(wrap_pyfunction!(user_group, m)?)?;
    m.add_function(wrap_pyfunction!(job_preset, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
