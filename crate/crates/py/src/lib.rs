//! Python module `camdp`: instances, the generative model, the LP oracle, single
//! solver cells and the lower-bound generators.

use camdp_cli::error::CliError;
use camdp_cli::{Bench, CellOptions, SolveMode};
use camdp_core::generative::build_empirical_model;
use camdp_core::oracle::solve_camdp_lp;
use camdp_core::structure::structural_params;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

create_exception!(camdp, InfeasibleError, PyException, "The instance admits no feasible policy.");

fn core_err(e: camdp_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Infeasible(msg) => InfeasibleError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Serialize through JSON so that Python receives plain dicts and lists.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

#[pyclass(module = "camdp", name = "Instance", frozen)]
struct Instance(camdp_core::CmdpInstance);

#[pymethods]
impl Instance {
    #[new]
    #[pyo3(signature = (n_states, n_actions, kernel, reward, constraint, threshold, start))]
    fn new(
        n_states: usize,
        n_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        constraint: Vec<f64>,
        threshold: f64,
        start: Vec<f64>,
    ) -> PyResult<Self> {
        camdp_core::CmdpInstance::new(n_states, n_actions, kernel, reward, constraint, threshold, start)
            .map(Self)
            .map_err(core_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        camdp_core::CmdpInstance::from_json(text).map(Self).map_err(core_err)
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        camdp_core::CmdpInstance::load(path).map(Self).map_err(core_err)
    }

    /// Built-in instance such as `binding4`.
    #[staticmethod]
    fn fixture(name: &str) -> PyResult<Self> {
        camdp_cli::fixtures::fixture(name).map(Self).map_err(cli_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(core_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).map_err(core_err)
    }

    #[getter]
    fn n_states(&self) -> usize {
        self.0.n_states()
    }

    #[getter]
    fn n_actions(&self) -> usize {
        self.0.n_actions()
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.0.threshold()
    }

    #[getter]
    fn kernel(&self) -> Vec<f64> {
        self.0.kernel().to_vec()
    }

    #[getter]
    fn reward(&self) -> Vec<f64> {
        self.0.reward().to_vec()
    }

    #[getter]
    fn constraint(&self) -> Vec<f64> {
        self.0.constraint().to_vec()
    }

    #[getter]
    fn start(&self) -> Vec<f64> {
        self.0.start().to_vec()
    }

    /// Occupancy LP: objective, multiplier, constraint value and occupancy measure.
    #[pyo3(signature = (threshold=None))]
    fn solve_lp<'py>(&self, py: Python<'py>, threshold: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
        let sol = solve_camdp_lp(&self.0, threshold).map_err(core_err)?;
        py.import("json")?.call_method1("loads", (sol.to_json().map_err(core_err)?,))
    }

    /// Bias span, transient bound, diameter and Slater constant by enumeration.
    fn structure<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let params = py.detach(|| structural_params(&self.0)).map_err(core_err)?;
        to_py(py, &params)
    }

    fn __repr__(&self) -> String {
        format!("Instance(n_states={}, n_actions={}, threshold={})", self.0.n_states(), self.0.n_actions(), self.0.threshold())
    }
}

#[pyclass(module = "camdp", name = "EmpiricalModel", frozen)]
struct EmpiricalModel(camdp_core::EmpiricalModel);

#[pymethods]
impl EmpiricalModel {
    /// Draw `samples` transitions from every state-action pair.
    #[new]
    #[pyo3(signature = (instance, samples, seed=0))]
    fn new(py: Python<'_>, instance: &Instance, samples: u64, seed: u64) -> PyResult<Self> {
        py.detach(|| build_empirical_model(&instance.0, samples, seed)).map(Self).map_err(core_err)
    }

    #[getter]
    fn kernel_hat(&self) -> Vec<f64> {
        self.0.kernel_hat().to_vec()
    }

    #[getter]
    fn counts(&self) -> Vec<u64> {
        self.0.counts().to_vec()
    }

    #[getter]
    fn total_samples(&self) -> u64 {
        self.0.total_samples()
    }

    /// The empirical kernel packaged as an instance with the original rewards.
    fn instance(&self) -> Instance {
        Instance(self.0.model().clone())
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(core_err)
    }
}

/// Run one solver cell and return its report.
#[pyfunction]
#[pyo3(signature = (instance, epsilon, samples, seed=0, mode="relaxed", t_cap=None, planner=None, truncation=None))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    instance: &Instance,
    epsilon: f64,
    samples: u64,
    seed: u64,
    mode: &str,
    t_cap: Option<u64>,
    planner: Option<&str>,
    truncation: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode: SolveMode = mode.parse().map_err(cli_err)?;
    let mut opts = CellOptions::default();
    if let Some(t) = t_cap {
        opts.iteration_cap = t;
    }
    if let Some(p) = planner {
        opts.planner = camdp_cli::solve::parse_planner(p).map_err(cli_err)?;
    }
    if let Some(t) = truncation {
        opts.truncation = camdp_cli::solve::parse_truncation(t).map_err(cli_err)?;
    }
    let inst = instance.0.clone();
    let solved = py
        .detach(move || Bench::new(inst).and_then(|b| b.solve(mode, epsilon, samples, seed, &opts)))
        .map_err(cli_err)?;
    to_py(py, &solved.report)
}

/// Lower-bound instance from a `key=value,...` parameter string; returns `(instance, metadata)`.
#[pyfunction]
fn hard_gen<'py>(py: Python<'py>, params: &str) -> PyResult<(Instance, Bound<'py, PyAny>)> {
    let g = camdp_cli::hardgen::generate(params).map_err(cli_err)?;
    Ok((Instance(g.instance), to_py(py, &g.meta)?))
}

/// Closed-form optimum of the perturbed lower-bound instance.
#[pyfunction]
fn perturbed_optimum(epsilon: f64, zeta: f64) -> f64 {
    camdp_core::hard::perturbed_optimum(epsilon, zeta)
}

#[pymodule]
fn camdp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Instance>()?;
    m.add_class::<EmpiricalModel>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(hard_gen, m)?)?;
    m.add_function(wrap_pyfunction!(perturbed_optimum, m)?)?;
    m.add("InfeasibleError", m.py().get_type::<InfeasibleError>())?;
    Ok(())
}
