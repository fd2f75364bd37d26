//! Python bindings: solve, trial, validate and tune on the built-in
//! problems. Results come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ramsa_core::config::{preset, preset_names, RunConfigFile};
use ramsa_core::solver::{EstimatorKind, RunStatus};
use ramsa_core::tuning::{self, TuneOptions};
use ramsa_core::validation::{run_trial, verify};
use ramsa_core::{builtin_problem, Error, KernelKind, Problem};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::BudgetExhausted { .. } | Error::Evaluation { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Completed => "completed",
        RunStatus::BudgetExhausted => "budget-exhausted",
        RunStatus::Aborted => "aborted",
    }
}

/// A preset, or the defaults for `problem`, with overrides applied.
fn resolve(
    problem: Option<&str>,
    preset_name: Option<&str>,
    budget: Option<u64>,
    kernel: Option<&str>,
    estimator: Option<&str>,
) -> ramsa_core::Result<(RunConfigFile, Problem)> {
    let mut cfg = match preset_name {
        Some(name) => preset(name)?,
        None => RunConfigFile::default(),
    };
    if let Some(p) = problem {
        cfg.problem = Some(p.to_string());
    }
    if let Some(b) = budget {
        cfg.solver.budget = b;
    }
    if let Some(k) = kernel {
        cfg.solver.kernel = KernelKind::parse(k)?;
    }
    if let Some(e) = estimator {
        cfg.solver.estimator = Some(EstimatorKind::parse(e)?);
    }
    cfg.solver.validate()?;
    let p = cfg.build_problem()?;
    Ok((cfg, p))
}

#[pyfunction]
fn problems() -> Vec<&'static str> {
    ramsa_core::blackbox::BUILTIN_NAMES.to_vec()
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    preset_names()
}

/// One solver run. Either `problem` or `preset` must be given.
#[pyfunction]
#[pyo3(signature = (problem=None, preset=None, budget=None, seed=0, kernel=None, estimator=None))]
fn solve<'py>(
    py: Python<'py>,
    problem: Option<&str>,
    preset: Option<&str>,
    budget: Option<u64>,
    seed: u64,
    kernel: Option<&str>,
    estimator: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let (mut cfg, p) = resolve(problem, preset, budget, kernel, estimator).map_err(py_err)?;
    cfg.solver.seed = seed;
    let r = py.allow_threads(|| ramsa_core::run(&p, &cfg.solver)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("problem", &p.name)?;
    d.set_item("x", r.x)?;
    d.set_item("x_unit", r.x_unit)?;
    d.set_item("t", r.t)?;
    d.set_item("lambda", r.lambda)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("evaluations", r.evaluations)?;
    d.set_item("outside_evaluations", r.outside_evaluations)?;
    d.set_item("status", status_str(r.status))?;
    d.set_item("message", r.message)?;
    Ok(d)
}

/// Repeated runs with derived seeds, each final point validated by Monte Carlo.
#[pyfunction]
#[pyo3(signature = (problem=None, preset=None, runs=100, mc_samples=10_000, master_seed=0, budget=None))]
fn trial<'py>(
    py: Python<'py>,
    problem: Option<&str>,
    preset: Option<&str>,
    runs: usize,
    mc_samples: usize,
    master_seed: u64,
    budget: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let (cfg, p) = resolve(problem, preset, budget, None, None).map_err(py_err)?;
    let t = py
        .allow_threads(|| run_trial(&p, &cfg.solver, runs, mc_samples, master_seed))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("problem", &t.problem)?;
    d.set_item("runs", runs)?;
    d.set_item("successes", t.summary.success_count)?;
    d.set_item("mean_objective", t.summary.mean_objective)?;
    d.set_item("mean_point", t.summary.mean_point)?;
    d.set_item("std_point", t.summary.std_point)?;
    d.set_item("points", t.runs.iter().map(|r| r.x.clone()).collect::<Vec<_>>())?;
    Ok(d)
}

/// Feasibility of a point given in original units.
#[pyfunction]
#[pyo3(signature = (problem, point, mc_samples=10_000, seed=0))]
fn validate<'py>(
    py: Python<'py>,
    problem: &str,
    point: Vec<f64>,
    mc_samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = builtin_problem(problem).map_err(py_err)?;
    let x = p.bounds().to_unit(&point).map_err(py_err)?;
    let r = py.allow_threads(|| verify(&p, &x, mc_samples, seed)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("mean_objective", r.mean_objective)?;
    d.set_item("constraint_probs", r.constraint_probs)?;
    d.set_item("std_errors", r.std_errors)?;
    d.set_item("failures", r.failures)?;
    d.set_item("success", r.success)?;
    Ok(d)
}

/// Picks `beta1` and the initial design step from gradient samples at x0.
#[pyfunction]
#[pyo3(signature = (problem, samples=1000, seed=0, kernel="gaussian"))]
fn tune<'py>(py: Python<'py>, problem: &str, samples: usize, seed: u64, kernel: &str) -> PyResult<Bound<'py, PyDict>> {
    let kernel = KernelKind::parse(kernel).map_err(py_err)?;
    let p = ramsa_core::config::problem_for_kernel(problem, kernel).map_err(py_err)?;
    let opts = TuneOptions {
        samples,
        seed,
        kernel,
        ..TuneOptions::default()
    };
    let r = py.allow_threads(|| tuning::tune(&p, &opts)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("grid", r.grid)?;
    d.set_item("avg_variance", r.avg_variance)?;
    d.set_item("argmin", r.argmin)?;
    d.set_item("beta1", r.beta1)?;
    d.set_item("s2", r.s2)?;
    d.set_item("evaluations", r.evaluations)?;
    Ok(d)
}

#[pymodule]
fn ramsa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(problems, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(trial, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(tune, m)?)?;
    Ok(())
}
