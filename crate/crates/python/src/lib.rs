//! Python bindings. Closed forms are exposed directly. Every batch experiment
//! is reachable through `run_experiment`, which returns the tables in memory
//! instead of writing files.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use dicke_twist::cli::config::{resolve, Overrides};
use dicke_twist::cli::table::Cell;
use dicke_twist::cli::{execute, Category, CliError, Experiment};
use dicke_twist::frameworks::{self, IonParams};
use dicke_twist::nojump_analytic::{self as nj, Time, TwistParams};
use dicke_twist::spin_algebra::{rotate_basis, wigner_small_d as small_d, Basis, SpinQuantum};
use dicke_twist::trajectories::{ensemble_configs, run_ensemble, TrajectoryConfig};

fn value_error(e: dicke_twist::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn cli_error(e: CliError) -> PyErr {
    match e.category {
        Category::Config => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn spin(s: u32) -> PyResult<SpinQuantum> {
    SpinQuantum::new(s).map_err(value_error)
}

fn basis(name: &str) -> PyResult<Basis> {
    match name {
        "z" | "Z" => Ok(Basis::Z),
        "x" | "X" => Ok(Basis::X),
        other => Err(PyValueError::new_err(format!("basis must be 'z' or 'x', got {other:?}"))),
    }
}

/// Probability that no collective jump occurs up to `Λt`.
#[pyfunction]
fn nojump_probability(s: u32, gamma_ratio: f64, lambda_t: f64) -> PyResult<f64> {
    let p = TwistParams::from_ratio(gamma_ratio).map_err(value_error)?;
    nj::nojump_probability(spin(s)?, &p, Time::LambdaT(lambda_t)).map_err(value_error)
}

/// Normalized no-jump state at `Λt`, amplitudes with `m` descending.
#[pyfunction]
#[pyo3(signature = (s, gamma_ratio, lambda_t, basis_name = "z"))]
fn nojump_state(s: u32, gamma_ratio: f64, lambda_t: f64, basis_name: &str) -> PyResult<Vec<Complex64>> {
    let p = TwistParams::from_ratio(gamma_ratio).map_err(value_error)?;
    let state = nj::nojump_state(spin(s)?, &p, Time::LambdaT(lambda_t)).map_err(value_error)?;
    Ok(rotate_basis(&state, basis(basis_name)?).amplitudes.iter().copied().collect())
}

/// Fidelity with the cat state at `Λt = π/2`.
#[pyfunction]
fn cat_fidelity(s: u32, gamma_ratio: f64) -> PyResult<f64> {
    nj::cat_fidelity(spin(s)?, gamma_ratio).map_err(value_error)
}

/// Quantum Fisher information for `Sz` at `Λt = π/2`.
#[pyfunction]
fn cat_qfi(s: u32, gamma_ratio: f64) -> PyResult<f64> {
    nj::cat_qfi(spin(s)?, gamma_ratio).map_err(value_error)
}

/// `(exact, stirling)` probability of `|S,0>_x` in `|S,S>_z`.
#[pyfunction]
fn dicke0_probability(s: u32) -> PyResult<(f64, f64)> {
    let p = nj::dicke0_probability(spin(s)?);
    Ok((p.exact, p.stirling))
}

#[pyfunction]
fn wigner_small_d(s: u32, beta: f64) -> PyResult<Vec<Vec<f64>>> {
    let d = small_d(spin(s)?, beta);
    Ok(d.row_iter().map(|r| r.iter().copied().collect()).collect())
}

#[pyfunction]
fn required_cooperativity(kappa_over_omega: f64, target: f64) -> PyResult<f64> {
    frameworks::required_cooperativity(kappa_over_omega, target).map_err(value_error)
}

#[pyfunction]
fn dissipative_emission_ratio(cooperativity: f64) -> PyResult<f64> {
    frameworks::dissipative_emission_ratio(cooperativity).map_err(value_error)
}

/// Ion-trap mapping from angular frequencies (rad/s).
#[pyfunction]
#[pyo3(signature = (nu, omega_ts, rabi, eta, delta, ions, nbar = 0.0))]
fn ion_to_dicke<'py>(
    py: Python<'py>,
    nu: f64,
    omega_ts: f64,
    rabi: f64,
    eta: f64,
    delta: f64,
    ions: u32,
    nbar: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = IonParams { nu, omega_ts, rabi, eta, delta, ions, nbar, epsilon: None };
    let map = frameworks::ion_to_dicke(&params).map_err(value_error)?;
    let out = PyDict::new(py);
    out.set_item("coupling", map.coupling)?;
    out.set_item("twist_rate", map.twist_rate)?;
    out.set_item("decay_rate", map.decay_rate)?;
    out.set_item("omega", map.model.omega)?;
    out.set_item("omega0", map.model.omega0)?;
    out.set_item("lamb_dicke_valid", map.lamb_dicke_valid)?;
    Ok(out)
}

/// Quantum-jump ensemble in units `Λ = 1`. Returns, per trajectory, the
/// jump times and the settled cycle `m` (or `None`).
#[pyfunction]
#[pyo3(signature = (s, gamma_ratio, t_final, dt, count, seed = 0))]
fn run_trajectories<'py>(
    py: Python<'py>,
    s: u32,
    gamma_ratio: f64,
    t_final: f64,
    dt: f64,
    count: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let mut base = TrajectoryConfig::new(spin(s)?, 1.0, gamma_ratio, t_final, dt);
    base.seed = seed;
    // only the end state matters here; keep snapshots sparse
    base.record_stride = usize::MAX;
    let records = py.detach(|| run_ensemble(&ensemble_configs(&base, count))).map_err(value_error)?;
    let out = PyDict::new(py);
    out.set_item("jump_times", records.iter().map(|r| r.jump_times.clone()).collect::<Vec<_>>())?;
    out.set_item("cycle_m", records.iter().map(|r| r.cycle.map(|c| c.m)).collect::<Vec<_>>())?;
    out.set_item("final_overlaps", records.iter().map(|r| r.final_overlaps.clone()).collect::<Vec<_>>())?;
    Ok(out)
}

fn cell_to_py<'py>(py: Python<'py>, cell: &Cell) -> PyResult<Bound<'py, PyAny>> {
    Ok(match cell {
        Cell::Int(v) => v.into_pyobject(py)?.into_any(),
        Cell::Float(v) => v.into_pyobject(py)?.into_any(),
        Cell::Text(t) => t.into_pyobject(py)?.into_any(),
        Cell::Empty => py.None().into_bound(py),
    })
}

/// Runs a batch experiment with `key=value` overrides and returns
/// `{"tables": {name: {column: [values]}}, "summary": json_text}`.
#[pyfunction]
#[pyo3(signature = (experiment, sets = Vec::new(), seed = 0))]
fn run_experiment<'py>(py: Python<'py>, experiment: &str, sets: Vec<String>, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    use clap::ValueEnum;
    let which = Experiment::from_str(experiment, false).map_err(PyValueError::new_err)?;
    let overrides = Overrides { sets, seed: Some(seed), ..Default::default() };
    let cfg = resolve(which, None, &overrides).map_err(cli_error)?;
    let outcome = py.detach(|| execute(&cfg)).map_err(cli_error)?;
    let tables = PyDict::new(py);
    for t in &outcome.tables {
        let columns = PyDict::new(py);
        for (k, name) in t.columns.iter().enumerate() {
            let values = PyList::empty(py);
            for row in &t.rows {
                values.append(cell_to_py(py, &row[k])?)?;
            }
            columns.set_item(*name, values)?;
        }
        tables.set_item(t.name, columns)?;
    }
    let checks: Vec<_> =
        outcome.checks.iter().map(|c| serde_json::json!({ "name": c.name, "passed": c.passed, "detail": c.detail })).collect();
    let summary = serde_json::json!({
        "experiment": which.name(),
        "seed": seed,
        "grid_requested": outcome.grid_requested,
        "checks": checks,
        "results": outcome.results,
    });
    let out = PyDict::new(py);
    out.set_item("tables", tables)?;
    out.set_item("summary", summary.to_string())?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "dicke_twist")]
fn dicke_twist_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(nojump_probability, m)?)?;
    m.add_function(wrap_pyfunction!(nojump_state, m)?)?;
    m.add_function(wrap_pyfunction!(cat_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(cat_qfi, m)?)?;
    m.add_function(wrap_pyfunction!(dicke0_probability, m)?)?;
    m.add_function(wrap_pyfunction!(wigner_small_d, m)?)?;
    m.add_function(wrap_pyfunction!(required_cooperativity, m)?)?;
    m.add_function(wrap_pyfunction!(dissipative_emission_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(ion_to_dicke, m)?)?;
    m.add_function(wrap_pyfunction!(run_trajectories, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
