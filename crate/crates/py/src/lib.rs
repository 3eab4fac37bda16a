//! Python bindings. Results come back as plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::{json, Value};

use thermoflux_core::acceptance::{run_acceptance, AcceptanceConfig};
use thermoflux_core::estimation::SamplingMode;
use thermoflux_core::experiment::{haar_experiment, run_mode, run_sweep, ExperimentConfig, Mode, ParamOverrides, StateSpec};
use thermoflux_core::infdim::{schedule_success_curve, CutoffSchedule, TailState};
use thermoflux_core::pinching::{energy_pinching, schur_loss_bound, schur_pinching_for};
use thermoflux_core::qmat::{relative_entropy, tensor_power, thermal_state};
use thermoflux_core::schur::{enumerate_young_diagrams, irrep_dimensions};
use thermoflux_core::{Error, ThermalContext};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => PyList::new(py, a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?)?.into_any(),
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn context(levels: &str, beta: f64) -> PyResult<ThermalContext> {
    ThermalContext::parse(levels, beta).map_err(err)
}

/// D(ρ‖τ) in nats for a preset or `diag:` state.
#[pyfunction]
#[pyo3(signature = (state, levels = "0,1", beta = 1.0))]
fn free_energy(state: &str, levels: &str, beta: f64) -> PyResult<f64> {
    let ctx = context(levels, beta)?;
    let rho = StateSpec::Named(state.into()).resolve(&ctx).map_err(err)?;
    relative_entropy(&rho, &thermal_state(&ctx)).map_err(err)
}

/// (λ, n_λ, m_λ) for every Young diagram with n boxes and at most d rows.
#[pyfunction]
fn schur_dimensions(n: usize, d: usize) -> PyResult<Vec<(Vec<usize>, u128, u128)>> {
    enumerate_young_diagrams(n, d)
        .into_iter()
        .map(|y| irrep_dimensions(&y, d).map(|(a, b)| (y.rows().to_vec(), a, b)).map_err(err))
        .collect()
}

#[pyfunction]
#[pyo3(signature = (state, k, kind = "schur", levels = "0,1", beta = 1.0))]
fn pinch<'py>(py: Python<'py>, state: &str, k: usize, kind: &str, levels: &str, beta: f64) -> PyResult<Bound<'py, PyAny>> {
    let ctx = context(levels, beta)?;
    let rho = StateSpec::Named(state.into()).resolve(&ctx).map_err(err)?;
    let rho_k = tensor_power(&rho, k).map_err(err)?;
    let (ch, bound) = match kind {
        "schur" => (schur_pinching_for(&ctx, k).map_err(err)?, k as f64 * schur_loss_bound(k, ctx.dim())),
        "energy" => {
            let ch = energy_pinching(&ctx, k).map_err(err)?;
            let b = (ch.projector_count() as f64).ln();
            (ch, b)
        }
        other => return Err(PyValueError::new_err(format!("unknown pinching kind {other:?}"))),
    };
    let loss = ch.loss_nats(&rho_k).map_err(err)?;
    to_py(py, &json!({ "projector_count": ch.projector_count(), "loss_nats": loss, "bound_nats": bound }))
}

#[pyfunction]
#[pyo3(signature = (mode, n, state = "ground", levels = "0,1", beta = 1.0, seed = 0, exact = false, k = None, m = None))]
#[allow(clippy::too_many_arguments)]
fn extract<'py>(
    py: Python<'py>,
    mode: &str,
    n: u64,
    state: &str,
    levels: &str,
    beta: f64,
    seed: u64,
    exact: bool,
    k: Option<usize>,
    m: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let ctx = context(levels, beta)?;
    let rho = StateSpec::Named(state.into()).resolve(&ctx).map_err(err)?;
    let params = ParamOverrides {
        k,
        m,
        sampling: Some(if exact { SamplingMode::Exact } else { SamplingMode::Sampled }),
        ..ParamOverrides::default()
    };
    let out = run_mode(Mode::parse(mode).map_err(err)?, &rho, &ctx, n, seed, &params).map_err(err)?;
    to_py(py, &json!(out))
}

/// Run a sweep from a JSON config string; returns the CSV text and per-n summary.
#[pyfunction]
fn sweep<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_json(config_json).map_err(err)?;
    let r = run_sweep(&cfg).map_err(err)?;
    let csv = r.to_csv().map_err(err)?;
    to_py(py, &json!({ "config_hash": r.config_hash, "csv": csv, "rows": r.rows, "summary": r.summary }))
}

#[pyfunction]
#[pyo3(signature = (qubits = 3, samples = 2000, seed = 0, levels = "0,1", beta = 1.0))]
fn haar<'py>(py: Python<'py>, qubits: usize, samples: usize, seed: u64, levels: &str, beta: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = haar_experiment(&context(levels, beta)?, qubits, samples, seed).map_err(err)?;
    to_py(py, &json!(r))
}

/// Tr[ρ_{d_n}]^n for ρ_ii ∝ i^{−s} with d_n = ⌈n^a⌉.
#[pyfunction]
#[pyo3(signature = (exponent, n_grid, schedule_exponent = 0.5))]
fn truncation_success<'py>(py: Python<'py>, exponent: f64, n_grid: Vec<u64>, schedule_exponent: f64) -> PyResult<Bound<'py, PyAny>> {
    let rho = TailState::power_law(exponent).map_err(err)?;
    let curve = schedule_success_curve(&rho, &CutoffSchedule::Power { exponent: schedule_exponent }, &n_grid).map_err(err)?;
    to_py(py, &json!(curve))
}

#[pyfunction]
#[pyo3(signature = (only = Vec::new(), config_json = None))]
fn acceptance<'py>(py: Python<'py>, only: Vec<String>, config_json: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = match config_json {
        Some(s) => AcceptanceConfig::from_json(s).map_err(err)?,
        None => AcceptanceConfig::default(),
    };
    let report = run_acceptance(&cfg, &only).map_err(err)?;
    to_py(py, &json!(report))
}

#[pymodule]
fn thermoflux(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(free_energy, m)?)?;
    m.add_function(wrap_pyfunction!(schur_dimensions, m)?)?;
    m.add_function(wrap_pyfunction!(pinch, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(haar, m)?)?;
    m.add_function(wrap_pyfunction!(truncation_success, m)?)?;
    m.add_function(wrap_pyfunction!(acceptance, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
