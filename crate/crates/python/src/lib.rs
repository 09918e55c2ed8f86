//! Python bindings. Structured values cross the boundary as plain Python
//! objects (dicts, lists, floats) through their JSON form.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use stealthlab::attacks::{zda_synthesize_linear, ZdaSynthesis};
use stealthlab::export::write_run_outputs;
use stealthlab::numerics::{eig2x2, Mat2};
use stealthlab::scenario::{bundled_names, bundled_scenario, check_expectations, load_scenario, parse_scenario, run_scenario, ScenarioSpec};
use stealthlab::vehicle::{hurwitz_check, zero_dynamics_stability, StiffnessConvention};
use stealthlab::{build_state_space, output_map, OutputConfig, VehicleParams};

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn params_from(obj: &Bound<'_, PyAny>) -> PyResult<VehicleParams> {
    let p: VehicleParams = from_py(obj)?;
    p.validate().map_err(value_err)?;
    Ok(p)
}

/// Reference hatchback parameters; `convention` is "per_axle_pair" or "per_axle".
#[pyfunction]
#[pyo3(signature = (convention = "per_axle_pair"))]
fn table1_params<'py>(py: Python<'py>, convention: &str) -> PyResult<Bound<'py, PyAny>> {
    let conv: StiffnessConvention = serde_json::from_value(convention.into()).map_err(value_err)?;
    to_py(py, &VehicleParams::table1(conv))
}

/// `{"a": [[..], [..]], "b": [..], "e": [..], "params": {..}}`
#[pyfunction]
fn state_space<'py>(py: Python<'py>, params: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let model = build_state_space(&params_from(params)?).map_err(value_err)?;
    to_py(py, &model)
}

#[pyfunction]
fn hurwitz<'py>(py: Python<'py>, params: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let model = build_state_space(&params_from(params)?).map_err(value_err)?;
    to_py(py, &hurwitz_check(&model))
}

/// "minimum_phase", "non_minimum_phase" or "boundary".
#[pyfunction]
fn zero_dynamics<'py>(py: Python<'py>, params: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &zero_dynamics_stability(&params_from(params)?))
}

/// Invariant-zero synthesis for a linear output, scaled so `‖x0‖ = amplitude`.
#[pyfunction]
#[pyo3(signature = (params, output = "yaw_rate", amplitude = 1.0))]
fn synthesize_zda<'py>(py: Python<'py>, params: &Bound<'py, PyAny>, output: &str, amplitude: f64) -> PyResult<Bound<'py, PyAny>> {
    let model = build_state_space(&params_from(params)?).map_err(value_err)?;
    let cfg: OutputConfig = serde_json::from_value(output.into()).map_err(value_err)?;
    let syn = zda_synthesize_linear(&model, &output_map(&model, cfg), 0.0).map_err(value_err)?;
    let syn = match syn {
        ZdaSynthesis::Feasible(p) => ZdaSynthesis::Feasible(p.scaled_to(amplitude)),
        other => other,
    };
    to_py(py, &syn)
}

/// Eigenvalues of a 2×2 matrix as Python complex numbers.
#[pyfunction]
fn eig2(a: [[f64; 2]; 2]) -> Vec<Complex64> {
    eig2x2(&Mat2(a)).to_vec()
}

#[pyfunction]
fn bundled() -> Vec<&'static str> {
    bundled_names()
}

#[pyfunction]
fn scenario<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &bundled_scenario(name).map_err(value_err)?)
}

fn spec_from(obj: &Bound<'_, PyAny>) -> PyResult<ScenarioSpec> {
    if let Ok(name) = obj.extract::<String>() {
        return load_scenario(&name).map_err(value_err);
    }
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    parse_scenario(&text).map_err(value_err)
}

/// Run a scenario given as a bundled name, a file path, or a dict.
///
/// Returns `{"summary": .., "checks": [..], "columns": {name: [..]}}`; with
/// `out_dir` the CSV, SVG and summary files are written there as well.
#[pyfunction]
#[pyo3(signature = (spec, out_dir = None))]
fn run<'py>(py: Python<'py>, spec: &Bound<'py, PyAny>, out_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyAny>> {
    let spec = spec_from(spec)?;
    let (trace, summary) = py.detach(|| run_scenario(&spec)).map_err(value_err)?;
    if let Some(dir) = out_dir {
        let name = if spec.name.is_empty() { "scenario" } else { spec.name.as_str() };
        write_run_outputs(name, &trace, &summary, &dir).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    }
    let checks = check_expectations(&spec, &trace, &summary);
    let columns: serde_json::Map<String, serde_json::Value> = trace
        .column_names()
        .into_iter()
        .map(|name| {
            let col = trace.column(&name).unwrap_or_default();
            (name, col.into())
        })
        .collect();
    let out = serde_json::json!({ "summary": summary, "checks": checks, "columns": columns });
    to_py(py, &out)
}

#[pymodule]
#[pyo3(name = "stealthlab")]
fn stealthlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(table1_params, m)?)?;
    m.add_function(wrap_pyfunction!(state_space, m)?)?;
    m.add_function(wrap_pyfunction!(hurwitz, m)?)?;
    m.add_function(wrap_pyfunction!(zero_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_zda, m)?)?;
    m.add_function(wrap_pyfunction!(eig2, m)?)?;
    m.add_function(wrap_pyfunction!(bundled, m)?)?;
    m.add_function(wrap_pyfunction!(scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
