//! Python bindings for the pqc2hls toolkit.
//!
//! Structured results cross the boundary as JSON and come out on the
//! Python side as plain dicts and lists.

use std::path::Path;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use pqc2hls::blockers::scan;
use pqc2hls::csrc::parse_unit;
use pqc2hls::report::{recompute, render_table};
use pqc2hls::synth::ReportDialect;
use pqc2hls::verify::KatSuite;

fn dialect(name: &str) -> Result<ReportDialect, String> {
    match name.to_ascii_lowercase().as_str() {
        "asic" => Ok(ReportDialect::Asic),
        "fpga" => Ok(ReportDialect::Fpga),
        "mock" => Ok(ReportDialect::Mock),
        other => Err(format!("unknown report dialect '{other}' (expected asic, fpga or mock)")),
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

/// Blocker entries of a C translation unit, as JSON.
pub fn analyze_json(source: &str) -> Result<String, String> {
    let unit = parse_unit(source).map_err(|e| e.to_string())?;
    Ok(json(&scan(&unit).entries))
}

pub fn function_names(source: &str) -> Result<Vec<String>, String> {
    let unit = parse_unit(source).map_err(|e| e.to_string())?;
    Ok(unit.functions.iter().map(|f| f.name.clone()).collect())
}

pub fn parse_report_json(text: &str, dialect_name: &str) -> Result<String, String> {
    let m = pqc2hls::synth::parse_report(text, &dialect(dialect_name)?).map_err(|e| e.to_string())?;
    Ok(json(&m))
}

pub fn parse_kat_json(text: &str) -> Result<String, String> {
    let suite = KatSuite::parse(text).map_err(|e| e.to_string())?;
    Ok(json(&suite))
}

/// Statistics recomputed from a campaign directory's transcripts.
pub fn campaign_stats_json(dir: &str) -> Result<String, String> {
    let (stats, _) = recompute(Path::new(dir)).map_err(|e| e.to_string())?;
    Ok(json(&stats))
}

pub fn campaign_table(dir: &str, benchmark: &str) -> Result<String, String> {
    let (stats, _) = recompute(Path::new(dir)).map_err(|e| e.to_string())?;
    Ok(render_table(&[(benchmark, &stats)]))
}

fn value_err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

fn loads<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// List of blocker dicts (category, function, span, detail) for C source text.
#[pyfunction]
fn analyze<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyAny>> {
    loads(py, &analyze_json(source).map_err(value_err)?)
}

/// Names of the functions defined in C source text, in source order.
#[pyfunction]
fn functions(source: &str) -> PyResult<Vec<String>> {
    function_names(source).map_err(value_err)
}

/// Byte-exact re-rendering of parsed C source.
#[pyfunction]
fn round_trip(source: &str) -> PyResult<String> {
    parse_unit(source).map(|u| u.render()).map_err(|e| value_err(e.to_string()))
}

/// Metrics dict from a synthesis report; dialect is asic, fpga or mock.
#[pyfunction]
#[pyo3(signature = (text, dialect = "asic"))]
fn parse_report<'py>(py: Python<'py>, text: &str, dialect: &str) -> PyResult<Bound<'py, PyAny>> {
    loads(py, &parse_report_json(text, dialect).map_err(value_err)?)
}

/// Parsed KAT suite: seed, field_schema and cases (byte values as int lists).
#[pyfunction]
fn parse_kat<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    loads(py, &parse_kat_json(text).map_err(value_err)?)
}

#[pyfunction]
fn campaign_stats<'py>(py: Python<'py>, dir: &str) -> PyResult<Bound<'py, PyAny>> {
    loads(py, &campaign_stats_json(dir).map_err(PyOSError::new_err)?)
}

#[pyfunction]
#[pyo3(name = "campaign_table")]
fn py_campaign_table(dir: &str, benchmark: &str) -> PyResult<String> {
    campaign_table(dir, benchmark).map_err(PyOSError::new_err)
}

/// Table number formatting: two decimals, trailing zeros trimmed.
#[pyfunction]
fn fmt_num(v: f64) -> String {
    pqc2hls::orchestrator::fmt_num(v)
}

#[pymodule]
fn pqc2hls_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(functions, m)?)?;
    m.add_function(wrap_pyfunction!(round_trip, m)?)?;
    m.add_function(wrap_pyfunction!(parse_report, m)?)?;
    m.add_function(wrap_pyfunction!(parse_kat, m)?)?;
    m.add_function(wrap_pyfunction!(campaign_stats, m)?)?;
    m.add_function(wrap_pyfunction!(py_campaign_table, m)?)?;
    m.add_function(wrap_pyfunction!(fmt_num, m)?)?;
    Ok(())
}
