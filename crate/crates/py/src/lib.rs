//! Python bindings: meshes, configuration checks, adaptive runs and traces.
//!
//! Build the importable module with
//! `cargo build --release -p rheo-afem-py --features extension-module`.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rheo_afem::afem::{afem_run, TraceRow};
use rheo_afem::config::parse_config_with_overrides;
use rheo_afem::io::{meshfile, trace};
use rheo_afem::mesh::Mesh;
use rheo_afem::run::run;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Mesh", module = "rheo_afem_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyMesh {
    inner: Mesh,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn unit_square() -> Self {
        Self { inner: Mesh::unit_square() }
    }

    #[staticmethod]
    fn l_shape() -> Self {
        Self { inner: Mesh::l_shape() }
    }

    /// Reads the ASCII mesh format.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        meshfile::parse(text).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_text(&self) -> String {
        meshfile::format(&self.inner)
    }

    fn refine_uniform(&self, times: usize) -> Self {
        Self { inner: self.inner.refine_uniform_times(times) }
    }

    /// Bisects the marked triangles plus whatever closure requires.
    fn refine(&self, marked: Vec<usize>) -> PyResult<Self> {
        let nt = self.inner.num_triangles();
        if let Some(&bad) = marked.iter().find(|&&t| t >= nt) {
            return Err(value_err(format!("triangle {bad} out of range (mesh has {nt})")));
        }
        let set = marked.into_iter().collect();
        self.inner.refine(&set).map(|inner| Self { inner }).map_err(value_err)
    }

    #[getter]
    fn num_vertices(&self) -> usize {
        self.inner.num_vertices()
    }

    #[getter]
    fn num_triangles(&self) -> usize {
        self.inner.num_triangles()
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        self.inner.vertices().iter().map(|v| (v[0], v[1])).collect()
    }

    fn triangles(&self) -> Vec<(usize, usize, usize)> {
        self.inner.triangles().iter().map(|t| (t[0], t[1], t[2])).collect()
    }

    fn total_area(&self) -> f64 {
        self.inner.total_area()
    }

    /// Smallest interior angle in radians.
    fn min_angle(&self) -> f64 {
        self.inner.mesh_min_angle()
    }

    /// Conformity violations; empty for a valid mesh.
    fn validate(&self) -> Vec<String> {
        self.inner.validate().violations
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, triangles={})", self.inner.num_vertices(), self.inner.num_triangles())
    }
}

/// One row of `trace.csv`.
#[pyclass(name = "TraceRow", module = "rheo_afem_py", get_all, frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyTraceRow {
    k: usize,
    n: u32,
    elements: usize,
    dofs: usize,
    e_pde: f64,
    e_ic: f64,
    e_total: f64,
    e_a: f64,
    energy: f64,
    kind: String,
    seconds: f64,
}

impl From<&TraceRow> for PyTraceRow {
    fn from(r: &TraceRow) -> Self {
        Self {
            k: r.k,
            n: r.n,
            elements: r.elements,
            dofs: r.dofs,
            e_pde: r.e_pde,
            e_ic: r.e_ic,
            e_total: r.e_total,
            e_a: r.e_a,
            energy: r.energy,
            kind: r.kind.name().to_string(),
            seconds: r.seconds,
        }
    }
}

#[pymethods]
impl PyTraceRow {
    fn __repr__(&self) -> String {
        format!(
            "TraceRow(k={}, n={}, elements={}, E_total={:e}, E_A={:e}, kind={:?})",
            self.k, self.n, self.elements, self.e_total, self.e_a, self.kind
        )
    }
}

/// Validates a configuration; raises `ValueError` listing every problem.
#[pyfunction]
#[pyo3(signature = (text, overrides = Vec::new()))]
fn check_config(text: &str, overrides: Vec<String>) -> PyResult<()> {
    parse_config_with_overrides(text, &overrides).map(|_| ()).map_err(value_err)
}

/// Runs the adaptive loop in memory and returns `(trace, truncated)`.
#[pyfunction]
#[pyo3(signature = (text, overrides = Vec::new()))]
fn solve(py: Python<'_>, text: &str, overrides: Vec<String>) -> PyResult<(Vec<PyTraceRow>, bool)> {
    let config = parse_config_with_overrides(text, &overrides).map_err(value_err)?;
    let afem = config.afem_config().map_err(value_err)?;
    let mesh = config.initial_mesh().map_err(value_err)?;
    let outcome = py
        .detach(|| afem_run(&afem, mesh, &mut |_| {}))
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((outcome.trace.rows.iter().map(PyTraceRow::from).collect(), outcome.trace.truncated))
}

/// Same as `rheo-afem solve`: writes the output directory and returns the
/// exit status (0 target reached, 2 truncated).
#[pyfunction]
#[pyo3(signature = (text, output, overrides = Vec::new()))]
fn run_to_dir(py: Python<'_>, text: &str, output: PathBuf, overrides: Vec<String>) -> PyResult<i32> {
    let config = parse_config_with_overrides(text, &overrides).map_err(value_err)?;
    let summary = py.detach(|| run(&config, &output, true)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(summary.status.exit_code())
}

#[pyfunction]
fn read_trace(path: PathBuf) -> PyResult<Vec<PyTraceRow>> {
    let file = std::fs::File::open(&path).map_err(|e| value_err(format!("{}: {e}", path.display())))?;
    let rows = trace::read_csv(file).map_err(value_err)?;
    Ok(rows.iter().map(PyTraceRow::from).collect())
}

#[pymodule]
fn rheo_afem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyTraceRow>()?;
    m.add_function(wrap_pyfunction!(check_config, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(run_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(read_trace, m)?)?;
    m.add("TRACE_HEADER", trace::HEADER.join(","))?;
    Ok(())
}
