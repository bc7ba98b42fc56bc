//! Python bindings: grids, sampled functions, gradient polytopes, envelopes,
//! Monge–Ampère measures, checks and scenario runs.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyModule;

use rooftop_core::envelope::{envelope_with, maximal_envelope_with, model_potential, rooftop_with};
use rooftop_core::harness::{self, CheckOptions, CheckReport, Corollary};
use rooftop_core::scenario::{self, Report};
use rooftop_core::{measure, EnvelopeOptions, Expression};

fn err(e: rooftop_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn from_json<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    PyModule::import(py, "json")?.call_method1("loads", (text,))
}

fn report_dict<'py>(py: Python<'py>, r: &CheckReport) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(r).map_err(|e| PyValueError::new_err(e.to_string()))?;
    from_json(py, &text)
}

#[pyclass(name = "Grid", module = "rooftop", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(rooftop_core::Grid);

#[pymethods]
impl PyGrid {
    #[new]
    fn new(lo: Vec<f64>, hi: Vec<f64>, resolution: Vec<usize>) -> PyResult<Self> {
        rooftop_core::Grid::new(lo.len(), &lo, &hi, &resolution).map(PyGrid).map_err(err)
    }

    #[staticmethod]
    fn line(lo: f64, hi: f64, resolution: usize) -> PyResult<Self> {
        rooftop_core::Grid::line(lo, hi, resolution).map(PyGrid).map_err(err)
    }

    #[staticmethod]
    fn square(lo: f64, hi: f64, resolution: usize) -> PyResult<Self> {
        rooftop_core::Grid::square(lo, hi, resolution).map(PyGrid).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    /// Node coordinates, one list per axis.
    fn points(&self) -> Vec<Vec<f64>> {
        (0..self.0.dim()).map(|a| (0..self.0.len()).map(|n| self.0.point(n)[a]).collect()).collect()
    }

    fn __repr__(&self) -> String {
        harness::describe_grid(&self.0)
    }
}

#[pyclass(name = "GridFunction", module = "rooftop", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGridFunction(rooftop_core::GridFunction);

#[pymethods]
impl PyGridFunction {
    #[new]
    fn new(grid: &PyGrid, values: Vec<f64>) -> PyResult<Self> {
        rooftop_core::GridFunction::new(grid.0.clone(), values).map(PyGridFunction).map_err(err)
    }

    /// Samples an expression in `x` (and `y`) at every node.
    #[staticmethod]
    fn sample(expr: &str, grid: &PyGrid) -> PyResult<Self> {
        let e = Expression::parse(expr).map_err(err)?;
        rooftop_core::sample(&e, &grid.0).map(PyGridFunction).map_err(err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid().clone())
    }

    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.values().len()
    }

    fn __getitem__(&self, node: usize) -> PyResult<f64> {
        self.0.values().get(node).copied().ok_or_else(|| pyo3::exceptions::PyIndexError::new_err(node))
    }

    fn sup_distance(&self, other: &PyGridFunction) -> PyResult<f64> {
        self.0.sup_distance(&other.0).map_err(err)
    }
}

#[pyclass(name = "Polytope", module = "rooftop", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPolytope(rooftop_core::GradientPolytope);

#[pymethods]
impl PyPolytope {
    #[staticmethod]
    fn interval(lo: f64, hi: f64) -> PyResult<Self> {
        rooftop_core::GradientPolytope::interval(lo, hi).map(PyPolytope).map_err(err)
    }

    #[staticmethod]
    fn polygon(vertices: Vec<[f64; 2]>) -> PyResult<Self> {
        rooftop_core::GradientPolytope::polygon(vertices).map(PyPolytope).map_err(err)
    }

    #[staticmethod]
    fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> PyResult<Self> {
        rooftop_core::GradientPolytope::rectangle(lo, hi).map(PyPolytope).map_err(err)
    }

    #[staticmethod]
    fn segment(a: [f64; 2], b: [f64; 2]) -> PyResult<Self> {
        rooftop_core::GradientPolytope::segment(a, b).map(PyPolytope).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn is_full_dimensional(&self) -> bool {
        self.0.is_full_dimensional()
    }

    fn support(&self, x: Vec<f64>) -> f64 {
        self.0.support([x.first().copied().unwrap_or(0.0), x.get(1).copied().unwrap_or(0.0)])
    }

    fn model_potential(&self, grid: &PyGrid) -> PyResult<PyGridFunction> {
        model_potential(&self.0, &grid.0).map(PyGridFunction).map_err(err)
    }

    fn __repr__(&self) -> String {
        harness::describe_polytope(&self.0)
    }
}

#[pyclass(name = "Envelope", module = "rooftop", frozen, get_all)]
struct PyEnvelope {
    envelope: PyGridFunction,
    /// Contact mask against the obstacle.
    contact: Vec<bool>,
    /// One mask per obstacle for rooftop envelopes.
    obstacle_contacts: Vec<Vec<bool>>,
    contact_tolerance: f64,
    dual_resolution: usize,
}

impl From<rooftop_core::EnvelopeResult> for PyEnvelope {
    fn from(r: rooftop_core::EnvelopeResult) -> Self {
        PyEnvelope {
            envelope: PyGridFunction(r.envelope),
            contact: r.contact.mask().to_vec(),
            obstacle_contacts: r.obstacle_contacts.iter().map(|c| c.mask().to_vec()).collect(),
            contact_tolerance: r.diagnostics.contact_tolerance,
            dual_resolution: r.diagnostics.dual_resolution,
        }
    }
}

#[pyclass(name = "Measure", module = "rooftop", frozen, skip_from_py_object)]
struct PyMeasure(rooftop_core::DiscreteMeasure);

#[pymethods]
impl PyMeasure {
    fn masses(&self) -> Vec<f64> {
        self.0.masses().to_vec()
    }

    #[getter]
    fn total_mass(&self) -> f64 {
        self.0.total_mass()
    }

    #[getter]
    fn boundary_deficit(&self) -> f64 {
        self.0.boundary_deficit()
    }

    fn binned(&self, width: usize) -> Vec<f64> {
        self.0.binned(width)
    }
}

fn options(dual_resolution: Option<usize>, contact_tolerance: Option<f64>) -> EnvelopeOptions {
    EnvelopeOptions { dual_resolution, contact_tolerance }
}

/// Largest convex minorant of `f` with subgradients in `q`.
#[pyfunction]
#[pyo3(signature = (f, q, dual_resolution=None, contact_tolerance=None))]
fn envelope(
    py: Python<'_>,
    f: &PyGridFunction,
    q: &PyPolytope,
    dual_resolution: Option<usize>,
    contact_tolerance: Option<f64>,
) -> PyResult<PyEnvelope> {
    let opts = options(dual_resolution, contact_tolerance);
    py.detach(|| envelope_with(&f.0, &q.0, &opts)).map(PyEnvelope::from).map_err(err)
}

/// Envelope of the pointwise minimum of several obstacles.
#[pyfunction]
#[pyo3(signature = (fs, q, dual_resolution=None, contact_tolerance=None))]
fn rooftop(
    py: Python<'_>,
    fs: Vec<PyRef<'_, PyGridFunction>>,
    q: &PyPolytope,
    dual_resolution: Option<usize>,
    contact_tolerance: Option<f64>,
) -> PyResult<PyEnvelope> {
    let fs: Vec<_> = fs.iter().map(|f| f.0.clone()).collect();
    let opts = options(dual_resolution, contact_tolerance);
    py.detach(|| rooftop_with(&fs, &q.0, &opts)).map(PyEnvelope::from).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (f, q, q_sing, dual_resolution=None, contact_tolerance=None))]
fn maximal_envelope(
    py: Python<'_>,
    f: &PyGridFunction,
    q: &PyPolytope,
    q_sing: &PyPolytope,
    dual_resolution: Option<usize>,
    contact_tolerance: Option<f64>,
) -> PyResult<PyEnvelope> {
    let opts = options(dual_resolution, contact_tolerance);
    py.detach(|| maximal_envelope_with(&f.0, &q.0, &q_sing.0, &opts)).map(PyEnvelope::from).map_err(err)
}

/// Alexandrov measure of a convex grid function with gradients in `q`.
#[pyfunction]
fn ma(py: Python<'_>, u: &PyGridFunction, q: &PyPolytope) -> PyResult<PyMeasure> {
    py.detach(|| measure::ma(&u.0, &q.0)).map(PyMeasure).map_err(err)
}

/// Measure of an obstacle, over its own gradient range.
#[pyfunction]
fn barrier_ma(py: Python<'_>, f: &PyGridFunction) -> PyResult<PyMeasure> {
    py.detach(|| measure::gradient_bounds(&f.0).and_then(|q| measure::barrier_ma(&f.0, &q))).map(PyMeasure).map_err(err)
}

#[pyfunction]
fn check_main<'py>(
    py: Python<'py>,
    phi: &PyGridFunction,
    f: &PyGridFunction,
    q: &PyPolytope,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| harness::check_main(&phi.0, &f.0, &q.0, &CheckOptions::default()));
    report_dict(py, &r)
}

#[pyfunction]
#[pyo3(signature = (which, f, q, phi=None, q_sing=None))]
fn check_corollary<'py>(
    py: Python<'py>,
    which: &str,
    f: &PyGridFunction,
    q: &PyPolytope,
    phi: Option<&PyGridFunction>,
    q_sing: Option<&PyPolytope>,
) -> PyResult<Bound<'py, PyAny>> {
    let which: Corollary = which.parse().map_err(err)?;
    let r = py.detach(|| {
        harness::check_corollary(which, phi.map(|p| &p.0), &f.0, &q.0, q_sing.map(|p| &p.0), &CheckOptions::default())
    });
    report_dict(py, &r)
}

#[pyfunction]
fn check_rooftop_decomposition<'py>(
    py: Python<'py>,
    f1: &PyGridFunction,
    f2: &PyGridFunction,
    q: &PyPolytope,
) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| harness::check_rooftop_decomposition(&f1.0, &f2.0, &q.0, &CheckOptions::default()));
    report_dict(py, &r)
}

/// Runs a scenario file (TOML, or JSON by extension) and returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (path, resolution=None, seed=None))]
fn run_scenario<'py>(
    py: Python<'py>,
    path: &str,
    resolution: Option<usize>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let report = py
        .detach(|| -> rooftop_core::Result<Report> {
            let mut s = scenario::load_scenario(path)?;
            if let Some(r) = resolution {
                s = s.with_resolution(r);
            }
            if let Some(seed) = seed {
                s = s.with_seed(seed);
            }
            s.validate()?;
            scenario::run_scenario(&s)
        })
        .map_err(err)?;
    from_json(py, &report.to_json())
}

/// Runs the shipped corpus; returns one report dict per scenario.
#[pyfunction]
fn run_corpus<'py>(py: Python<'py>) -> PyResult<Vec<Bound<'py, PyAny>>> {
    let reports = py
        .detach(|| {
            scenario::corpus()
                .iter()
                .map(|e| e.scenario().and_then(|s| scenario::run_scenario(&s)))
                .collect::<rooftop_core::Result<Vec<_>>>()
        })
        .map_err(err)?;
    reports.iter().map(|r| from_json(py, &r.to_json())).collect()
}

#[pymodule(name = "rooftop")]
fn rooftop_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyGridFunction>()?;
    m.add_class::<PyPolytope>()?;
    m.add_class::<PyEnvelope>()?;
    m.add_class::<PyMeasure>()?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add_function(wrap_pyfunction!(rooftop, m)?)?;
    m.add_function(wrap_pyfunction!(maximal_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(ma, m)?)?;
    m.add_function(wrap_pyfunction!(barrier_ma, m)?)?;
    m.add_function(wrap_pyfunction!(check_main, m)?)?;
    m.add_function(wrap_pyfunction!(check_corollary, m)?)?;
    m.add_function(wrap_pyfunction!(check_rooftop_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_corpus, m)?)?;
    Ok(())
}
