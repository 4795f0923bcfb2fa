//! Python bindings for `mmddi`.
//!
//! Structured results (programs, summaries, scatter rows) cross the
//! boundary as JSON and come out as plain Python dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use mmddi::analysis;
use mmddi::ddcm::{self, DdcmInit, DdcmOptions};
use mmddi::ddi::{self, IdentifyOptions};
use mmddi::forward;
use mmddi::lattice;
use mmddi::mesh::generate_mesh;

fn to_py(e: mmddi::Error) -> PyErr {
    if e.is_solver_failure() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn py_to_json(obj: &Bound<'_, PyAny>) -> PyResult<String> {
    obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()
}

fn parse_mode(mode: &str) -> PyResult<mmddi::ModelMode> {
    serde_json::from_value(serde_json::Value::String(mode.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown mode {mode:?}, expected 'Full1' or 'Micropolar0'")))
}

/// The metric constants `(lambda, mu, c1, kappa1, ell)`; also the moduli of
/// the linear reference model.
#[pyclass(name = "MetricParams", from_py_object)]
#[derive(Clone)]
struct PyMetricParams {
    inner: mmddi::MetricParams,
}

#[pymethods]
impl PyMetricParams {
    #[new]
    #[pyo3(signature = (lambda_, mu, c1 = 0.0, kappa1 = 0.0, ell = 0.0))]
    fn new(lambda_: f64, mu: f64, c1: f64, kappa1: f64, ell: f64) -> Self {
        Self {
            inner: mmddi::MetricParams::new(lambda_, mu, c1, kappa1, ell),
        }
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda
    }
    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu
    }
    #[getter]
    fn c1(&self) -> f64 {
        self.inner.c1
    }
    #[getter]
    fn kappa1(&self) -> f64 {
        self.inner.kappa1
    }
    #[getter]
    fn ell(&self) -> f64 {
        self.inner.ell
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!("MetricParams(lambda_={}, mu={}, c1={}, kappa1={}, ell={})", p.lambda, p.mu, p.c1, p.kappa1, p.ell)
    }
}

#[pyclass(name = "Mesh", from_py_object)]
#[derive(Clone)]
struct PyMesh {
    inner: mmddi::Mesh,
}

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn rectangle(width: f64, height: f64, h: f64) -> PyResult<Self> {
        Self::build(mmddi::GeometrySpec::rectangle(width, height, h))
    }
    #[staticmethod]
    fn plate(side: f64, h: f64) -> PyResult<Self> {
        Self::build(mmddi::GeometrySpec::plate_with_holes(side, h))
    }
    #[staticmethod]
    fn lshape(side: f64, h: f64) -> PyResult<Self> {
        Self::build(mmddi::GeometrySpec::lshape(side, h))
    }
    #[staticmethod]
    fn notch(side: f64, radius: f64, h: f64) -> PyResult<Self> {
        Self::build(mmddi::GeometrySpec::double_notch(side, radius, h))
    }
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        mmddi::Mesh::from_json(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }
    #[getter]
    fn n_elems(&self) -> usize {
        self.inner.n_elems()
    }
    #[getter]
    fn n_points(&self) -> usize {
        self.inner.n_points()
    }
    #[getter]
    fn nodes(&self) -> Vec<[f64; 2]> {
        self.inner.nodes.clone()
    }
}

impl PyMesh {
    fn build(spec: mmddi::GeometrySpec) -> PyResult<Self> {
        generate_mesh(&spec).map(|inner| Self { inner }).map_err(to_py)
    }
}

/// Displacement-driven loading program.
#[pyclass(name = "BoundaryProgram", from_py_object)]
#[derive(Clone)]
struct PyProgram {
    inner: mmddi::BoundaryProgram,
}

#[pymethods]
impl PyProgram {
    #[staticmethod]
    fn tension(ubar: f64, increments: usize) -> Self {
        Self {
            inner: mmddi::BoundaryProgram::tension(ubar, increments),
        }
    }
    #[staticmethod]
    fn clamped_tension(ubar: f64, body_couple: f64, increments: usize) -> Self {
        Self {
            inner: mmddi::BoundaryProgram::clamped_tension(ubar, body_couple, increments),
        }
    }
    /// Builds a program from a dict with the JSON field names.
    #[staticmethod]
    fn from_dict(d: &Bound<'_, PyAny>) -> PyResult<Self> {
        let text = py_to_json(d)?;
        serde_json::from_str(&text)
            .map(|inner| Self { inner })
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text = serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }
}

#[pyclass(name = "SnapshotSet", from_py_object)]
#[derive(Clone)]
struct PySnapshotSet {
    inner: mmddi::SnapshotSet,
}

#[pymethods]
impl PySnapshotSet {
    /// Reads a snapshot directory and returns `(mesh, snapshots)`.
    #[staticmethod]
    fn read_dir(dir: &str) -> PyResult<(PyMesh, Self)> {
        let (mesh, set) = mmddi::SnapshotSet::read_dir(dir).map_err(to_py)?;
        Ok((PyMesh { inner: mesh }, Self { inner: set }))
    }
    fn write_dir(&self, dir: &str, mesh: &PyMesh) -> PyResult<()> {
        self.inner.write_dir(dir, &mesh.inner).map_err(to_py)
    }
    fn __len__(&self) -> usize {
        self.inner.len()
    }
    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }
    /// Nodal displacements of snapshot `index`.
    fn displacements(&self, index: usize) -> PyResult<Vec<[f64; 2]>> {
        self.inner
            .snapshots
            .get(index)
            .map(|s| s.fields.u.clone())
            .ok_or_else(|| PyValueError::new_err("snapshot index out of range"))
    }
}

#[pyclass(name = "MaterialDataset", from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: mmddi::MaterialDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn read(path: &str) -> PyResult<Self> {
        mmddi::MaterialDataset::read(path).map(|inner| Self { inner }).map_err(to_py)
    }
    fn write(&self, path: &str) -> PyResult<()> {
        self.inner.write(path).map_err(to_py)
    }
    fn __len__(&self) -> usize {
        self.inner.len()
    }
    #[getter]
    fn mode(&self) -> String {
        self.inner.mode.to_string()
    }
    #[getter]
    fn metric(&self) -> PyMetricParams {
        PyMetricParams { inner: self.inner.metric }
    }
    #[getter]
    fn counts(&self) -> Vec<f64> {
        self.inner.counts.clone()
    }
    /// Each state as its 16 strain slots followed by its 16 stress slots.
    fn states(&self) -> Vec<Vec<f64>> {
        self.inner.states.iter().map(|z| z.data().to_vec()).collect()
    }
    /// Slope, intercept, R² and reference value of every scatter row
    /// available in the dataset's mode.
    #[pyo3(signature = (reference = None))]
    fn scatter_stats<'py>(&self, py: Python<'py>, reference: Option<PyMetricParams>) -> PyResult<Bound<'py, PyAny>> {
        let reference = reference.map_or(self.inner.metric, |r| r.inner);
        let rows = analysis::rows_for(self.inner.mode);
        let series = analysis::scatter_series(&self.inner.states, self.inner.mode, &rows, &reference).map_err(to_py)?;
        let text = serde_json::to_string(&series).map_err(|e| PyValueError::new_err(e.to_string()))?;
        json_to_py(py, &text)
    }
}

#[pyclass(name = "IdentifyResult")]
struct PyIdentifyResult {
    #[pyo3(get)]
    dataset: PyDataset,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    outer_iterations: usize,
    #[pyo3(get)]
    history: Vec<f64>,
    #[pyo3(get)]
    pseudo_strain: f64,
    #[pyo3(get)]
    pointers: Vec<usize>,
}

#[pyclass(name = "DdcmSolution")]
struct PyDdcmSolution {
    inner: ddcm::DdcmSolution,
}

#[pymethods]
impl PyDdcmSolution {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }
    #[getter]
    fn distance(&self) -> f64 {
        self.inner.distance
    }
    #[getter]
    fn history(&self) -> Vec<f64> {
        self.inner.history.clone()
    }
    #[getter]
    fn pointers(&self) -> Vec<usize> {
        self.inner.pointers.clone()
    }
    #[getter]
    fn displacements(&self) -> Vec<[f64; 2]> {
        self.inner.fields.u.clone()
    }
    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
    fn write_states_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_states_csv(path).map_err(to_py)
    }
}

#[pyfunction]
fn generate_snapshots(
    mesh: &PyMesh,
    moduli: &PyMetricParams,
    mode: &str,
    program: &PyProgram,
) -> PyResult<PySnapshotSet> {
    forward::generate_snapshots(&mesh.inner, &moduli.inner, parse_mode(mode)?, &program.inner)
        .map(|inner| PySnapshotSet { inner })
        .map_err(to_py)
}

/// Honeycomb snapshots with beams of length `beam_length` on a domain of
/// side `side`, transferred to `mesh` built for the same case and side.
#[pyfunction]
#[pyo3(signature = (mesh, case, beam_length, program, side = 30.0, support_factor = lattice::DEFAULT_SUPPORT_FACTOR))]
fn lattice_snapshots(
    mesh: &PyMesh,
    case: &str,
    beam_length: f64,
    program: &PyProgram,
    side: f64,
    support_factor: f64,
) -> PyResult<PySnapshotSet> {
    // h only sizes continuum meshes; the lattice ignores it
    let h = 1.0;
    let domain = match case {
        "lshape" => mmddi::GeometrySpec::lshape(side, h),
        "notch" => mmddi::GeometrySpec::double_notch(side, side / 5.0, h),
        _ => return Err(PyValueError::new_err("lattice cases are 'lshape' and 'notch'")),
    };
    let (_, height) = domain.extent();
    let lcase = lattice::LatticeCase {
        domain,
        beam: lattice::BeamProps {
            e: 430.0,
            a: 0.2,
            i: 6.67e-4,
            l: 2.0,
        },
        epsilon: 3f64.sqrt() * beam_length / height,
        program: program.inner.clone(),
        support_factor,
    };
    lattice::lattice_snapshots(&lcase, &mesh.inner)
        .map(|run| PySnapshotSet { inner: run.snapshots })
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (mesh, snapshots, metric, nstates, seed = 0, max_outer = None, polish = false))]
fn identify(
    mesh: &PyMesh,
    snapshots: &PySnapshotSet,
    metric: &PyMetricParams,
    nstates: usize,
    seed: u64,
    max_outer: Option<usize>,
    polish: bool,
) -> PyResult<PyIdentifyResult> {
    let mut opts = IdentifyOptions::new(nstates, seed);
    if let Some(m) = max_outer {
        opts.max_outer = m;
    }
    opts.polish = polish;
    let set = &snapshots.inner;
    let r = ddi::identify(&mesh.inner, set, &metric.inner, set.mode, &opts).map_err(to_py)?;
    Ok(PyIdentifyResult {
        dataset: PyDataset { inner: r.dataset },
        converged: r.converged,
        outer_iterations: r.outer_iterations,
        history: r.history,
        pseudo_strain: r.pseudo_strain,
        pointers: r.pointers,
    })
}

#[pyfunction]
#[pyo3(signature = (mesh, dataset, program, metric = None, seed = 0, max_iter = ddcm::DEFAULT_MAX_ITER, init = "random"))]
fn solve_ddcm(
    mesh: &PyMesh,
    dataset: &PyDataset,
    program: &PyProgram,
    metric: Option<PyMetricParams>,
    seed: u64,
    max_iter: usize,
    init: &str,
) -> PyResult<PyDdcmSolution> {
    let init = match init {
        "random" => DdcmInit::Random,
        "nearest_to_zero" => DdcmInit::NearestToZero,
        _ => return Err(PyValueError::new_err("init is 'random' or 'nearest_to_zero'")),
    };
    let opts = DdcmOptions {
        seed,
        max_iter,
        init,
        warm_start: None,
    };
    let ds = &dataset.inner;
    let metric = metric.map_or(ds.metric, |m| m.inner);
    ddcm::solve_ddcm(&mesh.inner, ds, &program.inner, &metric, ds.mode, &opts)
        .map(|inner| PyDdcmSolution { inner })
        .map_err(to_py)
}

/// Effective honeycomb moduli as a dict with `c11`, `c12`, `c33`, `kappa1`.
#[pyfunction]
fn homogenized_moduli<'py>(py: Python<'py>, e: f64, a: f64, i: f64, l: f64) -> PyResult<Bound<'py, PyAny>> {
    let m = lattice::homogenized_moduli(e, a, i, l);
    let text = serde_json::to_string(&m).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &text)
}

/// Ordinary least squares with intercept: `(slope, intercept, r2)`.
#[pyfunction]
fn fit_slope_r2(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = analysis::fit_slope_r2(&points).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.r2))
}

#[pyfunction]
fn nmad(ratios: Vec<f64>, reference: f64) -> PyResult<f64> {
    analysis::nmad(&ratios, reference).map_err(to_py)
}

/// Runs the command line with `args` (without the program name) and
/// returns the exit code.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    mmddi::cli::run_cli(std::iter::once("mmddi".to_string()).chain(args))
}

#[pymodule]
#[pyo3(name = "mmddi")]
pub fn mmddi_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMetricParams>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProgram>()?;
    m.add_class::<PySnapshotSet>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyIdentifyResult>()?;
    m.add_class::<PyDdcmSolution>()?;
    m.add_function(wrap_pyfunction!(generate_snapshots, m)?)?;
    m.add_function(wrap_pyfunction!(lattice_snapshots, m)?)?;
    m.add_function(wrap_pyfunction!(identify, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ddcm, m)?)?;
    m.add_function(wrap_pyfunction!(homogenized_moduli, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope_r2, m)?)?;
    m.add_function(wrap_pyfunction!(nmad, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
