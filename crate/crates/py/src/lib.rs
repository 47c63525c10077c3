//! Python bindings: specs, cell graphs, the Dirichlet solver and the
//! conductance experiments. Structured results come back as plain dicts.

use std::collections::HashMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use fraccond::graph::Adjacency;
use fraccond::lab::{self, LabConfig};
use fraccond::lattice::resolve_spec;
use fraccond::oracle::{self, OracleConfig};
use fraccond::{AdjacencyMode, CellIndex, CellSet, Error, GeneralBackend, LinearBackend, SolverConfig};

fn err(e: Error) -> PyErr {
    match e {
        Error::LinearSolve(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn solver_config(backend: &str, general: &str, tol: f64, max_iterations: usize) -> PyResult<SolverConfig> {
    let linear: LinearBackend = parse(backend)?;
    Ok(SolverConfig {
        rel_tolerance: tol,
        max_iterations,
        p2_backend: linear,
        inner_backend: linear,
        general_backend: parse::<GeneralBackend>(general)?,
        ..SolverConfig::default()
    })
}

#[pyclass(name = "FractalSpec", module = "fraccond_py", frozen)]
struct PyFractalSpec {
    inner: fraccond::FractalSpec,
}

#[pymethods]
impl PyFractalSpec {
    #[new]
    fn new(name: String, dimension: usize, retained: Vec<Vec<u32>>) -> PyResult<Self> {
        let inner = fraccond::FractalSpec::new(name, dimension, retained).map_err(err)?;
        Ok(Self { inner })
    }

    /// `F2`, `F3`, `tildeF2`, `G1`, `G2`, or the text form.
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: resolve_spec(name).map_err(err)?,
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: fraccond::FractalSpec::parse_text(text).map_err(err)?,
        })
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    #[getter]
    fn retained(&self) -> Vec<Vec<u32>> {
        self.inner.retained().to_vec()
    }

    fn hausdorff_dimension(&self) -> f64 {
        self.inner.hausdorff_dimension()
    }

    fn contains_cell(&self, level: u32, coords: Vec<u32>) -> PyResult<bool> {
        let cell = CellIndex::new(level, coords).map_err(err)?;
        self.inner.contains_cell(&cell).map_err(err)
    }

    fn cell_count(&self, level: u32) -> u128 {
        self.inner.cell_count(level)
    }

    fn cells_at_level(&self, py: Python<'_>, level: u32) -> PyResult<Vec<Vec<u32>>> {
        let cells = py.detach(|| self.inner.cells_at_level(level)).map_err(err)?;
        Ok(cells.iter().map(<[u32]>::to_vec).collect())
    }

    /// `S^m` of the given level-`level` cells.
    fn subdivide(&self, level: u32, cells: Vec<Vec<u32>>, m: u32) -> PyResult<Vec<Vec<u32>>> {
        let set = cell_set(level, self.inner.dimension(), cells)?;
        let out = self.inner.subdivide(&set, m).map_err(err)?;
        Ok(out.iter().map(<[u32]>::to_vec).collect())
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "FractalSpec(name={:?}, dimension={}, retained={})",
            self.inner.name(),
            self.inner.dimension(),
            self.inner.retained_count()
        )
    }
}

fn cell_set(level: u32, dimension: usize, cells: Vec<Vec<u32>>) -> PyResult<CellSet> {
    let cells = cells
        .into_iter()
        .map(|c| CellIndex::new(level, c))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    CellSet::from_cells(level, dimension, cells).map_err(err)
}

#[pyclass(name = "ConductanceResult", module = "fraccond_py", frozen, get_all)]
struct PyConductanceResult {
    value: f64,
    solution: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
    backend: String,
    unanchored: usize,
}

#[pymethods]
impl PyConductanceResult {
    fn diagnostics_json(&self) -> String {
        self.to_core().diagnostics_json()
    }

    fn __repr__(&self) -> String {
        format!(
            "ConductanceResult(value={}, iterations={}, converged={}, backend={:?})",
            self.value, self.iterations, self.converged, self.backend
        )
    }
}

impl PyConductanceResult {
    fn to_core(&self) -> fraccond::ConductanceResult {
        fraccond::ConductanceResult {
            value: self.value,
            solution: self.solution.clone(),
            iterations: self.iterations,
            residual: self.residual,
            converged: self.converged,
            backend: self.backend.clone(),
            unanchored: self.unanchored,
        }
    }
}

impl From<fraccond::ConductanceResult> for PyConductanceResult {
    fn from(r: fraccond::ConductanceResult) -> Self {
        Self {
            value: r.value,
            solution: r.solution,
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
            backend: r.backend,
            unanchored: r.unanchored,
        }
    }
}

#[pyclass(name = "CellGraph", module = "fraccond_py", frozen)]
struct PyCellGraph {
    inner: fraccond::CellGraph,
}

fn fixed_vector(n: usize, fixed: HashMap<usize, f64>) -> PyResult<Vec<Option<f64>>> {
    let mut out = vec![None; n];
    for (v, value) in fixed {
        *out
            .get_mut(v)
            .ok_or_else(|| PyValueError::new_err(format!("vertex {v} out of range")))? = Some(value);
    }
    Ok(out)
}

#[pymethods]
impl PyCellGraph {
    /// `mode` is `intersection`, `edge` or `face`.
    #[new]
    #[pyo3(signature = (spec, level, mode = "intersection"))]
    fn new(py: Python<'_>, spec: &PyFractalSpec, level: u32, mode: &str) -> PyResult<Self> {
        let mode: AdjacencyMode = parse(mode)?;
        let inner = py
            .detach(|| fraccond::CellGraph::build(&spec.inner, level, mode))
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn level(&self) -> u32 {
        self.inner.level()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode().as_str()
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn vertices(&self) -> Vec<Vec<u32>> {
        self.inner.vertices().iter().map(<[u32]>::to_vec).collect()
    }

    /// Unordered edges `(u, v)` with `u < v`.
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.adjacency().edges().collect()
    }

    fn index_of(&self, coords: Vec<u32>) -> PyResult<usize> {
        let cell = CellIndex::new(self.inner.level(), coords).map_err(err)?;
        self.inner.index_of(&cell).map_err(err)
    }

    fn gamma(&self, coords: Vec<u32>) -> PyResult<Vec<Vec<u32>>> {
        let cell = CellIndex::new(self.inner.level(), coords).map_err(err)?;
        Ok(self.inner.gamma(&cell).map_err(err)?.iter().map(<[u32]>::to_vec).collect())
    }

    fn gamma_complement(&self, coords: Vec<u32>) -> PyResult<Vec<Vec<u32>>> {
        let cell = CellIndex::new(self.inner.level(), coords).map_err(err)?;
        Ok(self
            .inner
            .gamma_complement(&cell)
            .map_err(err)?
            .iter()
            .map(<[u32]>::to_vec)
            .collect())
    }

    fn energy(&self, f: Vec<f64>, p: f64) -> PyResult<f64> {
        fraccond::energy(self.inner.adjacency(), &f, p).map_err(err)
    }

    /// Minimizes the `p`-energy with `fixed` (vertex index → value) pinned.
    #[pyo3(signature = (fixed, p, backend = "direct", general = "damped-newton", tol = 1e-8, max_iterations = 10_000))]
    fn solve(
        &self,
        py: Python<'_>,
        fixed: HashMap<usize, f64>,
        p: f64,
        backend: &str,
        general: &str,
        tol: f64,
        max_iterations: usize,
    ) -> PyResult<PyConductanceResult> {
        let config = solver_config(backend, general, tol, max_iterations)?;
        let fixed = fixed_vector(self.inner.vertex_count(), fixed)?;
        let adjacency = self.inner.adjacency();
        let r = py
            .detach(|| {
                let problem = fraccond::DirichletProblem::new(adjacency, fixed, p)?;
                fraccond::solve_dirichlet(&problem, &config)
            })
            .map_err(err)?;
        Ok(r.into())
    }

    fn __repr__(&self) -> String {
        format!(
            "CellGraph(spec={:?}, level={}, mode={:?}, vertices={}, edges={})",
            self.inner.spec().name(),
            self.inner.level(),
            self.inner.mode().as_str(),
            self.inner.vertex_count(),
            self.inner.edge_count()
        )
    }
}

fn adjacency(vertex_count: usize, edges: &[(usize, usize)]) -> PyResult<Adjacency> {
    Adjacency::from_edges(vertex_count, edges).map_err(err)
}

/// `Σ |f(u) - f(v)|^p` over the given edges.
#[pyfunction]
fn energy(vertex_count: usize, edges: Vec<(usize, usize)>, f: Vec<f64>, p: f64) -> PyResult<f64> {
    fraccond::energy(&adjacency(vertex_count, &edges)?, &f, p).map_err(err)
}

/// Dirichlet problem on an arbitrary graph given by an edge list.
#[pyfunction]
#[pyo3(signature = (vertex_count, edges, fixed, p, backend = "direct", general = "damped-newton", tol = 1e-8, max_iterations = 10_000))]
#[allow(clippy::too_many_arguments)]
fn solve_dirichlet(
    py: Python<'_>,
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    fixed: HashMap<usize, f64>,
    p: f64,
    backend: &str,
    general: &str,
    tol: f64,
    max_iterations: usize,
) -> PyResult<PyConductanceResult> {
    let config = solver_config(backend, general, tol, max_iterations)?;
    let graph = adjacency(vertex_count, &edges)?;
    let fixed = fixed_vector(vertex_count, fixed)?;
    let r = py
        .detach(|| {
            let problem = fraccond::DirichletProblem::new(&graph, fixed, p)?;
            fraccond::solve_dirichlet(&problem, &config)
        })
        .map_err(err)?;
    Ok(r.into())
}

/// Reference coordinate-descent solver; small graphs only.
#[pyfunction]
fn brute_solve(vertex_count: usize, edges: Vec<(usize, usize)>, fixed: HashMap<usize, f64>, p: f64) -> PyResult<PyConductanceResult> {
    let graph = adjacency(vertex_count, &edges)?;
    let problem = fraccond::DirichletProblem::new(&graph, fixed_vector(vertex_count, fixed)?, p).map_err(err)?;
    Ok(oracle::brute_solve(&problem, &OracleConfig::default()).map_err(err)?.into())
}

/// `E_{p,m}(A1, A2)` for level-`n` cell sets.
#[pyfunction]
#[pyo3(signature = (spec, n, a1, a2, m, p, mode = "intersection"))]
#[allow(clippy::too_many_arguments)]
fn effective_conductance(
    py: Python<'_>,
    spec: &PyFractalSpec,
    n: u32,
    a1: Vec<Vec<u32>>,
    a2: Vec<Vec<u32>>,
    m: u32,
    p: f64,
    mode: &str,
) -> PyResult<PyConductanceResult> {
    let d = spec.inner.dimension();
    let (a1, a2) = (cell_set(n, d, a1)?, cell_set(n, d, a2)?);
    let mode: AdjacencyMode = parse(mode)?;
    let r = py
        .detach(|| lab::effective_conductance(&spec.inner, n, &a1, &a2, m, p, mode, &LabConfig::default()))
        .map_err(err)?;
    Ok(r.into())
}

/// `E_{p,m}(Q, Γ(Q)^c)` with the applicable analytic bounds, as a dict.
#[pyfunction]
#[pyo3(signature = (spec, cell, m, p, level = 1, mode = "intersection"))]
fn cell_conductance<'py>(
    py: Python<'py>,
    spec: &PyFractalSpec,
    cell: Vec<u32>,
    m: u32,
    p: f64,
    level: u32,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cell = CellIndex::new(level, cell).map_err(err)?;
    let mode: AdjacencyMode = parse(mode)?;
    let report = py
        .detach(|| lab::cell_conductance(&spec.inner, &cell, m, p, mode, &LabConfig::default()))
        .map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn lemma21_lower_bound(d: usize, p: f64, m: u32) -> PyResult<f64> {
    lab::lemma21_lower_bound(d, p, m).map_err(err)
}

#[pyfunction]
fn lemma22_upper_bound(d: usize, m: u32) -> PyResult<f64> {
    lab::lemma22_upper_bound(d, m).map_err(err)
}

#[pyfunction]
fn boundary_strip_count(d: usize, m: u32) -> PyResult<usize> {
    lab::boundary_strip_count(d, m).map_err(err)
}

/// Corner/centre conductances and their ratio for each `m`.
#[pyfunction]
fn ratio_scan<'py>(py: Python<'py>, d: usize, p: f64, ms: Vec<u32>) -> PyResult<Bound<'py, PyAny>> {
    let rows = py
        .detach(|| lab::ratio_scan(d, p, &ms, &LabConfig::default()))
        .map_err(err)?;
    to_py(py, &rows)
}

/// Least-squares decay fit of `(m, E)` samples: `σ = exp(-slope)`.
#[pyfunction]
fn fit_geometric<'py>(py: Python<'py>, p: f64, samples: Vec<(u32, f64)>) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &lab::fit_geometric(p, &samples).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (spec, cell, p, ms, level = 1, mode = "intersection"))]
fn scaling_fit<'py>(
    py: Python<'py>,
    spec: &PyFractalSpec,
    cell: Vec<u32>,
    p: f64,
    ms: Vec<u32>,
    level: u32,
    mode: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let cell = CellIndex::new(level, cell).map_err(err)?;
    let mode: AdjacencyMode = parse(mode)?;
    let fit = py
        .detach(|| lab::scaling_fit(&spec.inner, &cell, p, &ms, mode, &LabConfig::default()))
        .map_err(err)?;
    to_py(py, &fit)
}

/// Bracket estimate of the exponent where the decay of the largest
/// corner-to-far conductance crosses 1, over one cell per symmetry orbit.
#[pyfunction]
#[pyo3(signature = (spec, m_max, p_lo = 1.05, p_hi = 2.5))]
fn critical_p_bracket<'py>(
    py: Python<'py>,
    spec: &PyFractalSpec,
    m_max: u32,
    p_lo: f64,
    p_hi: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let b = py
        .detach(|| {
            let reps = lab::representative_cells(&spec.inner, 1)?;
            lab::critical_p_bracket(&spec.inner, &reps, m_max, p_lo, p_hi, &LabConfig::default())
        })
        .map_err(err)?;
    to_py(py, &b)
}

/// Corner conductances on `F2` and `tildeF2`.
#[pyfunction]
fn subgraph_comparison<'py>(py: Python<'py>, ms: Vec<u32>, p: f64) -> PyResult<Bound<'py, PyAny>> {
    let rows = py
        .detach(|| lab::subgraph_comparison(&ms, p, &LabConfig::default()))
        .map_err(err)?;
    to_py(py, &rows)
}

#[pymodule]
fn fraccond_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFractalSpec>()?;
    m.add_class::<PyCellGraph>()?;
    m.add_class::<PyConductanceResult>()?;
    m.add_function(wrap_pyfunction!(energy, m)?)?;
    m.add_function(wrap_pyfunction!(solve_dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(brute_solve, m)?)?;
    m.add_function(wrap_pyfunction!(effective_conductance, m)?)?;
    m.add_function(wrap_pyfunction!(cell_conductance, m)?)?;
    m.add_function(wrap_pyfunction!(lemma21_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(lemma22_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(boundary_strip_count, m)?)?;
    m.add_function(wrap_pyfunction!(ratio_scan, m)?)?;
    m.add_function(wrap_pyfunction!(fit_geometric, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_fit, m)?)?;
    m.add_function(wrap_pyfunction!(critical_p_bracket, m)?)?;
    m.add_function(wrap_pyfunction!(subgraph_comparison, m)?)?;
    m.add("BUILTIN_SPECS", fraccond::lattice::BUILTIN_NAMES.to_vec())?;
    Ok(())
}
