//! Python bindings: graphs, decomposition trees, H2 evaluation, the dense
//! oracle check and edge re-weighting.
//!
//! Matrices cross the boundary as lists of rows. Structured results are
//! returned as plain dicts and lists.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use sph2::cli::{self, ConfigFile, GraphFile, TreeFile};
use sph2::h2::H2Method;
use sph2::matlin::{self, SpdMatrix};
use sph2::{Error, MatrixGraph, SpTree};

create_exception!(sph2, NotSeriesParallelError, PyValueError);

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::NotSeriesParallel { .. } => NotSeriesParallelError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Rows = Vec<Vec<f64>>;

fn spd(rows: &Rows) -> PyResult<SpdMatrix> {
    SpdMatrix::from_rows(rows).map_err(to_py_err)
}

/// Hands a serializable value to Python through its JSON form.
fn to_python<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = cli::to_json(value);
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_json<T: for<'de> serde::Deserialize<'de>>(text: &str) -> PyResult<T> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(format!("line {}: {e}", e.line())))
}

/// Matrix-weighted leader-follower graph.
#[pyclass(name = "Graph", module = "sph2", frozen)]
struct PyGraph {
    inner: MatrixGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let file: GraphFile = parse_json(text)?;
        Ok(Self {
            inner: file.to_graph().map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        Self::from_json(&text)
    }

    fn to_json(&self) -> String {
        cli::to_json(&GraphFile::from_graph(&self.inner))
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    #[getter]
    fn nodes(&self) -> Vec<String> {
        self.inner.nodes().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<String> {
        self.inner.edges().iter().map(|e| e.id.clone()).collect()
    }

    #[getter]
    fn leaders(&self) -> Vec<String> {
        self.inner.leaders().iter().cloned().collect()
    }

    #[getter]
    fn sources(&self) -> Vec<String> {
        self.inner.sources().to_vec()
    }

    fn weight(&self, edge: &str) -> PyResult<Rows> {
        let e = self
            .inner
            .edge(edge)
            .ok_or_else(|| to_py_err(Error::UnknownEdge(edge.to_string())))?;
        Ok(e.weight.to_rows())
    }

    /// Copy with the given edge weights replaced.
    fn with_weights(&self, weights: BTreeMap<String, Rows>) -> PyResult<Self> {
        let weights = weights
            .iter()
            .map(|(id, w)| Ok((id.clone(), spd(w)?)))
            .collect::<PyResult<BTreeMap<_, _>>>()?;
        Ok(Self {
            inner: self.inner.with_weights(&weights).map_err(to_py_err)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(k={}, nodes={}, edges={}, leaders={})",
            self.inner.k(),
            self.inner.nodes().len(),
            self.inner.edges().len(),
            self.inner.leaders().len()
        )
    }
}

/// Decomposition tree with leaf weights taken from a graph.
#[pyclass(name = "Tree", module = "sph2", frozen)]
struct PyTree {
    inner: SpTree,
}

#[pymethods]
impl PyTree {
    /// Parses a tree file, resolving leaf edges against `graph`.
    #[staticmethod]
    fn from_json(text: &str, graph: &PyGraph) -> PyResult<Self> {
        let file: TreeFile = parse_json(text)?;
        Ok(Self {
            inner: file.to_tree(&graph.inner).map_err(to_py_err)?,
        })
    }

    fn to_json(&self) -> String {
        cli::to_json(&TreeFile::from_tree(&self.inner))
    }

    fn leaf_edges(&self) -> Vec<String> {
        self.inner.leaf_edges().into_iter().map(String::from).collect()
    }

    /// Leaf, join and height counts, plus the realized node count.
    fn stats(&self) -> BTreeMap<&'static str, usize> {
        let st = self.inner.stats();
        BTreeMap::from([
            ("leaves", st.leaves),
            ("series", st.series),
            ("parallel", st.parallel),
            ("height", st.height),
            ("nodes", st.nodes),
        ])
    }

    fn __repr__(&self) -> String {
        let st = self.inner.stats();
        format!("Tree(leaves={}, series={}, parallel={})", st.leaves, st.series, st.parallel)
    }
}

/// Parallel sum `A : B` of two SPD matrices.
#[pyfunction]
fn parallel_add(a: Rows, b: Rows) -> PyResult<Rows> {
    Ok(matlin::parallel_add(&spd(&a)?, &spd(&b)?).map_err(to_py_err)?.to_rows())
}

#[pyfunction]
fn pinv(a: Rows) -> PyResult<Rows> {
    Ok(matlin::pinv(&spd(&a)?).to_rows())
}

#[pyfunction]
#[pyo3(signature = (a, b, tol = 0.0))]
fn loewner_leq(a: Rows, b: Rows, tol: f64) -> PyResult<bool> {
    matlin::loewner_leq(&spd(&a)?, &spd(&b)?, tol).map_err(to_py_err)
}

/// Nearest point of `[lower, upper]`; returns `(matrix, converged)`.
#[pyfunction]
#[pyo3(signature = (x, lower, upper, tol = matlin::DEFAULT_PROJECTION_TOL, max_iter = matlin::DEFAULT_PROJECTION_MAX_ITER))]
fn project_box(x: Rows, lower: Rows, upper: Rows, tol: f64, max_iter: usize) -> PyResult<(Rows, bool)> {
    let x = spd(&x)?;
    let p = matlin::project_box(x.as_matrix(), &spd(&lower)?, &spd(&upper)?, tol, max_iter).map_err(to_py_err)?;
    Ok((p.matrix.to_rows(), p.converged))
}

/// Squared H2 norm with method `exact`, `bound` or `oracle`.
#[pyfunction]
#[pyo3(signature = (graph, method = "exact"))]
fn h2(py: Python<'_>, graph: &PyGraph, method: &str) -> PyResult<Py<PyAny>> {
    let method = match method {
        "exact" => H2Method::ExactCompositional,
        "bound" => H2Method::ScalarBound,
        "oracle" => H2Method::DenseOracle,
        other => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
    };
    let report = sph2::h2::h2(&graph.inner, method).map_err(to_py_err)?;
    to_python(py, &cli::H2Output::from(&report))
}

#[pyfunction]
#[pyo3(signature = (graph, source, sink = None))]
fn decompose(graph: &PyGraph, source: &str, sink: Option<&str>) -> PyResult<PyTree> {
    Ok(PyTree {
        inner: cli::decompose(&graph.inner, source, sink).map_err(to_py_err)?,
    })
}

/// Resistance, current and voltage of every tree node, in pre-order.
#[pyfunction]
fn resistance(py: Python<'_>, tree: &PyTree) -> PyResult<Py<PyAny>> {
    let ann = cli::annotate(&tree.inner).map_err(to_py_err)?;
    to_python(py, &ann.into_values().collect::<Vec<_>>())
}

/// Runs the optimizer with a JSON config; returns the trajectory records
/// and the graph with the final weights.
#[pyfunction]
fn optimize(py: Python<'_>, graph: &PyGraph, config: &str) -> PyResult<(Py<PyAny>, PyGraph)> {
    let file: ConfigFile = parse_json(config)?;
    let cfg = file.to_config(&graph.inner).map_err(to_py_err)?;
    let traj = py
        .detach(|| sph2::optimize::optimize(&graph.inner, &cfg))
        .map_err(to_py_err)?;
    let records: Vec<BTreeMap<&str, f64>> = traj
        .records
        .iter()
        .map(|r| {
            BTreeMap::from([
                ("iter", r.iter as f64),
                ("objective", r.objective),
                ("h2_squared", r.h2_squared),
                ("penalty", r.penalty),
                ("grad_norm", r.grad_norm),
            ])
        })
        .collect();
    let last = graph.inner.with_weights(&traj.last().weights).map_err(to_py_err)?;
    Ok((to_python(py, &records)?, PyGraph { inner: last }))
}

/// Compositional results against the dense oracle.
#[pyfunction]
fn check(py: Python<'_>, graph: &PyGraph) -> PyResult<Py<PyAny>> {
    let report = cli::check_report(&graph.inner).map_err(to_py_err)?;
    to_python(py, &report)
}

#[pymodule]
#[pyo3(name = "sph2")]
fn sph2_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyTree>()?;
    m.add("NotSeriesParallelError", m.py().get_type::<NotSeriesParallelError>())?;
    m.add_function(wrap_pyfunction!(parallel_add, m)?)?;
    m.add_function(wrap_pyfunction!(pinv, m)?)?;
    m.add_function(wrap_pyfunction!(loewner_leq, m)?)?;
    m.add_function(wrap_pyfunction!(project_box, m)?)?;
    m.add_function(wrap_pyfunction!(h2, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(resistance, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    Ok(())
}
