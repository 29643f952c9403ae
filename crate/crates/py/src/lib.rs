//! Python bindings. Probabilities come back as `fractions.Fraction`;
//! reports come back as plain dicts with rationals as `"n/d"` strings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

use orientcorr::cluster::{cluster_distribution_from_table, joint_distribution_from_table, recursive_cluster_law};
use orientcorr::events::{correlation_report, EdgeUpwardFamily, ReachPredicate, UpwardClosedFamily};
use orientcorr::models::event_probability;
use orientcorr::verify::{self, SignMode};
use orientcorr::{Caps, ClusterTable, Graph, ModelSpec, Rational, VertexSet};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn fraction<'py>(py: Python<'py>, r: &Rational) -> PyResult<Bound<'py, PyAny>> {
    py.import("fractions")?.getattr("Fraction")?.call1((r.to_string(),))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn rational(text: &str) -> PyResult<Rational> {
    text.parse().map_err(err)
}

fn model(text: &str) -> PyResult<ModelSpec> {
    text.parse().map_err(err)
}

fn caps(max_states: Option<u64>) -> Caps {
    max_states.map_or_else(Caps::default, |max_states| Caps { max_states })
}

#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: Graph,
}

impl PyGraph {
    fn vertex(&self, name: &str) -> PyResult<usize> {
        self.inner.index_of(name).map_err(err)
    }

    fn set(&self, names: &[String]) -> PyResult<VertexSet> {
        self.inner.set_of(names).map_err(err)
    }

    fn event(&self, text: &str) -> PyResult<ReachPredicate> {
        ReachPredicate::parse(text, &self.inner).map_err(err)
    }

    fn family(&self, s: usize, text: &str) -> PyResult<UpwardClosedFamily> {
        self.event(text)?.to_out_family(s).map_err(err)
    }
}

#[pymethods]
impl PyGraph {
    /// Parses the edge-list format: one `u v` pair per line, optional
    /// `vertices:` header, `#` comments.
    #[new]
    fn new(edge_list: &str) -> PyResult<Self> {
        Ok(PyGraph { inner: Graph::parse_edge_list(edge_list).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn names(&self) -> Vec<String> {
        self.inner.names().to_vec()
    }

    #[getter]
    fn edges(&self) -> Vec<(String, String)> {
        self.inner
            .edges()
            .iter()
            .map(|&(i, j)| (self.inner.name(i).to_string(), self.inner.name(j).to_string()))
            .collect()
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    fn bunkbed_product(&self) -> PyResult<PyGraph> {
        Ok(PyGraph { inner: self.inner.bunkbed_product().map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

/// Exact out-cluster law of `u`: `{tuple(sorted names): Fraction}`.
#[pyfunction]
#[pyo3(signature = (graph, model_spec, u, max_states=None))]
fn cluster_law<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    model_spec: &str,
    u: &str,
    max_states: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = model(model_spec)?;
    let u = graph.vertex(u)?;
    let g = &graph.inner;
    let table = ClusterTable::build(g, &m, VertexSet::singleton(u), VertexSet::EMPTY, &caps(max_states)).map_err(err)?;
    let law = cluster_distribution_from_table(&table, g, &m, u).map_err(err)?;
    let out = PyDict::new(py);
    for (set, p) in &law.probs {
        out.set_item(pyo3::types::PyTuple::new(py, g.set_names(*set))?, fraction(py, p)?)?;
    }
    Ok(out)
}

/// Cluster law of `u` in edge percolation from the pivot recursion.
#[pyfunction]
fn recursive_law<'py>(py: Python<'py>, graph: &PyGraph, u: &str, p: &str) -> PyResult<Bound<'py, PyDict>> {
    let g = &graph.inner;
    let law = recursive_cluster_law(g, graph.vertex(u)?, &rational(p)?).map_err(err)?;
    let out = PyDict::new(py);
    for (set, p) in &law.probs {
        out.set_item(pyo3::types::PyTuple::new(py, g.set_names(*set))?, fraction(py, p)?)?;
    }
    Ok(out)
}

/// Joint law of (out-cluster of `u`, in-cluster of `w`).
#[pyfunction]
#[pyo3(signature = (graph, model_spec, u, w, max_states=None))]
fn joint_law<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    model_spec: &str,
    u: &str,
    w: &str,
    max_states: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let m = model(model_spec)?;
    let (u, w) = (graph.vertex(u)?, graph.vertex(w)?);
    let g = &graph.inner;
    let table = ClusterTable::build(g, &m, VertexSet::singleton(u), VertexSet::singleton(w), &caps(max_states))
        .map_err(err)?;
    let law = joint_distribution_from_table(&table, g, &m, u, w).map_err(err)?;
    let out = PyDict::new(py);
    for ((a, b), p) in &law.probs {
        let key = (
            pyo3::types::PyTuple::new(py, g.set_names(*a))?,
            pyo3::types::PyTuple::new(py, g.set_names(*b))?,
        );
        out.set_item(key, fraction(py, p)?)?;
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (graph, model_spec, event, max_states=None))]
fn probability<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    model_spec: &str,
    event: &str,
    max_states: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let p = event_probability(&graph.inner, &model(model_spec)?, &graph.event(event)?, &caps(max_states)).map_err(err)?;
    fraction(py, &p)
}

#[pyfunction]
#[pyo3(signature = (graph, model_spec, a, b, given="true", max_states=None))]
fn correlation<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    model_spec: &str,
    a: &str,
    b: &str,
    given: &str,
    max_states: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = correlation_report(
        &graph.inner,
        &model(model_spec)?,
        &graph.event(a)?,
        &graph.event(b)?,
        &graph.event(given)?,
        &caps(max_states),
    )
    .map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (graph, u, p="1/2"))]
fn verify_lemma1<'py>(py: Python<'py>, graph: &PyGraph, u: &str, p: &str) -> PyResult<Bound<'py, PyAny>> {
    let reps = verify::verify_lemma1(&graph.inner, graph.vertex(u)?, &rational(p)?, &Caps::default()).map_err(err)?;
    to_py(py, &reps)
}

#[pyfunction]
#[pyo3(signature = (graph, u, w, p="1/2"))]
fn verify_lemma2<'py>(py: Python<'py>, graph: &PyGraph, u: &str, w: &str, p: &str) -> PyResult<Bound<'py, PyAny>> {
    let reps = verify::verify_lemma2(&graph.inner, graph.vertex(u)?, graph.vertex(w)?, &rational(p)?, &Caps::default())
        .map_err(err)?;
    to_py(py, &reps)
}

#[pyfunction]
fn verify_corollaries<'py>(py: Python<'py>, graph: &PyGraph, s: &str, a: &str, b: &str, t: &str) -> PyResult<Bound<'py, PyAny>> {
    let [s, a, b, t] = [s, a, b, t].map(|x| graph.vertex(x));
    let reps = verify::verify_corollaries(&graph.inner, s?, a?, b?, t?, &Caps::default()).map_err(err)?;
    to_py(py, &reps)
}

#[pyfunction]
fn verify_oriented_harris<'py>(py: Python<'py>, graph: &PyGraph, s: &str, a: &str, b: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = graph.vertex(s)?;
    let (fa, fb) = (graph.family(s, a)?, graph.family(s, b)?);
    let rep = verify::verify_oriented_harris(&graph.inner, s, &fa, &fb, &Caps::default()).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
#[pyo3(signature = (graph, s, a, b, x=Vec::new(), y=Vec::new()))]
fn verify_oriented_vdbhk<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    s: &str,
    a: &str,
    b: &str,
    x: Vec<String>,
    y: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let s = graph.vertex(s)?;
    let (fa, fb) = (graph.family(s, a)?, graph.family(s, b)?);
    let rep = verify::verify_oriented_vdbhk(&graph.inner, s, &fa, &fb, graph.set(&x)?, graph.set(&y)?, &Caps::default())
        .map_err(err)?;
    to_py(py, &rep)
}

/// Classical Harris for two `edges:` events.
#[pyfunction]
fn verify_harris<'py>(py: Python<'py>, graph: &PyGraph, p: &str, a: &str, b: &str) -> PyResult<Bound<'py, PyAny>> {
    let fa = EdgeUpwardFamily::parse(a).map_err(err)?;
    let fb = EdgeUpwardFamily::parse(b).map_err(err)?;
    let rep = verify::verify_harris_classical(&graph.inner, &rational(p)?, &fa, &fb, &Caps::default()).map_err(err)?;
    to_py(py, &rep)
}

#[pyfunction]
fn verify_mixed<'py>(py: Python<'py>, graph: &PyGraph, u: &str, p_prime: &str, p: &str) -> PyResult<Bound<'py, PyAny>> {
    let reps = verify::verify_mixed_model(&graph.inner, graph.vertex(u)?, &rational(p_prime)?, &rational(p)?, &Caps::default())
        .map_err(err)?;
    to_py(py, &reps)
}

#[pyfunction]
#[pyo3(signature = (graph, u, v, p="1/2"))]
fn bunkbed<'py>(py: Python<'py>, graph: &PyGraph, u: &str, v: &str, p: &str) -> PyResult<Bound<'py, PyAny>> {
    let reps = verify::bunkbed_check(&graph.inner, graph.vertex(u)?, graph.vertex(v)?, &rational(p)?, &Caps::default())
        .map_err(err)?;
    to_py(py, &reps)
}

/// `mode` is `"a_to_s"` or `"a_in_in_cluster_t"`.
#[pyfunction]
#[pyo3(signature = (n, mode="a_to_s", conditioned=false))]
fn search_signs<'py>(py: Python<'py>, n: usize, mode: &str, conditioned: bool) -> PyResult<Bound<'py, PyAny>> {
    let mode: SignMode = mode.parse().map_err(err)?;
    let found = py
        .detach(|| verify::search_correlation_signs(n, mode, conditioned, &Caps::default()))
        .map_err(err)?;
    to_py(py, &found)
}

#[pyfunction]
#[pyo3(signature = (graph, model_spec, event, samples=100_000, seed=0))]
fn estimate<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    model_spec: &str,
    event: &str,
    samples: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let (m, pred) = (model(model_spec)?, graph.event(event)?);
    let est = py
        .detach(|| orientcorr::montecarlo::estimate_event(&graph.inner, &m, &pred, samples, seed))
        .map_err(err)?;
    to_py(py, &est)
}

#[pymodule]
fn pyorientcorr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(cluster_law, m)?)?;
    m.add_function(wrap_pyfunction!(recursive_law, m)?)?;
    m.add_function(wrap_pyfunction!(joint_law, m)?)?;
    m.add_function(wrap_pyfunction!(probability, m)?)?;
    m.add_function(wrap_pyfunction!(correlation, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma1, m)?)?;
    m.add_function(wrap_pyfunction!(verify_lemma2, m)?)?;
    m.add_function(wrap_pyfunction!(verify_corollaries, m)?)?;
    m.add_function(wrap_pyfunction!(verify_oriented_harris, m)?)?;
    m.add_function(wrap_pyfunction!(verify_oriented_vdbhk, m)?)?;
    m.add_function(wrap_pyfunction!(verify_harris, m)?)?;
    m.add_function(wrap_pyfunction!(verify_mixed, m)?)?;
    m.add_function(wrap_pyfunction!(bunkbed, m)?)?;
    m.add_function(wrap_pyfunction!(search_signs, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    Ok(())
}
