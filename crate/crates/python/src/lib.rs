//! Python bindings: graphs, embedding tables, training, propagation, evaluation and the
//! verification checks.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rep_core::checkpoint::{self, VocabDigests};
use rep_core::eval::{DirectionReport, RankingReport};
use rep_core::graph::load_triplets;
use rep_core::trainer::NoObserver;
use rep_core::verify::{self, Property, VerifyOptions};
use rep_core::{
    AdjacencyIndex, Error, KnowledgeGraph, KnownTripletSet, NormOrder, PropagationConfig, PropagationMode,
    Protocol, TiePolicy, Triplet, VocabMode,
};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

#[pyclass(name = "ModelSpec", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModelSpec {
    inner: rep_core::ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    #[new]
    #[pyo3(signature = (family, dim, margin = 1.0, norm = 2, groups = 1))]
    fn new(family: &str, dim: usize, margin: f64, norm: u8, groups: usize) -> PyResult<Self> {
        let norm = NormOrder::from_tag(norm).ok_or_else(|| PyValueError::new_err("norm must be 1 or 2"))?;
        let inner = rep_core::ModelSpec::new(parse(family)?, dim)
            .with_margin(margin)
            .with_norm(norm)
            .with_groups(groups);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn margin(&self) -> f64 {
        self.inner.margin
    }

    #[getter]
    fn relation_width(&self) -> usize {
        self.inner.relation_width()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!(
            "ModelSpec(family={:?}, dim={}, margin={}, norm={}, groups={})",
            s.family.name(),
            s.dim,
            s.margin,
            s.norm.tag(),
            s.ote_groups
        )
    }
}

#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: KnowledgeGraph,
}

#[pymethods]
impl PyGraph {
    /// Builds a graph from `(head, relation, tail)` id tuples.
    #[new]
    fn new(num_entities: usize, num_relations: usize, triplets: Vec<(u32, u32, u32)>) -> PyResult<Self> {
        let triplets = triplets.into_iter().map(|(h, r, t)| Triplet::new(h, r, t)).collect();
        Ok(Self {
            inner: KnowledgeGraph::from_ids(num_entities, num_relations, triplets).map_err(err)?,
        })
    }

    /// Loads a labelled TSV file, assigning ids by first appearance.
    #[staticmethod]
    fn load_tsv(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_triplets(path, VocabMode::Build).map_err(err)?,
        })
    }

    #[getter]
    fn num_entities(&self) -> usize {
        self.inner.num_entities
    }

    #[getter]
    fn num_relations(&self) -> usize {
        self.inner.num_relations
    }

    fn triplets(&self) -> Vec<(u32, u32, u32)> {
        self.inner.triplets.iter().map(|t| (t.head, t.relation, t.tail)).collect()
    }

    fn entity_labels(&self) -> Option<Vec<String>> {
        self.inner.entity_names.as_ref().map(|v| v.labels().to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Loads `train`, `valid` and `test` splits from a directory; returns three graphs.
#[pyfunction]
fn load_dataset(dir: &str) -> PyResult<(PyGraph, PyGraph, PyGraph)> {
    let d = rep_core::Dataset::load(dir).map_err(err)?;
    Ok((PyGraph { inner: d.train }, PyGraph { inner: d.valid }, PyGraph { inner: d.test }))
}

#[pyclass(name = "Embeddings")]
struct PyEmbeddings {
    inner: rep_core::EmbeddingStore<f32>,
}

#[pymethods]
impl PyEmbeddings {
    #[staticmethod]
    #[pyo3(signature = (spec, num_entities, num_relations, seed = 0))]
    fn random(spec: &PyModelSpec, num_entities: usize, num_relations: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: rep_core::EmbeddingStore::random(spec.inner, num_entities, num_relations, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: checkpoint::load::<f32>(path).map_err(err)?.0,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        checkpoint::save(path, &self.inner, &VocabDigests::default()).map_err(err)
    }

    #[getter]
    fn spec(&self) -> PyModelSpec {
        PyModelSpec { inner: self.inner.spec }
    }

    #[getter]
    fn num_entities(&self) -> usize {
        self.inner.num_entities
    }

    #[getter]
    fn num_relations(&self) -> usize {
        self.inner.num_relations
    }

    #[getter]
    fn iteration(&self) -> u64 {
        self.inner.iteration
    }

    fn entity(&self, i: usize) -> PyResult<Vec<f32>> {
        check_index(i, self.inner.num_entities, "entity")?;
        Ok(self.inner.entity(i).to_vec())
    }

    fn relation(&self, r: usize) -> PyResult<Vec<f32>> {
        check_index(r, self.inner.num_relations, "relation")?;
        Ok(self.inner.relation(r).to_vec())
    }

    fn set_entity(&mut self, i: usize, values: Vec<f32>) -> PyResult<()> {
        check_index(i, self.inner.num_entities, "entity")?;
        check_len(values.len(), self.inner.dim())?;
        self.inner.entity_mut(i).copy_from_slice(&values);
        Ok(())
    }

    fn set_relation(&mut self, r: usize, values: Vec<f32>) -> PyResult<()> {
        check_index(r, self.inner.num_relations, "relation")?;
        check_len(values.len(), self.inner.spec.relation_width())?;
        self.inner.relation_mut(r).copy_from_slice(&values);
        Ok(())
    }

    /// Row-major copy of the entity table.
    fn entities(&self) -> Vec<Vec<f32>> {
        self.inner.entities.chunks(self.inner.dim()).map(<[f32]>::to_vec).collect()
    }

    fn score(&self, head: usize, relation: usize, tail: usize) -> PyResult<f64> {
        check_index(head, self.inner.num_entities, "entity")?;
        check_index(tail, self.inner.num_entities, "entity")?;
        check_index(relation, self.inner.num_relations, "relation")?;
        rep_core::model::score(
            &self.inner.spec,
            self.inner.entity(head),
            self.inner.relation(relation),
            self.inner.entity(tail),
        )
        .map_err(err)
    }
}

fn check_index(i: usize, n: usize, what: &str) -> PyResult<()> {
    if i < n {
        Ok(())
    } else {
        Err(PyValueError::new_err(format!("{what} index {i} out of range ({n})")))
    }
}

fn check_len(got: usize, expected: usize) -> PyResult<()> {
    if got == expected {
        Ok(())
    } else {
        Err(err(Error::Dimension { expected, got }))
    }
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (graph, spec, learning_rate = 0.01, epochs = 100, batch_size = 128, negatives = 1, seed = 0))]
fn train(
    py: Python<'_>,
    graph: &PyGraph,
    spec: &PyModelSpec,
    learning_rate: f64,
    epochs: usize,
    batch_size: usize,
    negatives: usize,
    seed: u64,
) -> PyResult<PyEmbeddings> {
    let cfg = rep_core::TrainConfig {
        learning_rate,
        epochs,
        batch_size,
        negatives_per_positive: negatives,
        seed,
        ..rep_core::TrainConfig::default()
    };
    let spec = spec.inner;
    let (store, _) = py
        .detach(|| rep_core::train::<f32>(&graph.inner, spec, &cfg, None, &mut NoObserver))
        .map_err(err)?;
    Ok(PyEmbeddings { inner: store })
}

/// Runs `hops` propagation hops over `graph` and returns new embeddings.
#[pyfunction]
#[pyo3(signature = (embeddings, graph, alpha = 0.98, hops = 1, mode = "rep"))]
fn propagate(
    py: Python<'_>,
    embeddings: &PyEmbeddings,
    graph: &PyGraph,
    alpha: f64,
    hops: usize,
    mode: &str,
) -> PyResult<PyEmbeddings> {
    let cfg = PropagationConfig::new(alpha, hops).with_mode(parse::<PropagationMode>(mode)?);
    let store = &embeddings.inner;
    let out = py
        .detach(|| rep_core::propagate(store, &AdjacencyIndex::build(&graph.inner), &cfg))
        .map_err(err)?;
    Ok(PyEmbeddings { inner: out })
}

fn direction_dict<'py>(py: Python<'py>, d: &DirectionReport) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("mrr", d.mrr)?;
    out.set_item("hits1", d.hits1)?;
    out.set_item("hits3", d.hits3)?;
    out.set_item("hits10", d.hits10)?;
    out.set_item("num_queries", d.num_queries)?;
    Ok(out)
}

fn report_dict<'py>(py: Python<'py>, r: &RankingReport) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("mrr", r.mrr)?;
    out.set_item("hits1", r.hits1)?;
    out.set_item("hits3", r.hits3)?;
    out.set_item("hits10", r.hits10)?;
    out.set_item("num_queries", r.num_queries)?;
    match &r.head {
        Some(h) => out.set_item("head", direction_dict(py, h)?)?,
        None => out.set_item("head", py.None())?,
    }
    match &r.tail {
        Some(t) => out.set_item("tail", direction_dict(py, t)?)?,
        None => out.set_item("tail", py.None())?,
    }
    Ok(out)
}

/// Filtered link prediction on `test`, filtering every triplet of `known` (and `test`).
#[pyfunction]
#[pyo3(signature = (embeddings, test, known = Vec::new(), tie = "average"))]
fn evaluate<'py>(
    py: Python<'py>,
    embeddings: &PyEmbeddings,
    test: &PyGraph,
    known: Vec<PyRef<'py, PyGraph>>,
    tie: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let tie: TiePolicy = parse(tie)?;
    let mut graphs: Vec<&KnowledgeGraph> = known.iter().map(|g| &g.inner).collect();
    graphs.push(&test.inner);
    let filter = KnownTripletSet::from_graphs(&graphs);
    let store = &embeddings.inner;
    let report = py
        .detach(|| rep_core::evaluate(store, &test.inner.triplets, Protocol::Filtered(&filter), tie))
        .map_err(err)?;
    report_dict(py, &report)
}

#[pyfunction]
fn score(spec: &PyModelSpec, head: Vec<f64>, relation: Vec<f64>, tail: Vec<f64>) -> PyResult<f64> {
    rep_core::model::score(&spec.inner, &head, &relation, &tail).map_err(err)
}

#[pyfunction]
fn head_context(spec: &PyModelSpec, x: Vec<f64>, relation: Vec<f64>) -> PyResult<Vec<f64>> {
    rep_core::model::head_context(&spec.inner, &x, &relation).map_err(err)
}

#[pyfunction]
fn tail_context(spec: &PyModelSpec, x: Vec<f64>, relation: Vec<f64>) -> PyResult<Vec<f64>> {
    rep_core::model::tail_context(&spec.inner, &x, &relation).map_err(err)
}

/// Orthonormalizes the columns of a row-major `g × g` matrix.
#[pyfunction]
fn gram_schmidt(matrix: Vec<f64>, g: usize) -> PyResult<Vec<f64>> {
    if matrix.len() != g * g {
        return Err(err(Error::Dimension { expected: g * g, got: matrix.len() }));
    }
    rep_core::model::gram_schmidt(&matrix, g).map_err(err)
}

/// Max elementwise gap between one propagation step at `alpha = 1 - 2 beta` and one
/// gradient step, for TransE embeddings (computed in double precision).
#[pyfunction]
fn sgd_equivalence(graph: &PyGraph, embeddings: &PyEmbeddings, beta: f64) -> PyResult<f64> {
    let wide = embeddings.inner.convert::<f64>();
    rep_core::propagation::sgd_equivalence_oracle(&graph.inner, &wide, beta).map_err(err)
}

/// Runs property checks and returns one dict per property.
#[pyfunction]
#[pyo3(signature = (properties = None, seed = 42, beta = 0.01, inversion_samples = 10_000, gradient_samples = 1_000))]
fn run_verify<'py>(
    py: Python<'py>,
    properties: Option<Vec<String>>,
    seed: u64,
    beta: f64,
    inversion_samples: usize,
    gradient_samples: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let props: Vec<Property> = match properties {
        None => Property::ALL.to_vec(),
        Some(names) => names.iter().map(|n| parse(n)).collect::<PyResult<_>>()?,
    };
    let opts = VerifyOptions {
        seed,
        beta,
        inversion_samples,
        gradient_samples,
    };
    let results = py.detach(|| verify::run(&props, &opts));
    results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("property", &r.property)?;
            d.set_item("passed", r.passed)?;
            d.set_item("value", r.value)?;
            d.set_item("tolerance", r.tolerance)?;
            d.set_item("detail", &r.detail)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn rep_kge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyEmbeddings>()?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(head_context, m)?)?;
    m.add_function(wrap_pyfunction!(tail_context, m)?)?;
    m.add_function(wrap_pyfunction!(gram_schmidt, m)?)?;
    m.add_function(wrap_pyfunction!(sgd_equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(run_verify, m)?)?;
    Ok(())
}
