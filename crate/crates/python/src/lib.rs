//! Python bindings for `mghga`. Matrices cross the boundary as lists of
//! rows.

use std::path::PathBuf;

use mghga::attack::{run_attack, AttackConfig, AttackKind, AttackResult, FeatureMode, SignConvention, Surrogate};
use mghga::data_io::{self, SplitSpec};
use mghga::experiment::{run_experiment, ExperimentConfig};
use mghga::hgnn::{self, LabelData, ModelParams, Subset, TrainConfig};
use mghga::hypergraph::{self, FeatureMatrix, NormalizedOperator};
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: mghga::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

fn features(rows: Vec<Vec<f64>>) -> PyResult<FeatureMatrix> {
    FeatureMatrix::new(matrix(rows)?).map_err(to_py)
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn label_data(labels: Vec<usize>, n_classes: usize, train_mask: Vec<bool>, test_mask: Vec<bool>) -> PyResult<LabelData> {
    LabelData::new(labels, n_classes, train_mask, test_mask).map_err(to_py)
}

fn parse_mode(mode: &str) -> PyResult<FeatureMode> {
    mode.parse().map_err(to_py)
}

/// A hypergraph with its normalized propagation operator.
#[pyclass(name = "Hypergraph", module = "mghga_py", skip_from_py_object)]
#[derive(Clone)]
struct PyHypergraph {
    graph: hypergraph::Hypergraph,
    operator: NormalizedOperator,
}

impl PyHypergraph {
    fn wrap(graph: hypergraph::Hypergraph) -> PyResult<Self> {
        let operator = hypergraph::normalized_operator(&graph).map_err(to_py)?;
        Ok(Self { graph, operator })
    }
}

#[pymethods]
impl PyHypergraph {
    #[staticmethod]
    fn knn(features_rows: Vec<Vec<f64>>, k: usize) -> PyResult<Self> {
        Self::wrap(hypergraph::build_knn_hypergraph(&features(features_rows)?, k).map_err(to_py)?)
    }

    #[staticmethod]
    fn epsilon(features_rows: Vec<Vec<f64>>, eps: f64) -> PyResult<Self> {
        Self::wrap(hypergraph::build_epsilon_hypergraph(&features(features_rows)?, eps).map_err(to_py)?)
    }

    #[staticmethod]
    #[pyo3(signature = (n_nodes, edges, weights=None))]
    fn from_edges(n_nodes: usize, edges: Vec<Vec<usize>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        Self::wrap(hypergraph::Hypergraph::from_edges(n_nodes, edges, weights).map_err(to_py)?)
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.graph.n_nodes()
    }

    #[getter]
    fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    fn edges(&self) -> Vec<Vec<usize>> {
        self.graph.edges().to_vec()
    }

    fn node_degrees(&self) -> Vec<f64> {
        self.graph.node_degrees().to_vec()
    }

    fn incidence(&self) -> Vec<Vec<f64>> {
        rows(&self.graph.incidence())
    }

    /// Dense normalized operator.
    fn operator(&self) -> Vec<Vec<f64>> {
        rows(self.operator.dense())
    }

    fn __repr__(&self) -> String {
        format!("Hypergraph(n_nodes={}, n_edges={})", self.graph.n_nodes(), self.graph.n_edges())
    }
}

/// Trained two-layer HGNN weights.
#[pyclass(name = "Model", module = "mghga_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    params: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(theta1: Vec<Vec<f64>>, theta2: Vec<Vec<f64>>) -> PyResult<Self> {
        let params = ModelParams::new(matrix(theta1)?, matrix(theta2)?).map_err(to_py)?;
        Ok(Self { params })
    }

    #[staticmethod]
    #[pyo3(signature = (graph, features_rows, labels, n_classes, train_mask, test_mask, epochs=300, lr=0.001, hidden=64, dropout=0.5, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        graph: &PyHypergraph,
        features_rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
        epochs: usize,
        lr: f64,
        hidden: usize,
        dropout: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig { epochs, learning_rate: lr, hidden_dim: hidden, dropout_rate: dropout, seed };
        cfg.validate().map_err(to_py)?;
        let x = features(features_rows)?;
        let labels = label_data(labels, n_classes, train_mask, test_mask)?;
        let params = hgnn::train(&graph.operator, &x, &labels, &cfg).map_err(to_py)?;
        Ok(Self { params })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (_, params) = data_io::load_checkpoint(&path).map_err(to_py)?;
        Ok(Self { params })
    }

    fn save(&self, path: PathBuf, dataset: &str, construction: &str) -> PyResult<()> {
        let meta = data_io::CheckpointMetadata {
            dataset: dataset.into(),
            construction: construction.into(),
            config: serde_json::Value::Null,
        };
        data_io::save_checkpoint(&path, &meta, &self.params).map_err(to_py)
    }

    #[getter]
    fn theta1(&self) -> Vec<Vec<f64>> {
        rows(&self.params.theta1)
    }

    #[getter]
    fn theta2(&self) -> Vec<Vec<f64>> {
        rows(&self.params.theta2)
    }

    /// Class probabilities, dropout off.
    fn forward(&self, graph: &PyHypergraph, features_rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let probs = hgnn::forward(&graph.operator, &features(features_rows)?, &self.params, None).map_err(to_py)?;
        Ok(rows(&probs))
    }

    fn predict(&self, graph: &PyHypergraph, features_rows: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        let probs = hgnn::forward(&graph.operator, &features(features_rows)?, &self.params, None).map_err(to_py)?;
        Ok(hgnn::predict(&probs))
    }

    fn accuracy(
        &self,
        graph: &PyHypergraph,
        features_rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> PyResult<f64> {
        let labels = label_data(labels, n_classes, train_mask, test_mask)?;
        hgnn::evaluate(&graph.operator, &features(features_rows)?, &self.params, &labels, Subset::Test).map_err(to_py)
    }

    /// Gradient of the training loss with respect to every feature cell.
    fn grad_features(
        &self,
        graph: &PyHypergraph,
        features_rows: Vec<Vec<f64>>,
        labels: Vec<usize>,
        n_classes: usize,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let labels = label_data(labels, n_classes, train_mask, test_mask)?;
        let g = hgnn::grad_features(&graph.operator, &features(features_rows)?, &self.params, &labels).map_err(to_py)?;
        Ok(rows(&g))
    }
}

/// A dataset directory or manifest loaded from disk.
#[pyclass(name = "Dataset", module = "mghga_py")]
struct PyDataset {
    inner: data_io::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: data_io::load_dataset(&path).map_err(to_py)? })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n_nodes(&self) -> usize {
        self.inner.n_nodes()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.features.n_features()
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    #[getter]
    fn feature_mode(&self) -> String {
        self.inner.feature_mode.to_string()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.features.values())
    }

    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    /// `(train_mask, test_mask)` for the given seed.
    #[pyo3(signature = (seed, train_fraction=0.2, test_fraction=0.8))]
    fn split(&self, seed: u64, train_fraction: f64, test_fraction: f64) -> PyResult<(Vec<bool>, Vec<bool>)> {
        data_io::split_masks(self.inner.n_nodes(), &SplitSpec { train_fraction, test_fraction, seed }).map_err(to_py)
    }
}

#[pyfunction]
fn pairwise_distances(features_rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&hypergraph::pairwise_distances(&features(features_rows)?)))
}

fn result_dict<'py>(py: Python<'py>, result: &AttackResult, clean: &FeatureMatrix) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("perturbed", rows(result.perturbed.values()))?;
    let cells: Vec<(usize, usize, f64, f64)> =
        result.modified_cells.iter().map(|c| (c.node, c.feature, c.old, c.new)).collect();
    out.set_item("modified_cells", cells)?;
    out.set_item("budget", result.budget)?;
    out.set_item("modifications_used", result.modifications_used)?;
    out.set_item("changed_cells", result.changed_cells(clean))?;
    out.set_item("exhausted", result.exhausted)?;
    Ok(out)
}

/// Runs one attack. Gradient attacks and NDA need `graph` and `model`.
#[pyfunction]
#[pyo3(signature = (
    kind, features_rows, labels, n_classes, train_mask, test_mask,
    graph=None, model=None, budget_factor=0.05, momentum_decay=0.8, eta=None,
    mode="discrete", top_fraction=None, symmetric_sign=false, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn attack<'py>(
    py: Python<'py>,
    kind: &str,
    features_rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
    graph: Option<&PyHypergraph>,
    model: Option<&PyModel>,
    budget_factor: f64,
    momentum_decay: f64,
    eta: Option<f64>,
    mode: &str,
    top_fraction: Option<f64>,
    symmetric_sign: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let kind: AttackKind = kind.parse().map_err(to_py)?;
    let x = features(features_rows)?;
    let labels = label_data(labels, n_classes, train_mask, test_mask)?;
    let cfg = AttackConfig {
        budget_factor,
        momentum_decay,
        eta,
        feature_mode: parse_mode(mode)?,
        degree_top_fraction: top_fraction,
        sign_convention: if symmetric_sign { SignConvention::Symmetric } else { SignConvention::Binary },
        seed,
    };
    let surrogate = match (graph, model) {
        (Some(g), Some(m)) => Some(Surrogate {
            hypergraph: g.graph.clone(),
            operator: g.operator.clone(),
            params: m.params.clone(),
        }),
        (Some(g), None) if kind == AttackKind::Nda => Some(Surrogate {
            hypergraph: g.graph.clone(),
            operator: g.operator.clone(),
            params: ModelParams::new(Array2::zeros((x.n_features(), 1)), Array2::zeros((1, n_classes))).map_err(to_py)?,
        }),
        _ => None,
    };
    let result = run_attack(kind, &x, &labels, surrogate.as_ref(), &cfg).map_err(to_py)?;
    result_dict(py, &result, &x)
}

/// Runs a full experiment from a JSON config and returns the JSONL report.
#[pyfunction(name = "run_experiment")]
fn run_experiment_json(config_json: &str) -> PyResult<String> {
    let cfg: ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let report = run_experiment(&cfg).map_err(to_py)?;
    Ok(report.to_jsonl(&serde_json::Map::new()))
}

#[pymodule]
fn mghga_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyHypergraph>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(pairwise_distances, m)?)?;
    m.add_function(wrap_pyfunction!(attack, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment_json, m)?)?;
    Ok(())
}
