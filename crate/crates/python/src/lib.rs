//! Python bindings: graphs, training, community extraction, metrics and
//! checkpoints. Communities cross the boundary as lists of node indices.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use vgraph_core::graph::generate_hierarchical_sbm;
use vgraph_core::hierarchy::{assign_hierarchical, hierarchical_memberships, train_hierarchical, CommunityTree};
use vgraph_core::io::Checkpoint;
use vgraph_core::metrics;
use vgraph_core::model::{all_memberships, assign, MembershipVector, Table};
use vgraph_core::training::{DecoderMode, LossRecord, TreeDecoder};
use vgraph_core::{AssignMode, CommunitySet, Error, ModelParams, TrainConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        e @ Error::NonFinite { .. } => PyArithmeticError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn sets_to_py(set: &CommunitySet) -> Vec<Vec<usize>> {
    set.members().to_vec()
}

fn sets_from_py(node_count: usize, members: Vec<Vec<usize>>) -> PyResult<CommunitySet> {
    CommunitySet::from_members(node_count, members).map_err(to_py)
}

fn probs(m: Vec<Option<MembershipVector>>) -> Vec<Option<Vec<f64>>> {
    m.into_iter().map(|v| v.map(|v| v.0)).collect()
}

pub fn parse_mode(mode: &str) -> PyResult<AssignMode> {
    mode.parse().map_err(to_py)
}

pub fn parse_decoder(s: &str) -> PyResult<DecoderMode> {
    match s {
        "auto" => Ok(DecoderMode::Auto),
        "full" | "full_softmax" => Ok(DecoderMode::FullSoftmax),
        "negative" | "negative_sampling" => Ok(DecoderMode::NegativeSampling),
        _ => Err(PyValueError::new_err(format!("unknown decoder {s:?}"))),
    }
}

pub fn parse_tree_decoder(s: &str) -> PyResult<TreeDecoder> {
    match s {
        "leaf" => Ok(TreeDecoder::Leaf),
        "path_sum" | "path-sum" => Ok(TreeDecoder::PathSum),
        _ => Err(PyValueError::new_err(format!("unknown tree decoder {s:?}"))),
    }
}

pub fn parse_table(s: &str) -> PyResult<Table> {
    match s {
        "phi" => Ok(Table::Phi),
        "varphi" => Ok(Table::Varphi),
        "psi" => Ok(Table::Psi),
        _ => Err(PyValueError::new_err(format!("unknown table {s:?} (phi, varphi, psi)"))),
    }
}

/// Undirected simple graph with string node labels.
#[pyclass(frozen)]
pub struct Graph {
    inner: vgraph_core::Graph,
}

#[pymethods]
impl Graph {
    /// Graph over `node_count` nodes labelled "0", "1", ... from index pairs.
    #[staticmethod]
    fn from_edges(node_count: usize, pairs: Vec<(usize, usize)>) -> PyResult<Self> {
        let (inner, _) = vgraph_core::Graph::from_edges(node_count, &pairs).map_err(to_py)?;
        Ok(Graph { inner })
    }

    /// Reads a whitespace-separated edge list.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = File::open(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        let (inner, _) = vgraph_core::load_edge_list(BufReader::new(file)).map_err(to_py)?;
        Ok(Graph { inner })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    #[getter]
    fn edge_count(&self) -> usize {
        self.inner.edge_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn labels(&self) -> Vec<String> {
        self.inner.labels().to_vec()
    }

    fn index_of(&self, label: &str) -> Option<usize> {
        self.inner.index_of(label)
    }

    fn neighbors(&self, node: usize) -> PyResult<Vec<usize>> {
        self.inner.check_node(node).map_err(to_py)?;
        Ok(self.inner.neighbors(node).to_vec())
    }

    /// Reads a community file against this graph's labels.
    fn load_communities(&self, path: PathBuf, circles: Option<bool>) -> PyResult<Vec<Vec<usize>>> {
        let file = File::open(&path).map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        let format = if circles.unwrap_or(false) {
            vgraph_core::graph::CommunityFormat::Circles
        } else {
            vgraph_core::graph::CommunityFormat::Snap
        };
        let (set, _) = vgraph_core::graph::load_communities(BufReader::new(file), &self.inner, format).map_err(to_py)?;
        Ok(sets_to_py(&set))
    }

    fn __repr__(&self) -> String {
        format!("Graph(nodes={}, edges={})", self.inner.node_count(), self.inner.edge_count())
    }
}

/// Planted partition graph and its blocks.
#[pyfunction]
#[pyo3(signature = (n, k, p_in, p_out, seed=0))]
fn generate_sbm(n: usize, k: usize, p_in: f64, p_out: f64, seed: u64) -> PyResult<(Graph, Vec<Vec<usize>>)> {
    let (inner, truth) = vgraph_core::generate_sbm(n, k, p_in, p_out, seed).map_err(to_py)?;
    Ok((Graph { inner }, sets_to_py(&truth)))
}

/// Nested block model; returns the graph and the blocks at every depth.
#[pyfunction]
#[pyo3(signature = (n, branching, probs, seed=0))]
fn generate_nested_sbm(n: usize, branching: Vec<usize>, probs: Vec<f64>, seed: u64) -> PyResult<(Graph, Vec<Vec<Vec<usize>>>)> {
    let (inner, levels) = generate_hierarchical_sbm(n, &branching, &probs, seed).map_err(to_py)?;
    Ok((Graph { inner }, levels.iter().map(sets_to_py).collect()))
}

/// A trained flat or tree model.
#[pyclass(frozen)]
pub struct Model {
    ck: Checkpoint,
    history: Vec<LossRecord>,
}

impl Model {
    fn params(&self, final_params: bool) -> PyResult<&ModelParams> {
        if !final_params {
            return Ok(&self.ck.params);
        }
        self.ck
            .final_params
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("model holds no final parameters"))
    }

    fn check(&self, graph: &Graph) -> PyResult<()> {
        self.ck.check_graph(&graph.inner).map_err(to_py)
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(to_py)?;
        Ok(Model { ck, history: Vec::new() })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.ck.save(&path).map_err(to_py)
    }

    #[getter]
    fn communities(&self) -> usize {
        self.ck.params.community_count()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.ck.params.dim()
    }

    #[getter]
    fn tree(&self) -> Option<Vec<usize>> {
        self.ck.tree.as_ref().map(|t| t.branching().to_vec())
    }

    #[getter]
    fn best_iteration(&self) -> usize {
        self.ck.best_iteration
    }

    /// Tracked losses as (iteration, recon, kl, reg, total, lr); empty for a
    /// model read from disk.
    fn history(&self) -> Vec<(usize, f64, f64, f64, f64, f64)> {
        self.history
            .iter()
            .map(|r| (r.iteration, r.recon, r.kl, r.reg, r.total, r.lr))
            .collect()
    }

    /// Communities as node-index lists. A tree model returns one list of
    /// communities per depth.
    #[pyo3(signature = (graph, mode="nonoverlapping", final_params=false))]
    fn assign(&self, py: Python<'_>, graph: &Graph, mode: &str, final_params: bool) -> PyResult<Py<PyAny>> {
        self.check(graph)?;
        let mode = parse_mode(mode)?;
        let params = self.params(final_params)?;
        match &self.ck.tree {
            Some(t) => {
                let levels = assign_hierarchical(params, t, &graph.inner, mode).map_err(to_py)?;
                Ok(levels.iter().map(sets_to_py).collect::<Vec<_>>().into_pyobject(py)?.into_any().unbind())
            }
            None => {
                let set = assign(params, &graph.inner, mode).map_err(to_py)?;
                Ok(sets_to_py(&set).into_pyobject(py)?.into_any().unbind())
            }
        }
    }

    /// Per-node membership distributions, `None` for isolated nodes. A tree
    /// model returns one list per depth.
    #[pyo3(signature = (graph, final_params=false))]
    fn memberships(&self, py: Python<'_>, graph: &Graph, final_params: bool) -> PyResult<Py<PyAny>> {
        self.check(graph)?;
        let params = self.params(final_params)?;
        match &self.ck.tree {
            Some(t) => {
                let levels = hierarchical_memberships(params, t, &graph.inner).map_err(to_py)?;
                let out: Vec<_> = levels.into_iter().map(probs).collect();
                Ok(out.into_pyobject(py)?.into_any().unbind())
            }
            None => Ok(probs(all_memberships(params, &graph.inner)).into_pyobject(py)?.into_any().unbind()),
        }
    }

    /// Rows of `phi`, `varphi` or `psi`.
    #[pyo3(signature = (table="phi", final_params=false))]
    fn embeddings(&self, table: &str, final_params: bool) -> PyResult<Vec<Vec<f64>>> {
        let m = self.params(final_params)?.table(parse_table(table)?);
        Ok((0..m.rows()).map(|r| m.row(r).to_vec()).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(nodes={}, communities={}, dim={}, tree={:?})",
            self.ck.params.node_count(),
            self.communities(),
            self.dim(),
            self.tree()
        )
    }
}

/// Fits a flat model with `communities` communities, or a tree model when
/// `tree` gives branching factors (then `communities` is ignored).
#[pyfunction]
#[pyo3(signature = (
    graph, communities=0, *, dim=None, lr=None, decay=None, decay_every=None, iters=None,
    batch_edges=None, lambda_=None, negatives=None, tau=None, tau_final=None, seed=None,
    eval_every=None, decoder=None, tree=None, tree_decoder=None
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    graph: &Graph,
    communities: usize,
    dim: Option<usize>,
    lr: Option<f64>,
    decay: Option<f64>,
    decay_every: Option<usize>,
    iters: Option<usize>,
    batch_edges: Option<usize>,
    lambda_: Option<f64>,
    negatives: Option<usize>,
    tau: Option<f64>,
    tau_final: Option<f64>,
    seed: Option<u64>,
    eval_every: Option<usize>,
    decoder: Option<&str>,
    tree: Option<Vec<usize>>,
    tree_decoder: Option<&str>,
) -> PyResult<Model> {
    let d = TrainConfig::default();
    let tree = tree.map(|b| CommunityTree::new(&b)).transpose().map_err(to_py)?;
    let config = TrainConfig {
        communities: tree.as_ref().map_or(communities, CommunityTree::node_count),
        dim: dim.unwrap_or(d.dim),
        lr0: lr.unwrap_or(d.lr0),
        decay: decay.unwrap_or(d.decay),
        decay_every: decay_every.unwrap_or(d.decay_every),
        iters: iters.unwrap_or(d.iters),
        batch_edges: batch_edges.unwrap_or(d.batch_edges),
        lambda: lambda_.unwrap_or(d.lambda),
        negatives: negatives.unwrap_or(d.negatives),
        tau: tau.unwrap_or(d.tau),
        tau_final: tau_final.or(d.tau_final),
        seed: seed.unwrap_or(d.seed),
        eval_every: eval_every.unwrap_or(d.eval_every),
        decoder: decoder.map(parse_decoder).transpose()?.unwrap_or(d.decoder),
        tree_decoder: tree_decoder.map(parse_tree_decoder).transpose()?.unwrap_or(d.tree_decoder),
        ..d
    };
    let g = &graph.inner;
    let model = py
        .detach(|| match &tree {
            Some(t) => train_hierarchical(g, &config, t),
            None => vgraph_core::train(g, &config),
        })
        .map_err(to_py)?;
    Ok(Model {
        ck: Checkpoint::from_model(g, &config, tree.as_ref(), &model),
        history: model.history,
    })
}

/// NMI between two partitions of `node_count` nodes.
#[pyfunction]
fn nmi(node_count: usize, a: Vec<Vec<usize>>, b: Vec<Vec<usize>>) -> PyResult<f64> {
    metrics::nmi(&sets_from_py(node_count, a)?, &sets_from_py(node_count, b)?).map_err(to_py)
}

#[pyfunction]
fn modularity(graph: &Graph, communities: Vec<Vec<usize>>) -> PyResult<f64> {
    let set = sets_from_py(graph.inner.node_count(), communities)?;
    metrics::modularity(&graph.inner, &set).map_err(to_py)
}

#[pyfunction]
fn overlapping_f1(node_count: usize, pred: Vec<Vec<usize>>, truth: Vec<Vec<usize>>) -> PyResult<f64> {
    metrics::overlapping_f1(&sets_from_py(node_count, pred)?, &sets_from_py(node_count, truth)?).map_err(to_py)
}

#[pyfunction]
fn overlapping_jaccard(node_count: usize, pred: Vec<Vec<usize>>, truth: Vec<Vec<usize>>) -> PyResult<f64> {
    metrics::overlapping_jaccard(&sets_from_py(node_count, pred)?, &sets_from_py(node_count, truth)?).map_err(to_py)
}

#[pymodule]
pub fn vgraph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Graph>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate_sbm, m)?)?;
    m.add_function(wrap_pyfunction!(generate_nested_sbm, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(nmi, m)?)?;
    m.add_function(wrap_pyfunction!(modularity, m)?)?;
    m.add_function(wrap_pyfunction!(overlapping_f1, m)?)?;
    m.add_function(wrap_pyfunction!(overlapping_jaccard, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
