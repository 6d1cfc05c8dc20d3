//! Checkpoints and tabular exports.
//!
//! A checkpoint is `VGRAPHCK`, a little-endian `u32` format version, a `u64`
//! header length, a JSON header, then the matrices as little-endian `f64` in
//! row-major order: best `phi`, `varphi`, `psi`, and, if the header says so,
//! the final-iteration matrices in the same order.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hierarchy::CommunityTree;
use crate::metrics::LabelSet;
use crate::model::{Matrix, MembershipVector, ModelParams, Table};
use crate::training::{LossRecord, TrainConfig, TrainedModel};

const MAGIC: &[u8; 8] = b"VGRAPHCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    tree: Option<CommunityTree>,
    labels: Vec<String>,
    id_map_hash: String,
    nodes: usize,
    rows: usize,
    dim: usize,
    tau: f64,
    best_iteration: usize,
    iterations: usize,
    has_final: bool,
}

/// Everything needed to reuse a trained model against its graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub tree: Option<CommunityTree>,
    /// External node labels in index order.
    pub labels: Vec<String>,
    pub id_map_hash: String,
    /// Parameters at the lowest tracked loss.
    pub params: ModelParams,
    pub best_iteration: usize,
    pub iterations: usize,
    pub final_params: Option<ModelParams>,
}

impl Checkpoint {
    pub fn from_model(g: &Graph, config: &TrainConfig, tree: Option<&CommunityTree>, model: &TrainedModel) -> Self {
        Checkpoint {
            config: config.clone(),
            tree: tree.cloned(),
            labels: g.labels().to_vec(),
            id_map_hash: g.id_map_hash(),
            params: model.best_params.clone(),
            best_iteration: model.best_iteration,
            iterations: model.history.last().map_or(0, |r| r.iteration),
            final_params: Some(model.final_params.clone()),
        }
    }

    /// Fails unless the checkpoint was trained on a graph with `g`'s id map.
    pub fn check_graph(&self, g: &Graph) -> Result<()> {
        let hash = g.id_map_hash();
        if hash != self.id_map_hash {
            return Err(Error::Checkpoint(format!(
                "id map mismatch: checkpoint {} vs graph {}",
                self.id_map_hash, hash
            )));
        }
        Ok(())
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let p = &self.params;
        let header = Header {
            config: self.config.clone(),
            tree: self.tree.clone(),
            labels: self.labels.clone(),
            id_map_hash: self.id_map_hash.clone(),
            nodes: p.node_count(),
            rows: p.community_count(),
            dim: p.dim(),
            tau: p.tau,
            best_iteration: self.best_iteration,
            iterations: self.iterations,
            has_final: self.final_params.is_some(),
        };
        let json = serde_json::to_vec(&header)?;
        out.write_all(MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        write_params(&mut out, p)?;
        if let Some(f) = &self.final_params {
            if (f.node_count(), f.community_count(), f.dim()) != (p.node_count(), p.community_count(), p.dim()) {
                return Err(Error::Shape("final and best parameters differ in shape".into()));
            }
            write_params(&mut out, f)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated file".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a vgraph checkpoint".into()));
        }
        let mut word = [0u8; 4];
        input.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut len = [0u8; 8];
        input.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json).map_err(|_| Error::Checkpoint("truncated header".into()))?;
        let h: Header = serde_json::from_slice(&json)?;
        if h.labels.len() != h.nodes {
            return Err(Error::Checkpoint("label count does not match node count".into()));
        }
        let params = read_params(&mut input, &h)?;
        let final_params = if h.has_final {
            Some(read_params(&mut input, &h)?)
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if input.read(&mut rest)? != 0 {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Checkpoint {
            config: h.config,
            tree: h.tree,
            labels: h.labels,
            id_map_hash: h.id_map_hash,
            params,
            best_iteration: h.best_iteration,
            iterations: h.iterations,
            final_params,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write(std::io::BufWriter::new(file))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }
}

fn write_params<W: Write>(out: &mut W, p: &ModelParams) -> Result<()> {
    for t in [Table::Phi, Table::Varphi, Table::Psi] {
        for x in p.table(t).as_slice() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_matrix<R: Read>(input: &mut R, rows: usize, cols: usize) -> Result<Matrix> {
    let mut bytes = vec![0u8; rows * cols * 8];
    input
        .read_exact(&mut bytes)
        .map_err(|_| Error::Checkpoint("truncated matrix data".into()))?;
    let data = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn read_params<R: Read>(input: &mut R, h: &Header) -> Result<ModelParams> {
    let params = ModelParams {
        phi: read_matrix(input, h.nodes, h.dim)?,
        varphi: read_matrix(input, h.nodes, h.dim)?,
        psi: read_matrix(input, h.rows, h.dim)?,
        tau: h.tau,
    };
    params.validate()?;
    Ok(params)
}

fn write_row<W: Write>(out: &mut W, label: &str, values: &[f64]) -> Result<()> {
    write!(out, "{label}")?;
    for v in values {
        write!(out, "\t{v}")?;
    }
    writeln!(out)?;
    Ok(())
}

/// One row per node: label, then the node's row of `phi` or `varphi`. For
/// `psi`, one row per community labeled by its index. `labels` are the node
/// labels in index order.
pub fn write_embeddings<W: Write>(labels: &[String], params: &ModelParams, table: Table, mut out: W) -> Result<()> {
    let m = params.table(table);
    match table {
        Table::Psi => {
            for j in 0..m.rows() {
                write_row(&mut out, &j.to_string(), m.row(j))?;
            }
        }
        _ => {
            if m.rows() != labels.len() {
                return Err(Error::Shape("embedding rows do not match node labels".into()));
            }
            for (v, label) in labels.iter().enumerate() {
                write_row(&mut out, label, m.row(v))?;
            }
        }
    }
    Ok(())
}

/// `index<TAB>label` for every node, the dense numbering used in checkpoints.
pub fn write_id_map<W: Write>(labels: &[String], mut out: W) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        writeln!(out, "{i}\t{l}")?;
    }
    Ok(())
}

/// One row per non-isolated node: label, then its K membership probabilities.
pub fn write_memberships<W: Write>(g: &Graph, memberships: &[Option<MembershipVector>], mut out: W) -> Result<()> {
    for (v, m) in memberships.iter().enumerate() {
        if let Some(m) = m {
            write_row(&mut out, g.label(v), m.probs())?;
        }
    }
    Ok(())
}

pub fn write_loss_csv<W: Write>(history: &[LossRecord], mut out: W) -> Result<()> {
    writeln!(out, "iteration,recon,kl,reg,total,lr")?;
    for r in history {
        writeln!(out, "{},{},{},{},{},{}", r.iteration, r.recon, r.kl, r.reg, r.total, r.lr)?;
    }
    Ok(())
}

/// Reads `node class` lines. Classes get indices in sorted name order. Returns
/// the label set, the class names, and the number of lines naming nodes not
/// in `g`.
pub fn read_labels<R: BufRead>(reader: R, g: &Graph) -> Result<(LabelSet, Vec<String>, usize)> {
    let mut raw: Vec<(usize, String)> = Vec::new();
    let mut unknown = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut parts = t.split_whitespace();
        let (Some(node), Some(class), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected `node class`".into(),
            });
        };
        match g.index_of(node) {
            Some(v) => raw.push((v, class.to_string())),
            None => unknown += 1,
        }
    }
    let names: BTreeMap<String, usize> = raw
        .iter()
        .map(|(_, c)| c.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let mut labels = vec![None; g.node_count()];
    for (v, c) in raw {
        let idx = names[&c];
        if labels[v].is_some_and(|old| old != idx) {
            return Err(Error::Config(format!("node {} has more than one class", g.label(v))));
        }
        labels[v] = Some(idx);
    }
    let classes = names.into_keys().collect();
    Ok((LabelSet::new(labels), classes, unknown))
}
