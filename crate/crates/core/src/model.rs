//! Model parameters and forward computations.
//!
//! Three embedding tables: `phi` (node side of the community prior and the
//! edge posterior), `varphi` (node side of the decoder) and `psi` (one row per
//! community). The prior over communities for node `w` is
//! `softmax_j(phi_w . psi_j)`, the decoder for community `j` is
//! `softmax_c(psi_j . varphi_c)` over all nodes, and the edge posterior is
//! `softmax_j((phi_w * phi_c) . psi_j)` with an elementwise product.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CommunitySet, Graph};
use crate::math::{self, clamped_ln, dot, log_sigmoid, softmax_into};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn fill_normal<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) {
        let normal = Normal::new(0.0, std).expect("positive std");
        for x in &mut self.data {
            *x = normal.sample(rng);
        }
    }
}

/// Which embedding table a caller is addressing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Phi,
    Varphi,
    Psi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub phi: Matrix,
    pub varphi: Matrix,
    pub psi: Matrix,
    pub tau: f64,
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(nodes: usize, communities: usize, dim: usize, tau: f64) -> Self {
        ModelParams {
            phi: Matrix::zeros(nodes, dim),
            varphi: Matrix::zeros(nodes, dim),
            psi: Matrix::zeros(communities, dim),
            tau,
        }
    }

    /// I.i.d. `N(0, 1/d)` entries, drawn in the order phi, varphi, psi.
    pub fn random<R: Rng + ?Sized>(
        nodes: usize,
        communities: usize,
        dim: usize,
        tau: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(nodes, communities, dim, tau);
        let std = 1.0 / (dim as f64).sqrt();
        p.phi.fill_normal(std, rng);
        p.varphi.fill_normal(std, rng);
        p.psi.fill_normal(std, rng);
        p
    }

    pub fn node_count(&self) -> usize {
        self.phi.rows()
    }

    pub fn community_count(&self) -> usize {
        self.psi.rows()
    }

    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn table(&self, t: Table) -> &Matrix {
        match t {
            Table::Phi => &self.phi,
            Table::Varphi => &self.varphi,
            Table::Psi => &self.psi,
        }
    }

    pub fn table_mut(&mut self, t: Table) -> &mut Matrix {
        match t {
            Table::Phi => &mut self.phi,
            Table::Varphi => &mut self.varphi,
            Table::Psi => &mut self.psi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.varphi.cols() != d || self.psi.cols() != d {
            return Err(Error::Shape("embedding dimensions differ".into()));
        }
        if self.varphi.rows() != self.phi.rows() {
            return Err(Error::Shape("phi and varphi row counts differ".into()));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.tau)));
        }
        let finite = [&self.phi, &self.varphi, &self.psi]
            .iter()
            .all(|m| m.as_slice().iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::Shape("non-finite parameter entry".into()));
        }
        Ok(())
    }

    fn check_node(&self, w: usize) -> Result<()> {
        if w < self.node_count() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                index: w,
                count: self.node_count(),
            })
        }
    }

    fn check_community(&self, j: usize) -> Result<()> {
        if j < self.community_count() {
            Ok(())
        } else {
            Err(Error::CommunityOutOfRange {
                index: j,
                count: self.community_count(),
            })
        }
    }

    /// Prior logits `phi_w . psi_j` for every community.
    pub fn prior_logits(&self, w: usize, out: &mut [f64]) {
        let pw = self.phi.row(w);
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(pw, self.psi.row(j));
        }
    }

    /// Posterior logits `(phi_w * phi_c) . psi_j`; `edge` receives the elementwise product.
    pub fn posterior_logits(&self, w: usize, c: usize, edge: &mut [f64], out: &mut [f64]) {
        for ((e, a), b) in edge.iter_mut().zip(self.phi.row(w)).zip(self.phi.row(c)) {
            *e = a * b;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(edge, self.psi.row(j));
        }
    }

    /// Community prior `p(z | w)`.
    pub fn prior_distribution(&self, w: usize) -> Result<MembershipVector> {
        self.check_node(w)?;
        let mut logits = vec![0.0; self.community_count()];
        self.prior_logits(w, &mut logits);
        Ok(MembershipVector(math::softmax(&logits)))
    }

    /// Decoder `p(c | z = j)` over all nodes, full softmax.
    pub fn decoder_distribution(&self, j: usize) -> Result<Vec<f64>> {
        self.check_community(j)?;
        let pj = self.psi.row(j);
        let logits: Vec<f64> = (0..self.node_count())
            .map(|c| dot(pj, self.varphi.row(c)))
            .collect();
        Ok(math::softmax(&logits))
    }

    /// Negative-sampling surrogate for `log p(c | z = j)`:
    /// `log s(varphi_c . psi_j) + sum_v log s(-varphi_v . psi_j)`.
    pub fn negative_sampling_objective(&self, c: usize, j: usize, negatives: &[usize]) -> Result<f64> {
        self.check_node(c)?;
        self.check_community(j)?;
        let pj = self.psi.row(j);
        let mut total = log_sigmoid(dot(self.varphi.row(c), pj));
        for &v in negatives {
            self.check_node(v)?;
            total += log_sigmoid(-dot(self.varphi.row(v), pj));
        }
        Ok(total)
    }

    /// Edge posterior `q(z | w, c)`; symmetric in `w` and `c`.
    pub fn posterior_distribution(&self, w: usize, c: usize) -> Result<MembershipVector> {
        self.check_node(w)?;
        self.check_node(c)?;
        let k = self.community_count();
        let mut edge = vec![0.0; self.dim()];
        let mut logits = vec![0.0; k];
        self.posterior_logits(w, c, &mut edge, &mut logits);
        Ok(MembershipVector(math::softmax(&logits)))
    }

    /// Neighbor-averaged membership of `w`.
    pub fn node_membership(&self, g: &Graph, w: usize) -> Result<MembershipVector> {
        g.check_node(w)?;
        let nbrs = g.neighbors(w);
        if nbrs.is_empty() {
            return Err(Error::IsolatedNode(w));
        }
        let mut acc = vec![0.0; self.community_count()];
        for &c in nbrs {
            let q = self.posterior_distribution(w, c)?;
            for (a, x) in acc.iter_mut().zip(q.probs()) {
                *a += x;
            }
        }
        let n = nbrs.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(MembershipVector(acc))
    }
}

/// Categorical distribution over communities.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipVector(pub Vec<f64>);

impl MembershipVector {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable community, lowest index on ties.
    pub fn argmax(&self) -> usize {
        math::argmax(&self.0)
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.0.iter().all(|&p| p >= 0.0 && p.is_finite())
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

/// Output of one Gumbel-Softmax draw.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    pub relaxed: Vec<f64>,
    pub hard: Vec<f64>,
    pub index: usize,
}

/// One standard Gumbel draw per entry of `out`.
pub fn fill_gumbel<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for g in out.iter_mut() {
        // u in (0, 1)
        let u: f64 = loop {
            let u = rng.random::<f64>();
            if u > 0.0 {
                break u;
            }
        };
        *g = -(-u.ln()).ln();
    }
}

/// Relaxed sample `softmax((log dist + noise) / tau)` and its one-hot argmax.
/// `dist` entries are floored at 1e-10 before the logarithm.
pub fn gumbel_softmax(dist: &MembershipVector, tau: f64, noise: &[f64]) -> GumbelSample {
    let scores: Vec<f64> = dist
        .probs()
        .iter()
        .zip(noise)
        .map(|(&p, &g)| (clamped_ln(p) + g) / tau)
        .collect();
    let mut relaxed = vec![0.0; scores.len()];
    softmax_into(&scores, &mut relaxed);
    let index = math::argmax(&relaxed);
    let mut hard = vec![0.0; scores.len()];
    hard[index] = 1.0;
    GumbelSample {
        relaxed,
        hard,
        index,
    }
}

/// How node communities are read off a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignMode {
    /// Argmax of the neighbor-averaged membership.
    Nonoverlapping,
    /// Union of the argmax communities of a node's incident edges.
    Overlapping,
}

impl std::str::FromStr for AssignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonoverlapping" | "non-overlapping" => Ok(AssignMode::Nonoverlapping),
            "overlapping" => Ok(AssignMode::Overlapping),
            other => Err(Error::Config(format!("unknown assignment mode {other:?}"))),
        }
    }
}

/// Applies either extraction rule given any edge posterior over `k` classes.
/// Isolated nodes stay unassigned.
pub fn assign_from_edge_posteriors<F>(g: &Graph, k: usize, mode: AssignMode, mut posterior: F) -> Result<CommunitySet>
where
    F: FnMut(usize, usize) -> Vec<f64>,
{
    match mode {
        AssignMode::Nonoverlapping => {
            let mut assignment = vec![None; g.node_count()];
            for (w, slot) in assignment.iter_mut().enumerate() {
                let nbrs = g.neighbors(w);
                if nbrs.is_empty() {
                    continue;
                }
                let mut acc = vec![0.0; k];
                for &c in nbrs {
                    for (a, x) in acc.iter_mut().zip(posterior(w, c)) {
                        *a += x;
                    }
                }
                *slot = Some(math::argmax(&acc));
            }
            CommunitySet::from_assignment(k, &assignment)
        }
        AssignMode::Overlapping => {
            let mut members = vec![Vec::new(); k];
            for &(w, c) in g.edges() {
                let z = math::argmax(&posterior(w, c));
                members[z].push(w);
                members[z].push(c);
            }
            CommunitySet::from_members(g.node_count(), members)
        }
    }
}

/// Each non-isolated node goes to the argmax of its neighbor-averaged membership.
pub fn assign_nonoverlapping(params: &ModelParams, g: &Graph) -> Result<CommunitySet> {
    assign(params, g, AssignMode::Nonoverlapping)
}

/// Each edge goes to its argmax posterior community; a node belongs to every
/// community one of its edges was assigned to.
pub fn assign_overlapping(params: &ModelParams, g: &Graph) -> Result<CommunitySet> {
    assign(params, g, AssignMode::Overlapping)
}

pub fn assign(params: &ModelParams, g: &Graph, mode: AssignMode) -> Result<CommunitySet> {
    if params.node_count() != g.node_count() {
        return Err(Error::Shape(format!(
            "model has {} nodes, graph has {}",
            params.node_count(),
            g.node_count()
        )));
    }
    let k = params.community_count();
    let mut edge = vec![0.0; params.dim()];
    let mut logits = vec![0.0; k];
    assign_from_edge_posteriors(g, k, mode, |w, c| {
        params.posterior_logits(w, c, &mut edge, &mut logits);
        math::softmax(&logits)
    })
}

/// Per-node membership vectors; isolated nodes get `None`.
pub fn all_memberships(params: &ModelParams, g: &Graph) -> Vec<Option<MembershipVector>> {
    (0..g.node_count())
        .map(|w| params.node_membership(g, w).ok())
        .collect()
}
