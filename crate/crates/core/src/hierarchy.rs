//! Tree-structured communities.
//!
//! A community is a root-to-leaf path in a fixed-depth tree. Every tree node
//! owns one row of `psi`. The prior over paths factorizes level by level,
//! each level a softmax over the children of the node chosen above it with
//! logits `phi_w . psi_child`; the edge posterior factorizes the same way with
//! logits `(phi_w * phi_c) . psi_child`. The decoder reads either the leaf's
//! embedding or the sum of embeddings along the path. A depth-1 tree is
//! exactly the flat model under both.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CommunitySet, Graph};
use crate::math::{self, axpy, dot, PROB_FLOOR};
use crate::model::{assign_from_edge_posteriors, AssignMode, MembershipVector, ModelParams};
use crate::training::{
    DecoderWork, Forward, Gradients, LossComponents, LossOptions, NoiseSource, Objective, Pair,
    SmoothnessTarget, TrainContext, TreeDecoder,
};

/// Sibling set under one internal node (or the root).
#[derive(Debug, Clone, PartialEq, Eq)]
struct Group {
    /// Tree node owning this group; `None` for the root.
    owner: Option<usize>,
    children: Range<usize>,
}

/// Uniform-depth community tree. Nodes are numbered breadth-first, so the
/// leaves are the last contiguous block of node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct CommunityTree {
    branching: Vec<usize>,
    groups: Vec<Group>,
    /// Group each node belongs to as a child.
    group_of: Vec<usize>,
    /// Group of each node's own children (internal nodes only).
    child_group: Vec<Option<usize>>,
    level: Vec<usize>,
    first_leaf: usize,
}

impl TryFrom<Vec<usize>> for CommunityTree {
    type Error = Error;

    fn try_from(branching: Vec<usize>) -> Result<Self> {
        CommunityTree::new(&branching)
    }
}

impl From<CommunityTree> for Vec<usize> {
    fn from(t: CommunityTree) -> Self {
        t.branching
    }
}

impl CommunityTree {
    /// `branching[l]` children under every node of depth `l` (the root has depth 0).
    pub fn new(branching: &[usize]) -> Result<Self> {
        if branching.is_empty() || branching.contains(&0) {
            return Err(Error::Config(format!("invalid tree branching {branching:?}")));
        }
        let mut groups = vec![Group {
            owner: None,
            children: 0..branching[0],
        }];
        let mut group_of = vec![0; branching[0]];
        let mut level = vec![1; branching[0]];
        let mut child_group = Vec::new();
        let mut frontier: Range<usize> = 0..branching[0];
        for (depth, &b) in branching.iter().enumerate().skip(1) {
            let mut next_start = frontier.end;
            for owner in frontier.clone() {
                let gi = groups.len();
                groups.push(Group {
                    owner: Some(owner),
                    children: next_start..next_start + b,
                });
                child_group.push(Some(gi));
                group_of.extend(std::iter::repeat_n(gi, b));
                level.extend(std::iter::repeat_n(depth + 1, b));
                next_start += b;
            }
            frontier = frontier.end..next_start;
        }
        child_group.resize(group_of.len(), None);
        Ok(CommunityTree {
            branching: branching.to_vec(),
            groups,
            group_of,
            child_group,
            level,
            first_leaf: frontier.start,
        })
    }

    /// Parses a comma-separated branching list such as `"5,4"`.
    pub fn parse(spec: &str) -> Result<Self> {
        let branching = spec
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad tree spec {spec:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&branching)
    }

    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    pub fn depth(&self) -> usize {
        self.branching.len()
    }

    /// Total tree nodes excluding the root; the number of `psi` rows.
    pub fn node_count(&self) -> usize {
        self.group_of.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.node_count() - self.first_leaf
    }

    /// Tree node id of leaf `l`.
    pub fn leaf_node(&self, l: usize) -> usize {
        self.first_leaf + l
    }

    /// Nodes at depth `level` (1-based) in id order.
    pub fn level_nodes(&self, level: usize) -> Range<usize> {
        let start = self.level.iter().position(|&l| l == level).unwrap_or(0);
        let count: usize = self.branching[..level].iter().product();
        start..start + count
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.groups[self.group_of[node]].owner
    }

    /// Ancestor of leaf `l` at depth `level`, as an index within that level.
    pub fn ancestor(&self, l: usize, level: usize) -> usize {
        let mut node = self.leaf_node(l);
        while self.level[node] > level {
            node = self.parent(node).expect("below root");
        }
        node - self.level_nodes(level).start
    }

    /// Leaf indices under tree node `node`.
    #[cfg_attr(not(test), allow(dead_code))]
    fn leaves_under(&self, node: usize) -> Range<usize> {
        let below: usize = self.branching[self.level[node]..].iter().product();
        let within = node - self.level_nodes(self.level[node]).start;
        within * below..(within + 1) * below
    }
}

/// Leaf probabilities from per-node logits: per-group softmax, product down
/// each path.
fn path_probabilities(tree: &CommunityTree, logits: &[f64]) -> Vec<f64> {
    let mut node_prob = vec![0.0; tree.node_count()];
    for g in &tree.groups {
        let cond = math::softmax(&logits[g.children.clone()]);
        let above = g.owner.map_or(1.0, |o| node_prob[o]);
        for (n, p) in g.children.clone().zip(cond) {
            node_prob[n] = above * p;
        }
    }
    node_prob[tree.first_leaf..].to_vec()
}

/// Prior over leaf paths for node `w`.
pub fn path_prior(params: &ModelParams, tree: &CommunityTree, w: usize) -> Result<Vec<f64>> {
    check_shapes(params, tree)?;
    let mut logits = vec![0.0; tree.node_count()];
    params.prior_logits(w, &mut logits);
    Ok(path_probabilities(tree, &logits))
}

/// Edge posterior over leaf paths.
pub fn path_posterior(params: &ModelParams, tree: &CommunityTree, w: usize, c: usize) -> Result<Vec<f64>> {
    check_shapes(params, tree)?;
    let mut edge = vec![0.0; params.dim()];
    let mut logits = vec![0.0; tree.node_count()];
    params.posterior_logits(w, c, &mut edge, &mut logits);
    Ok(path_probabilities(tree, &logits))
}

/// `p(c | w) = sum over leaves of p(c | leaf) p(leaf | w)` with a full softmax decoder.
pub fn hierarchical_edge_likelihood(params: &ModelParams, tree: &CommunityTree, w: usize, c: usize) -> Result<f64> {
    let prior = path_prior(params, tree, w)?;
    let mut total = 0.0;
    for (l, p) in prior.iter().enumerate() {
        total += p * params.decoder_distribution(tree.leaf_node(l))?[c];
    }
    Ok(total)
}

fn check_shapes(params: &ModelParams, tree: &CommunityTree) -> Result<()> {
    if params.community_count() != tree.node_count() {
        return Err(Error::Shape(format!(
            "tree has {} nodes but psi has {} rows",
            tree.node_count(),
            params.community_count()
        )));
    }
    Ok(())
}

/// Community sets at every depth, `result[l - 1]` for depth `l`. Leaves are
/// assigned by the flat rule on leaf posteriors; coarser levels by mapping
/// each leaf to its ancestor.
pub fn assign_hierarchical(params: &ModelParams, tree: &CommunityTree, g: &Graph, mode: AssignMode) -> Result<Vec<CommunitySet>> {
    check_shapes(params, tree)?;
    let mut edge = vec![0.0; params.dim()];
    let mut logits = vec![0.0; tree.node_count()];
    let leaves = assign_from_edge_posteriors(g, tree.leaf_count(), mode, |w, c| {
        params.posterior_logits(w, c, &mut edge, &mut logits);
        path_probabilities(tree, &logits)
    })?;
    lift_to_levels(tree, &leaves)
}

/// Neighbor-averaged path posteriors summed up to every depth:
/// `result[l - 1][w]` is node `w`'s distribution over depth-`l` tree nodes,
/// `None` for isolated nodes.
pub fn hierarchical_memberships(
    params: &ModelParams,
    tree: &CommunityTree,
    g: &Graph,
) -> Result<Vec<Vec<Option<MembershipVector>>>> {
    check_shapes(params, tree)?;
    let mut edge = vec![0.0; params.dim()];
    let mut logits = vec![0.0; tree.node_count()];
    let mut out: Vec<Vec<Option<MembershipVector>>> = vec![Vec::with_capacity(g.node_count()); tree.depth()];
    for w in 0..g.node_count() {
        let nbrs = g.neighbors(w);
        if nbrs.is_empty() {
            out.iter_mut().for_each(|level| level.push(None));
            continue;
        }
        let mut leaves = vec![0.0; tree.leaf_count()];
        for &c in nbrs {
            params.posterior_logits(w, c, &mut edge, &mut logits);
            for (a, x) in leaves.iter_mut().zip(path_probabilities(tree, &logits)) {
                *a += x;
            }
        }
        let n = nbrs.len() as f64;
        for (depth, level) in out.iter_mut().enumerate() {
            let mut probs = vec![0.0; tree.level_nodes(depth + 1).len()];
            for (l, x) in leaves.iter().enumerate() {
                probs[tree.ancestor(l, depth + 1)] += x / n;
            }
            level.push(Some(MembershipVector(probs)));
        }
    }
    Ok(out)
}

/// Maps a leaf-level community set onto every depth of the tree.
pub fn lift_to_levels(tree: &CommunityTree, leaves: &CommunitySet) -> Result<Vec<CommunitySet>> {
    let mut out = Vec::with_capacity(tree.depth());
    for level in 1..=tree.depth() {
        let count = tree.level_nodes(level).len();
        let mut members = vec![Vec::new(); count];
        for (l, list) in leaves.members().iter().enumerate() {
            members[tree.ancestor(l, level)].extend_from_slice(list);
        }
        out.push(CommunitySet::from_members(leaves.node_count(), members)?);
    }
    Ok(out)
}

fn path_contains(tree: &CommunityTree, leaf_node: usize, m: usize) -> bool {
    let mut node = Some(leaf_node);
    while let Some(x) = node {
        if x == m {
            return true;
        }
        node = tree.parent(x);
    }
    false
}

/// Per-pair scratch, indexed by tree node or by leaf.
struct TreeScratch {
    edge: Vec<f64>,
    s: Vec<f64>,
    t: Vec<f64>,
    tc: Vec<f64>,
    logq: Vec<f64>,
    q: Vec<f64>,
    logp: Vec<f64>,
    p: Vec<f64>,
    pc_cond: Vec<f64>,
    noise: Vec<f64>,
    y: Vec<f64>,
    floor_q: Vec<bool>,
    // per tree node aggregates
    up: Vec<f64>,
    weight: Vec<f64>,
    gs: Vec<f64>,
    gt: Vec<f64>,
    gtc: Vec<f64>,
    // per leaf
    leaf_logq: Vec<f64>,
    leaf_logp: Vec<f64>,
    leaf_floor_p: Vec<bool>,
    leaf_pc: Vec<f64>,
    e: Vec<f64>,
    grad_e: Vec<f64>,
    du: Vec<f64>,
}

impl TreeScratch {
    fn new(n: usize, leaves: usize, d: usize) -> Self {
        TreeScratch {
            edge: vec![0.0; d],
            s: vec![0.0; n],
            t: vec![0.0; n],
            tc: vec![0.0; n],
            logq: vec![0.0; n],
            q: vec![0.0; n],
            logp: vec![0.0; n],
            p: vec![0.0; n],
            pc_cond: vec![0.0; n],
            noise: vec![0.0; n],
            y: vec![0.0; n],
            floor_q: vec![false; n],
            up: vec![0.0; n],
            weight: vec![0.0; n],
            gs: vec![0.0; n],
            gt: vec![0.0; n],
            gtc: vec![0.0; n],
            leaf_logq: vec![0.0; leaves],
            leaf_logp: vec![0.0; leaves],
            leaf_floor_p: vec![false; leaves],
            leaf_pc: vec![0.0; leaves],
            e: vec![0.0; d],
            grad_e: vec![0.0; d],
            du: vec![0.0; d],
        }
    }
}

/// Objective of the tree model; plugs into [`crate::training::Trainer`].
pub struct HierarchicalObjective {
    tree: CommunityTree,
    input: TreeDecoder,
    scratch: Option<TreeScratch>,
    decoder: DecoderWork,
}

impl HierarchicalObjective {
    pub fn new(tree: CommunityTree) -> Self {
        let n = tree.node_count();
        HierarchicalObjective {
            tree,
            input: TreeDecoder::Leaf,
            scratch: None,
            decoder: DecoderWork::new(n),
        }
    }

    pub fn with_decoder(mut self, input: TreeDecoder) -> Self {
        self.input = input;
        self
    }

    pub fn tree(&self) -> &CommunityTree {
        &self.tree
    }

    /// Whether tree node `n` contributes to the decoder input of paths through it.
    fn decodes(&self, n: usize) -> bool {
        self.input == TreeDecoder::PathSum || n >= self.tree.first_leaf
    }

    /// Sums a per-leaf quantity into every tree node (`up[n]` = sum over its leaves).
    fn accumulate_up(tree: &CommunityTree, leaf_values: impl Fn(usize) -> f64, up: &mut [f64]) {
        for l in 0..tree.leaf_count() {
            up[tree.leaf_node(l)] = leaf_values(l);
        }
        for g in tree.groups.iter().rev() {
            if let Some(o) = g.owner {
                up[o] = g.children.clone().map(|m| up[m]).sum();
            }
        }
    }

    /// Gradient of a path log-probability functional on per-group logits:
    /// `out[m] += up[m] - cond[m] * total(group)`.
    fn group_backward(tree: &CommunityTree, up: &[f64], root_total: f64, cond: &[f64], out: &mut [f64]) {
        for g in &tree.groups {
            let total = g.owner.map_or(root_total, |o| up[o]);
            for m in g.children.clone() {
                out[m] += up[m] - cond[m] * total;
            }
        }
    }
}

impl Objective for HierarchicalObjective {
    fn psi_rows(&self) -> usize {
        self.tree.node_count()
    }

    fn batch(
        &mut self,
        params: &ModelParams,
        ctx: &TrainContext<'_>,
        pairs: &[Pair],
        noise: &mut dyn NoiseSource,
        options: LossOptions,
        mut grads: Option<&mut Gradients>,
    ) -> LossComponents {
        let tree = &self.tree;
        let n = tree.node_count();
        let leaves = tree.leaf_count();
        let d = params.dim();
        let tau = params.tau;
        let scale = 1.0 / pairs.len().max(1) as f64;
        let floor = PROB_FLOOR.ln();
        let mut sc = self.scratch.take().unwrap_or_else(|| TreeScratch::new(n, leaves, d));
        self.decoder.begin_batch();
        let (mut recon_sum, mut kl_sum, mut reg_sum) = (0.0, 0.0, 0.0);
        let regularize = options.terms.reg && ctx.lambda > 0.0 && ctx.smoothness_target == SmoothnessTarget::Prior;

        for pair in pairs {
            let (w, c) = (pair.w, pair.c);
            params.posterior_logits(w, c, &mut sc.edge, &mut sc.s);
            params.prior_logits(w, &mut sc.t);
            for g in &tree.groups {
                let r = g.children.clone();
                math::log_softmax_into(&sc.s[r.clone()], &mut sc.logq[r.clone()]);
                math::log_softmax_into(&sc.t[r.clone()], &mut sc.logp[r.clone()]);
                for m in r {
                    sc.q[m] = sc.logq[m].exp();
                    sc.p[m] = sc.logp[m].exp();
                }
            }
            for l in 0..leaves {
                let (mut a, mut b) = (0.0, 0.0);
                let mut node = Some(tree.leaf_node(l));
                while let Some(m) = node {
                    a += sc.logq[m];
                    b += sc.logp[m];
                    node = tree.parent(m);
                }
                sc.leaf_logq[l] = a;
                sc.leaf_floor_p[l] = b < floor;
                sc.leaf_logp[l] = if b < floor { floor } else { b };
            }
            sc.gs.fill(0.0);
            sc.gt.fill(0.0);

            // level-wise relaxed samples at every internal group, hard path by greedy descent
            noise.gumbel(&mut sc.noise);
            for g in &tree.groups {
                let r = g.children.clone();
                for m in r.clone() {
                    sc.floor_q[m] = sc.logq[m] < floor;
                    let lq = if sc.floor_q[m] { floor } else { sc.logq[m] };
                    sc.up[m] = (lq + sc.noise[m]) / tau;
                }
                math::softmax_into(&sc.up[r.clone()], &mut sc.y[r]);
            }
            let mut group = 0;
            let leaf_node = loop {
                let r = tree.groups[group].children.clone();
                let chosen = r.start + math::argmax(&sc.y[r]);
                match tree.child_group[chosen] {
                    Some(next) => group = next,
                    None => break chosen,
                }
            };
            self.decoder.draw_negatives(ctx, noise);

            if options.terms.recon {
                let hard = options.forward == Forward::StraightThrough;
                // relaxed path weights: weight[n] = product of y along the path to n
                for g in &tree.groups {
                    let above = g.owner.map_or(1.0, |o| sc.weight[o]);
                    for m in g.children.clone() {
                        sc.weight[m] = above * sc.y[m];
                    }
                }
                sc.e.fill(0.0);
                if hard {
                    let mut node = Some(leaf_node);
                    while let Some(m) = node.filter(|&m| self.decodes(m)) {
                        axpy(1.0, params.psi.row(m), &mut sc.e);
                        node = tree.parent(m);
                    }
                } else {
                    for m in 0..n {
                        if self.decodes(m) {
                            axpy(sc.weight[m], params.psi.row(m), &mut sc.e);
                        }
                    }
                }
                let ll = self.decoder.reconstruct(
                    params,
                    ctx,
                    &sc.e,
                    hard.then_some(leaf_node),
                    c,
                    scale,
                    &mut sc.grad_e,
                    grads.as_deref_mut().map(|g| &mut g.varphi),
                );
                recon_sum += ll;
                if let Some(g) = grads.as_deref_mut() {
                    for m in 0..n {
                        let on_path = if hard { path_contains(tree, leaf_node, m) } else { true };
                        if self.decodes(m) && on_path {
                            let wt = if hard { 1.0 } else { sc.weight[m] };
                            axpy(-scale * wt, &sc.grad_e, g.psi.row_mut(m));
                        }
                    }
                    // R[n] = sum over decoding nodes k in the subtree of n of
                    // (d loss / d weight_k) * weight_k / weight_n
                    for m in 0..n {
                        sc.up[m] = if self.decodes(m) {
                            -scale * dot(&sc.grad_e, params.psi.row(m))
                        } else {
                            0.0
                        };
                    }
                    for g in tree.groups.iter().rev() {
                        if let Some(o) = g.owner {
                            sc.up[o] += g.children.clone().map(|m| sc.y[m] * sc.up[m]).sum::<f64>();
                        }
                    }
                    for g in &tree.groups {
                        let above = g.owner.map_or(1.0, |o| sc.weight[o]);
                        let r = g.children.clone();
                        let mean: f64 = r.clone().map(|m| sc.y[m] * above * sc.up[m]).sum();
                        let mut masked_sum = 0.0;
                        for m in r.clone() {
                            // reuse pc_cond as per-group scratch for d loss / d u
                            sc.pc_cond[m] = sc.y[m] * (above * sc.up[m] - mean) / tau;
                            if !sc.floor_q[m] {
                                masked_sum += sc.pc_cond[m];
                            }
                        }
                        for m in r {
                            let own = if sc.floor_q[m] { 0.0 } else { sc.pc_cond[m] };
                            sc.gs[m] += own - sc.q[m] * masked_sum;
                        }
                    }
                }
            }

            let mut kl = 0.0;
            for l in 0..leaves {
                let ql = sc.leaf_logq[l].exp();
                if ql > 0.0 {
                    kl += ql * (sc.leaf_logq[l] - sc.leaf_logp[l]);
                }
            }
            if options.terms.kl {
                kl_sum += kl;
                if grads.is_some() {
                    let (lq, lp) = (&sc.leaf_logq, &sc.leaf_logp);
                    Self::accumulate_up(
                        tree,
                        |l| {
                            let ql = lq[l].exp();
                            if ql > 0.0 {
                                ql * (lq[l] - lp[l] + 1.0)
                            } else {
                                0.0
                            }
                        },
                        &mut sc.up,
                    );
                    let root: f64 = tree.groups[0].children.clone().map(|m| sc.up[m]).sum();
                    sc.weight.fill(0.0);
                    Self::group_backward(tree, &sc.up, root, &sc.q, &mut sc.weight);
                    axpy(scale, &sc.weight, &mut sc.gs);

                    let fp = &sc.leaf_floor_p;
                    Self::accumulate_up(tree, |l| if fp[l] { 0.0 } else { -lq[l].exp() }, &mut sc.up);
                    let root: f64 = tree.groups[0].children.clone().map(|m| sc.up[m]).sum();
                    sc.weight.fill(0.0);
                    Self::group_backward(tree, &sc.up, root, &sc.p, &mut sc.weight);
                    axpy(scale, &sc.weight, &mut sc.gt);
                }
            }

            let mut reg_c_active = false;
            if regularize {
                let alpha = ctx.jaccard[pair.edge];
                params.prior_logits(c, &mut sc.tc);
                let pc = path_probabilities(tree, &sc.tc);
                sc.leaf_pc.copy_from_slice(&pc);
                let pw: Vec<f64> = (0..leaves).map(|l| {
                    // unfloored prior path probability of w
                    let mut b = 0.0;
                    let mut node = Some(tree.leaf_node(l));
                    while let Some(m) = node {
                        b += sc.logp[m];
                        node = tree.parent(m);
                    }
                    b.exp()
                }).collect();
                let dist: f64 = (0..leaves).map(|l| (sc.leaf_pc[l] - pw[l]).powi(2)).sum();
                reg_sum += ctx.lambda * alpha * dist;
                if grads.is_some() && alpha > 0.0 {
                    let coef = 2.0 * scale * ctx.lambda * alpha;
                    // w side: g_l = -coef (pc - pw), contribution g_l * P_l
                    Self::accumulate_up(tree, |l| -coef * (sc.leaf_pc[l] - pw[l]) * pw[l], &mut sc.up);
                    let root: f64 = tree.groups[0].children.clone().map(|m| sc.up[m]).sum();
                    Self::group_backward(tree, &sc.up, root, &sc.p, &mut sc.gt);
                    // c side
                    for g in &tree.groups {
                        let r = g.children.clone();
                        let cond = math::softmax(&sc.tc[r.clone()]);
                        sc.pc_cond[r].copy_from_slice(&cond);
                    }
                    let lpc = &sc.leaf_pc;
                    Self::accumulate_up(tree, |l| coef * (lpc[l] - pw[l]) * lpc[l], &mut sc.up);
                    let root: f64 = tree.groups[0].children.clone().map(|m| sc.up[m]).sum();
                    sc.gtc.fill(0.0);
                    Self::group_backward(tree, &sc.up, root, &sc.pc_cond, &mut sc.gtc);
                    reg_c_active = true;
                }
            }

            if let Some(g) = grads.as_deref_mut() {
                sc.du.fill(0.0);
                for m in 0..n {
                    if sc.gs[m] != 0.0 {
                        axpy(sc.gs[m], &sc.edge, g.psi.row_mut(m));
                        axpy(sc.gs[m], params.psi.row(m), &mut sc.du);
                    }
                }
                for ((gi, du), pc) in g.phi.row_mut(w).iter_mut().zip(&sc.du).zip(params.phi.row(c)) {
                    *gi += du * pc;
                }
                for ((gi, du), pw) in g.phi.row_mut(c).iter_mut().zip(&sc.du).zip(params.phi.row(w)) {
                    *gi += du * pw;
                }
                crate::training::backprop_prior(params, w, &sc.gt, g);
                if reg_c_active {
                    crate::training::backprop_prior(params, c, &sc.gtc, g);
                }
            }
        }

        if let Some(g) = grads {
            self.decoder.finish_batch(scale, &mut g.varphi);
        }
        self.scratch = Some(sc);
        LossComponents::finish(recon_sum, kl_sum, reg_sum, pairs.len().max(1))
    }
}

/// Trains the tree model; `config.communities` is ignored in favor of the tree.
pub fn train_hierarchical(
    g: &Graph,
    config: &crate::training::TrainConfig,
    tree: &CommunityTree,
) -> Result<crate::training::TrainedModel> {
    if config.smoothness_target != SmoothnessTarget::Prior && config.lambda > 0.0 {
        return Err(Error::Config(
            "the tree model supports the smoothness penalty on the prior only".into(),
        ));
    }
    let mut config = config.clone();
    config.communities = tree.node_count();
    let objective = HierarchicalObjective::new(tree.clone()).with_decoder(config.tree_decoder);
    crate::training::Trainer::new(g, &config, objective)?.run()
}
