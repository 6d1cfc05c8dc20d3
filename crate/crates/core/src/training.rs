//! Loss assembly, analytic gradients, Adam and the training loop.
//!
//! Per ordered pair `(w, c)` the loss is
//! `-log p(c | z) + KL(q(.|w,c) || p(.|w)) + lambda * alpha_wc * |p(.|c) - p(.|w)|^2`,
//! averaged over the batch. `z` is a straight-through Gumbel-Softmax sample:
//! the forward pass decodes with the one-hot sample, the backward pass
//! differentiates the relaxed sample. A soft decoder input `y` is decoded
//! through the mixed community embedding `sum_k y_k psi_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NoiseDistribution};
use crate::math::{self, axpy, clamped_ln, dot, log_sigmoid, sigmoid, PROB_FLOOR};
use crate::model::{fill_gumbel, GumbelSample, Matrix, MembershipVector, ModelParams, Table};

/// Salt mixed into the seed for the loss-evaluation noise stream.
const EVAL_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderMode {
    /// Full softmax up to `full_softmax_max_nodes`, negative sampling above.
    Auto,
    FullSoftmax,
    NegativeSampling,
}

/// Which community distribution the smoothness penalty compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothnessTarget {
    /// The softmax prior `p(z | w)`.
    Prior,
    /// The neighbor-averaged edge posterior.
    Aggregated,
}

/// What the tree model feeds the decoder for a sampled path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeDecoder {
    /// The leaf's `psi` row.
    #[default]
    Leaf,
    /// Sum of the `psi` rows along the path, so siblings share their
    /// ancestors' decoding directions.
    PathSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dim: usize,
    pub communities: usize,
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub iters: usize,
    /// Ordered pairs per batch; 0 means the full edge set.
    pub batch_edges: usize,
    pub lambda: f64,
    pub negatives: usize,
    pub tau: f64,
    /// When set, temperature anneals linearly from `tau` to this value.
    pub tau_final: Option<f64>,
    pub seed: u64,
    pub eval_every: usize,
    pub decoder: DecoderMode,
    pub full_softmax_max_nodes: usize,
    pub smoothness_target: SmoothnessTarget,
    /// Above this many edges the loss is tracked on a fixed pair sample.
    pub eval_sample_threshold: usize,
    pub eval_sample_pairs: usize,
    /// Tree model only.
    pub tree_decoder: TreeDecoder,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            communities: 0,
            lr0: 0.05,
            decay: 0.99,
            decay_every: 100,
            iters: 5000,
            batch_edges: 5000,
            lambda: 0.0,
            negatives: 5,
            tau: 1.0,
            tau_final: None,
            seed: 0,
            eval_every: 100,
            decoder: DecoderMode::Auto,
            full_softmax_max_nodes: 10_000,
            smoothness_target: SmoothnessTarget::Prior,
            eval_sample_threshold: 25_000,
            eval_sample_pairs: 50_000,
            tree_decoder: TreeDecoder::Leaf,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.communities < 1 {
            return fail("number of communities must be at least 1".into());
        }
        if self.dim < 1 {
            return fail("embedding dimension must be at least 1".into());
        }
        if self.lr0.is_nan() || self.lr0 <= 0.0 {
            return fail(format!("initial learning rate must be positive, got {}", self.lr0));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return fail(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.decay_every == 0 || self.eval_every == 0 {
            return fail("decay_every and eval_every must be positive".into());
        }
        if self.tau.is_nan() || self.tau <= 0.0 || self.tau_final.is_some_and(|t| t.is_nan() || t <= 0.0) {
            return fail("temperature must be positive".into());
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return fail(format!("lambda must be non-negative, got {}", self.lambda));
        }
        Ok(())
    }

    pub fn uses_full_softmax(&self, nodes: usize) -> bool {
        match self.decoder {
            DecoderMode::Auto => nodes <= self.full_softmax_max_nodes,
            DecoderMode::FullSoftmax => true,
            DecoderMode::NegativeSampling => false,
        }
    }

    /// Temperature in effect at `iteration`.
    pub fn tau_at(&self, iteration: usize) -> f64 {
        match self.tau_final {
            Some(end) if self.iters > 0 => {
                let frac = (iteration as f64 / self.iters as f64).min(1.0);
                self.tau + (end - self.tau) * frac
            }
            _ => self.tau,
        }
    }
}

/// Step-decayed learning rate: `lr0 * decay^floor(iteration / decay_every)`.
pub fn lr_at(iteration: usize, config: &TrainConfig) -> f64 {
    config.lr0 * config.decay.powi((iteration / config.decay_every) as i32)
}

/// `KL(q || p)` for categorical distributions with `0 log 0 = 0` and `p`
/// floored at 1e-10.
pub fn kl_categorical(q: &MembershipVector, p: &MembershipVector) -> f64 {
    q.probs()
        .iter()
        .zip(p.probs())
        .filter(|(&qk, _)| qk > 0.0)
        .map(|(&qk, &pk)| qk * (qk.ln() - clamped_ln(pk)))
        .sum::<f64>()
        .max(0.0)
}

/// Reconstruction log-likelihood of `c` under the hard sample and the closed
/// form KL between the edge posterior and the prior of `w`. With `negatives`
/// the reconstruction is the negative-sampling surrogate.
pub fn elbo_terms(
    params: &ModelParams,
    w: usize,
    c: usize,
    sample: &GumbelSample,
    negatives: Option<&[usize]>,
) -> Result<(f64, f64)> {
    let recon = match negatives {
        Some(negs) => params.negative_sampling_objective(c, sample.index, negs)?,
        None => clamped_ln(params.decoder_distribution(sample.index)?[c]),
    };
    let q = params.posterior_distribution(w, c)?;
    let p = params.prior_distribution(w)?;
    Ok((recon, kl_categorical(&q, &p)))
}

/// `lambda * sum over pairs of alpha_wc * sum_k (p(k|c) - p(k|w))^2` with the
/// softmax prior as `p`.
pub fn smoothness_penalty(params: &ModelParams, g: &Graph, batch: &[(usize, usize)], lambda: f64) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &(w, c) in batch {
        let alpha = g.jaccard_coefficient(w, c)?;
        let pw = params.prior_distribution(w)?;
        let pc = params.prior_distribution(c)?;
        let dist: f64 = pw
            .probs()
            .iter()
            .zip(pc.probs())
            .map(|(a, b)| (b - a) * (b - a))
            .sum();
        total += alpha * dist;
    }
    Ok(lambda * total)
}

/// One directed view of an undirected edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub w: usize,
    pub c: usize,
    /// Index into `Graph::edges`.
    pub edge: usize,
}

/// Both orientations of every edge, in edge order.
pub fn ordered_pairs(g: &Graph) -> Vec<Pair> {
    let mut out = Vec::with_capacity(2 * g.edge_count());
    for (edge, &(a, b)) in g.edges().iter().enumerate() {
        out.push(Pair { w: a, c: b, edge });
        out.push(Pair { w: b, c: a, edge });
    }
    out
}

/// Graph-derived state shared by every loss evaluation.
pub struct TrainContext<'g> {
    pub graph: &'g Graph,
    pub pairs: Vec<Pair>,
    pub jaccard: Vec<f64>,
    pub noise: NoiseDistribution,
    pub full_softmax: bool,
    pub negatives: usize,
    pub lambda: f64,
    pub smoothness_target: SmoothnessTarget,
}

impl<'g> TrainContext<'g> {
    pub fn new(graph: &'g Graph, config: &TrainConfig) -> Result<Self> {
        let noise = NoiseDistribution::new(graph)?;
        let jaccard = if config.lambda > 0.0 {
            graph
                .edges()
                .iter()
                .map(|&(a, b)| graph.jaccard_coefficient(a, b))
                .collect::<Result<_>>()?
        } else {
            vec![0.0; graph.edge_count()]
        };
        Ok(TrainContext {
            graph,
            pairs: ordered_pairs(graph),
            jaccard,
            noise,
            full_softmax: config.uses_full_softmax(graph.node_count()),
            negatives: config.negatives,
            lambda: config.lambda,
            smoothness_target: config.smoothness_target,
        })
    }
}

/// Source of Gumbel noise and negative samples, consumed pair by pair in
/// batch order: the Gumbel draws for a pair first, then its negatives.
pub trait NoiseSource {
    fn gumbel(&mut self, out: &mut [f64]);
    fn negatives(&mut self, out: &mut Vec<usize>, m: usize);
}

pub struct SampledNoise<'a, R: Rng> {
    pub rng: &'a mut R,
    pub dist: &'a NoiseDistribution,
}

impl<R: Rng> NoiseSource for SampledNoise<'_, R> {
    fn gumbel(&mut self, out: &mut [f64]) {
        fill_gumbel(self.rng, out);
    }

    fn negatives(&mut self, out: &mut Vec<usize>, m: usize) {
        out.clear();
        for _ in 0..m {
            out.push(self.dist.sample(self.rng));
        }
    }
}

/// Pre-drawn noise replayed identically on every pass; used for
/// finite-difference checks.
#[derive(Debug, Clone, Default)]
pub struct FixedNoise {
    gumbel: Vec<Vec<f64>>,
    negatives: Vec<Vec<usize>>,
    next_gumbel: usize,
    next_negatives: usize,
}

impl FixedNoise {
    /// Noise given explicitly, one Gumbel vector and one negative list per pair.
    pub fn new(gumbel: Vec<Vec<f64>>, negatives: Vec<Vec<usize>>) -> Self {
        FixedNoise {
            gumbel,
            negatives,
            next_gumbel: 0,
            next_negatives: 0,
        }
    }

    /// Draws noise for `pairs` pairs, `draws_per_pair` Gumbel values and
    /// `m` negatives each.
    pub fn draw<R: Rng>(rng: &mut R, pairs: usize, draws_per_pair: usize, m: usize, dist: &NoiseDistribution) -> Self {
        let mut gumbel = Vec::with_capacity(pairs);
        let mut negatives = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            let mut g = vec![0.0; draws_per_pair];
            fill_gumbel(rng, &mut g);
            gumbel.push(g);
            negatives.push((0..m).map(|_| dist.sample(rng)).collect());
        }
        FixedNoise {
            gumbel,
            negatives,
            next_gumbel: 0,
            next_negatives: 0,
        }
    }

    pub fn rewind(&mut self) {
        self.next_gumbel = 0;
        self.next_negatives = 0;
    }
}

impl NoiseSource for FixedNoise {
    fn gumbel(&mut self, out: &mut [f64]) {
        out.copy_from_slice(&self.gumbel[self.next_gumbel]);
        self.next_gumbel += 1;
    }

    fn negatives(&mut self, out: &mut Vec<usize>, m: usize) {
        out.clear();
        out.extend_from_slice(&self.negatives[self.next_negatives][..m]);
        self.next_negatives += 1;
    }
}

/// Forward value fed to the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Forward {
    /// Hard one-hot forward, relaxed backward.
    StraightThrough,
    /// Relaxed sample forward and backward; the objective is then smooth in
    /// the parameters for fixed noise.
    Relaxed,
}

/// Which loss terms to include.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub recon: bool,
    pub kl: bool,
    pub reg: bool,
}

impl Terms {
    pub const ALL: Terms = Terms {
        recon: true,
        kl: true,
        reg: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossOptions {
    pub forward: Forward,
    pub terms: Terms,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            forward: Forward::StraightThrough,
            terms: Terms::ALL,
        }
    }
}

/// Batch-mean loss components; `total = -recon + kl + reg`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub recon: f64,
    pub kl: f64,
    pub reg: f64,
    pub total: f64,
}

impl LossComponents {
    pub(crate) fn finish(recon_sum: f64, kl_sum: f64, reg_sum: f64, n: usize) -> Self {
        let scale = 1.0 / n as f64;
        let recon = recon_sum * scale;
        let kl = kl_sum * scale;
        let reg = reg_sum * scale;
        LossComponents {
            recon,
            kl,
            reg,
            total: -recon + kl + reg,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.recon.is_finite() && self.kl.is_finite() && self.reg.is_finite() && self.total.is_finite()
    }
}

/// Row-sparse gradient accumulator. Rows are stored compactly in the order
/// they are first written; unwritten rows read as zero.
#[derive(Debug, Clone)]
pub struct RowGrad {
    rows: usize,
    cols: usize,
    slot: Vec<u32>,
    touched: Vec<usize>,
    data: Vec<f64>,
    zero: Vec<f64>,
}

const NO_SLOT: u32 = u32::MAX;

impl RowGrad {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RowGrad {
            rows,
            cols,
            slot: vec![NO_SLOT; rows],
            touched: Vec::new(),
            data: Vec::new(),
            zero: vec![0.0; cols],
        }
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let mut s = self.slot[i];
        if s == NO_SLOT {
            s = self.touched.len() as u32;
            self.slot[i] = s;
            self.touched.push(i);
            self.data.resize(self.data.len() + self.cols, 0.0);
        }
        let start = s as usize * self.cols;
        &mut self.data[start..start + self.cols]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        match self.slot[i] {
            NO_SLOT => &self.zero,
            s => &self.data[s as usize * self.cols..(s as usize + 1) * self.cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r)[c]
    }

    /// Written rows, in first-write order.
    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    /// Written rows paired with their values, in first-write order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.touched.iter().copied().zip(self.data.chunks_exact(self.cols.max(1)))
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for (r, values) in self.iter() {
            m.row_mut(r).copy_from_slice(values);
        }
        m
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.slot[i] = NO_SLOT;
        }
        self.touched.clear();
        self.data.clear();
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub phi: RowGrad,
    pub varphi: RowGrad,
    pub psi: RowGrad,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Gradients {
            phi: RowGrad::zeros(params.phi.rows(), params.dim()),
            varphi: RowGrad::zeros(params.varphi.rows(), params.dim()),
            psi: RowGrad::zeros(params.psi.rows(), params.dim()),
        }
    }

    pub fn table(&self, t: Table) -> &RowGrad {
        match t {
            Table::Phi => &self.phi,
            Table::Varphi => &self.varphi,
            Table::Psi => &self.psi,
        }
    }

    pub fn table_mut(&mut self, t: Table) -> &mut RowGrad {
        match t {
            Table::Phi => &mut self.phi,
            Table::Varphi => &mut self.varphi,
            Table::Psi => &mut self.psi,
        }
    }

    pub fn clear(&mut self) {
        self.phi.clear();
        self.varphi.clear();
        self.psi.clear();
    }
}

/// A batch objective over ordered pairs that can report its loss and,
/// optionally, accumulate the gradient of the batch-mean loss.
pub trait Objective {
    /// Rows of the `psi` table this objective expects.
    fn psi_rows(&self) -> usize;

    fn batch(
        &mut self,
        params: &ModelParams,
        ctx: &TrainContext<'_>,
        pairs: &[Pair],
        noise: &mut dyn NoiseSource,
        options: LossOptions,
        grads: Option<&mut Gradients>,
    ) -> LossComponents;
}

struct SoftmaxCacheEntry {
    input: Vec<f64>,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
    mean_varphi: Vec<f64>,
    /// Number of hard samples that decoded with this row in the batch.
    hits: usize,
}

/// Decoder evaluation shared by the flat and tree objectives. With a hard
/// forward and the full softmax, per-row softmaxes over all nodes are computed
/// once per batch and their gradient contributions applied in bulk.
pub(crate) struct DecoderWork {
    cache: Vec<Option<SoftmaxCacheEntry>>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    negatives: Vec<usize>,
}

impl DecoderWork {
    pub(crate) fn new(rows: usize) -> Self {
        DecoderWork {
            cache: (0..rows).map(|_| None).collect(),
            logits: Vec::new(),
            probs: Vec::new(),
            negatives: Vec::new(),
        }
    }

    pub(crate) fn begin_batch(&mut self) {
        for e in &mut self.cache {
            *e = None;
        }
    }

    fn cached(&mut self, params: &ModelParams, row: usize, e: &[f64]) -> &mut SoftmaxCacheEntry {
        if self.cache[row].is_none() {
            let v = params.node_count();
            let logits: Vec<f64> = (0..v).map(|c| dot(e, params.varphi.row(c))).collect();
            let mut log_probs = vec![0.0; v];
            math::log_softmax_into(&logits, &mut log_probs);
            let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
            let mut mean_varphi = vec![0.0; params.dim()];
            for (c, &p) in probs.iter().enumerate() {
                axpy(p, params.varphi.row(c), &mut mean_varphi);
            }
            self.cache[row] = Some(SoftmaxCacheEntry {
                input: e.to_vec(),
                log_probs,
                probs,
                mean_varphi,
                hits: 0,
            });
        }
        self.cache[row].as_mut().expect("filled above")
    }

    /// Draws negatives if the decoder needs them. Must be called once per pair
    /// after the Gumbel draws so the noise stream order is fixed.
    pub(crate) fn draw_negatives(&mut self, ctx: &TrainContext<'_>, noise: &mut dyn NoiseSource) {
        if !ctx.full_softmax {
            noise.negatives(&mut self.negatives, ctx.negatives);
        }
    }

    pub(crate) fn prefetch_negatives(&self, params: &ModelParams) {
        for &v in &self.negatives {
            math::prefetch(params.varphi.row(v));
        }
    }

    /// Returns the reconstruction log-likelihood of `c` given decoder input
    /// `e`, writes `d recon / d e` to `grad_e`, and, when `grads` is given,
    /// accumulates `-scale * d recon / d varphi`. Under a hard forward,
    /// `hard_row` is a cache key that determines `e` within the batch.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn reconstruct(
        &mut self,
        params: &ModelParams,
        ctx: &TrainContext<'_>,
        e: &[f64],
        hard_row: Option<usize>,
        c: usize,
        scale: f64,
        grad_e: &mut [f64],
        grads: Option<&mut RowGrad>,
    ) -> f64 {
        if ctx.full_softmax {
            if let Some(row) = hard_row {
                let entry = self.cached(params, row, e);
                let ll = entry.log_probs[c];
                for ((g, a), b) in grad_e.iter_mut().zip(params.varphi.row(c)).zip(&entry.mean_varphi) {
                    *g = a - b;
                }
                if let Some(gv) = grads {
                    entry.hits += 1;
                    axpy(-scale, e, gv.row_mut(c));
                }
                return ll;
            }
            let v = params.node_count();
            self.logits.resize(v, 0.0);
            self.probs.resize(v, 0.0);
            for (cc, l) in self.logits.iter_mut().enumerate() {
                *l = dot(e, params.varphi.row(cc));
            }
            let lse = math::log_sum_exp(&self.logits);
            let ll = self.logits[c] - lse;
            grad_e.copy_from_slice(params.varphi.row(c));
            for cc in 0..v {
                self.probs[cc] = (self.logits[cc] - lse).exp();
                axpy(-self.probs[cc], params.varphi.row(cc), grad_e);
            }
            if let Some(gv) = grads {
                axpy(-scale, e, gv.row_mut(c));
                for cc in 0..v {
                    axpy(scale * self.probs[cc], e, gv.row_mut(cc));
                }
            }
            ll
        } else {
            let xc = dot(e, params.varphi.row(c));
            let mut ll = log_sigmoid(xc);
            let pos = 1.0 - sigmoid(xc);
            grad_e.iter_mut().for_each(|g| *g = 0.0);
            axpy(pos, params.varphi.row(c), grad_e);
            let mut gv = grads;
            if let Some(gv) = gv.as_deref_mut() {
                axpy(-scale * pos, e, gv.row_mut(c));
            }
            for &v in &self.negatives {
                let xv = dot(e, params.varphi.row(v));
                ll += log_sigmoid(-xv);
                let s = sigmoid(xv);
                axpy(-s, params.varphi.row(v), grad_e);
                if let Some(gv) = gv.as_deref_mut() {
                    axpy(scale * s, e, gv.row_mut(v));
                }
            }
            ll
        }
    }

    /// Applies the bulk `varphi` gradient of cached softmax rows.
    pub(crate) fn finish_batch(&mut self, scale: f64, grads: &mut RowGrad) {
        for entry in &self.cache {
            let Some(entry) = entry else { continue };
            if entry.hits == 0 {
                continue;
            }
            let weight = scale * entry.hits as f64;
            for (c, &p) in entry.probs.iter().enumerate() {
                axpy(weight * p, &entry.input, grads.row_mut(c));
            }
        }
    }
}

/// Scratch buffers for one flat pair evaluation.
struct FlatScratch {
    edge: Vec<f64>,
    s: Vec<f64>,
    logq: Vec<f64>,
    q: Vec<f64>,
    t: Vec<f64>,
    logp: Vec<f64>,
    p: Vec<f64>,
    floor_p: Vec<bool>,
    floor_q: Vec<bool>,
    noise: Vec<f64>,
    y: Vec<f64>,
    e: Vec<f64>,
    grad_e: Vec<f64>,
    gs: Vec<f64>,
    gt: Vec<f64>,
    gtc: Vec<f64>,
    tc: Vec<f64>,
    pc: Vec<f64>,
    du: Vec<f64>,
    scores: Vec<f64>,
    a: Vec<f64>,
    gu: Vec<f64>,
    gw: Vec<f64>,
    gc: Vec<f64>,
}

impl FlatScratch {
    fn new(k: usize, d: usize) -> Self {
        FlatScratch {
            edge: vec![0.0; d],
            s: vec![0.0; k],
            logq: vec![0.0; k],
            q: vec![0.0; k],
            t: vec![0.0; k],
            logp: vec![0.0; k],
            p: vec![0.0; k],
            floor_p: vec![false; k],
            floor_q: vec![false; k],
            noise: vec![0.0; k],
            y: vec![0.0; k],
            e: vec![0.0; d],
            grad_e: vec![0.0; d],
            gs: vec![0.0; k],
            gt: vec![0.0; k],
            gtc: vec![0.0; k],
            tc: vec![0.0; k],
            pc: vec![0.0; k],
            du: vec![0.0; d],
            scores: vec![0.0; k],
            a: vec![0.0; k],
            gu: vec![0.0; k],
            gw: vec![0.0; k],
            gc: vec![0.0; k],
        }
    }
}

/// The flat model's objective.
pub struct FlatObjective {
    k: usize,
    scratch: Option<FlatScratch>,
    decoder: DecoderWork,
}

impl FlatObjective {
    pub fn new(k: usize) -> Self {
        FlatObjective {
            k,
            scratch: None,
            decoder: DecoderWork::new(k),
        }
    }
}

/// `log_softmax` of `logits` into `logp`, probabilities into `p`, and a mask of
/// entries whose log is floored at `ln(1e-10)`.
fn floored_log_softmax(logits: &[f64], logp: &mut [f64], p: &mut [f64], floored: &mut [bool]) {
    math::log_softmax_into(logits, logp);
    let floor = PROB_FLOOR.ln();
    for ((lp, pk), f) in logp.iter_mut().zip(p.iter_mut()).zip(floored.iter_mut()) {
        *pk = lp.exp();
        *f = *lp < floor;
        if *f {
            *lp = floor;
        }
    }
}

/// Pulls an upstream gradient `g` on softmax outputs `p` back to the logits,
/// adding `p_i (g_i - p.g)` into `out`.
pub(crate) fn softmax_backward(p: &[f64], g: &[f64], out: &mut [f64]) {
    let mean: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
    for ((o, &pi), &gi) in out.iter_mut().zip(p).zip(g) {
        *o += pi * (gi - mean);
    }
}

impl Objective for FlatObjective {
    fn psi_rows(&self) -> usize {
        self.k
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
        let k = self.k;
        let d = params.dim();
        let tau = params.tau;
        let scale = 1.0 / pairs.len().max(1) as f64;
        let mut sc = self.scratch.take().unwrap_or_else(|| FlatScratch::new(k, d));
        self.decoder.begin_batch();
        let (mut recon_sum, mut kl_sum, mut reg_sum) = (0.0, 0.0, 0.0);
        let floor = PROB_FLOOR.ln();

        for (i, pair) in pairs.iter().enumerate() {
            let (w, c) = (pair.w, pair.c);
            if let Some(next) = pairs.get(i + 1) {
                math::prefetch(params.phi.row(next.w));
                math::prefetch(params.phi.row(next.c));
                math::prefetch(params.varphi.row(next.c));
            }
            // noise for this pair: Gumbel draws, then negatives
            noise.gumbel(&mut sc.noise);
            self.decoder.draw_negatives(ctx, noise);
            self.decoder.prefetch_negatives(params);
            params.posterior_logits(w, c, &mut sc.edge, &mut sc.s);
            math::log_softmax_into(&sc.s, &mut sc.logq);
            for j in 0..k {
                sc.q[j] = sc.logq[j].exp();
            }
            params.prior_logits(w, &mut sc.t);
            floored_log_softmax(&sc.t, &mut sc.logp, &mut sc.p, &mut sc.floor_p);

            sc.gs.fill(0.0);
            sc.gt.fill(0.0);

            // straight-through Gumbel-Softmax sample
            for j in 0..k {
                sc.floor_q[j] = sc.logq[j] < floor;
                let lq = if sc.floor_q[j] { floor } else { sc.logq[j] };
                sc.scores[j] = (lq + sc.noise[j]) / tau;
            }
            math::softmax_into(&sc.scores, &mut sc.y);
            let z = math::argmax(&sc.y);

            if options.terms.recon {
                let hard = options.forward == Forward::StraightThrough;
                if hard {
                    sc.e.copy_from_slice(params.psi.row(z));
                } else {
                    sc.e.fill(0.0);
                    for j in 0..k {
                        axpy(sc.y[j], params.psi.row(j), &mut sc.e);
                    }
                }
                let ll = self.decoder.reconstruct(
                    params,
                    ctx,
                    &sc.e,
                    hard.then_some(z),
                    c,
                    scale,
                    &mut sc.grad_e,
                    grads.as_deref_mut().map(|g| &mut g.varphi),
                );
                recon_sum += ll;
                if let Some(g) = grads.as_deref_mut() {
                    // d loss / d e = -scale * grad_e
                    if hard {
                        axpy(-scale, &sc.grad_e, g.psi.row_mut(z));
                    } else {
                        for j in 0..k {
                            axpy(-scale * sc.y[j], &sc.grad_e, g.psi.row_mut(j));
                        }
                    }
                    // through the relaxed sample to the posterior logits
                    let mut mean = 0.0;
                    for j in 0..k {
                        sc.a[j] = -scale * dot(&sc.grad_e, params.psi.row(j));
                        mean += sc.y[j] * sc.a[j];
                    }
                    let mut masked_sum = 0.0;
                    for j in 0..k {
                        sc.gu[j] = sc.y[j] * (sc.a[j] - mean) / tau;
                        if !sc.floor_q[j] {
                            masked_sum += sc.gu[j];
                        }
                    }
                    for j in 0..k {
                        let own = if sc.floor_q[j] { 0.0 } else { sc.gu[j] };
                        sc.gs[j] += own - sc.q[j] * masked_sum;
                    }
                }
            }

            let mut kl = 0.0;
            for j in 0..k {
                if sc.q[j] > 0.0 {
                    kl += sc.q[j] * (sc.logq[j] - sc.logp[j]);
                }
            }
            if options.terms.kl {
                kl_sum += kl;
                if grads.is_some() {
                    let mut kept = 0.0;
                    for j in 0..k {
                        sc.gs[j] += scale * sc.q[j] * (sc.logq[j] - sc.logp[j] - kl);
                        if !sc.floor_p[j] {
                            kept += sc.q[j];
                        }
                    }
                    for j in 0..k {
                        let own = if sc.floor_p[j] { 0.0 } else { sc.q[j] };
                        sc.gt[j] += scale * (sc.p[j] * kept - own);
                    }
                }
            }

            let mut reg_c_active = false;
            if options.terms.reg && ctx.lambda > 0.0 {
                let alpha = ctx.jaccard[pair.edge];
                match ctx.smoothness_target {
                    SmoothnessTarget::Prior => {
                        params.prior_logits(c, &mut sc.tc);
                        math::softmax_into(&sc.tc, &mut sc.pc);
                        let dist: f64 = (0..k).map(|j| (sc.pc[j] - sc.p[j]).powi(2)).sum();
                        reg_sum += ctx.lambda * alpha * dist;
                        if grads.is_some() && alpha > 0.0 {
                            let coef = 2.0 * scale * ctx.lambda * alpha;
                            for j in 0..k {
                                sc.gw[j] = -coef * (sc.pc[j] - sc.p[j]);
                                sc.gc[j] = -sc.gw[j];
                            }
                            softmax_backward(&sc.p, &sc.gw, &mut sc.gt);
                            sc.gtc.fill(0.0);
                            softmax_backward(&sc.pc, &sc.gc, &mut sc.gtc);
                            reg_c_active = true;
                        }
                    }
                    SmoothnessTarget::Aggregated => {
                        let mw = aggregated_membership(params, ctx.graph, w);
                        let mc = aggregated_membership(params, ctx.graph, c);
                        let dist: f64 = (0..k).map(|j| (mc[j] - mw[j]).powi(2)).sum();
                        reg_sum += ctx.lambda * alpha * dist;
                        if let Some(g) = grads.as_deref_mut() {
                            if alpha > 0.0 {
                                let coef = 2.0 * scale * ctx.lambda * alpha;
                                let gw: Vec<f64> = (0..k).map(|j| -coef * (mc[j] - mw[j])).collect();
                                let gc: Vec<f64> = gw.iter().map(|x| -x).collect();
                                aggregated_membership_backward(params, ctx.graph, w, &gw, g);
                                aggregated_membership_backward(params, ctx.graph, c, &gc, g);
                            }
                        }
                    }
                }
            }

            if let Some(g) = grads.as_deref_mut() {
                // s_j = (phi_w * phi_c) . psi_j
                sc.du.fill(0.0);
                for j in 0..k {
                    if sc.gs[j] != 0.0 {
                        axpy(sc.gs[j], &sc.edge, g.psi.row_mut(j));
                        axpy(sc.gs[j], params.psi.row(j), &mut sc.du);
                    }
                }
                {
                    let gw = g.phi.row_mut(w);
                    for ((gi, du), pc) in gw.iter_mut().zip(&sc.du).zip(params.phi.row(c)) {
                        *gi += du * pc;
                    }
                }
                {
                    let gc = g.phi.row_mut(c);
                    for ((gi, du), pw) in gc.iter_mut().zip(&sc.du).zip(params.phi.row(w)) {
                        *gi += du * pw;
                    }
                }
                // t_j = phi_w . psi_j
                backprop_prior(params, w, &sc.gt, g);
                if reg_c_active {
                    backprop_prior(params, c, &sc.gtc, g);
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

/// Accumulates gradients for prior logits `t_j = phi_w . psi_j`.
pub(crate) fn backprop_prior(params: &ModelParams, w: usize, gt: &[f64], g: &mut Gradients) {
    let phi_w = params.phi.row(w);
    for (j, &gj) in gt.iter().enumerate() {
        if gj != 0.0 {
            axpy(gj, phi_w, g.psi.row_mut(j));
        }
    }
    let gw = g.phi.row_mut(w);
    for (j, &gj) in gt.iter().enumerate() {
        if gj != 0.0 {
            axpy(gj, params.psi.row(j), gw);
        }
    }
}

/// Neighbor-averaged posterior of `w` (zero vector for isolated nodes).
fn aggregated_membership(params: &ModelParams, g: &Graph, w: usize) -> Vec<f64> {
    let k = params.community_count();
    let mut acc = vec![0.0; k];
    let nbrs = g.neighbors(w);
    if nbrs.is_empty() {
        return acc;
    }
    let mut edge = vec![0.0; params.dim()];
    let mut logits = vec![0.0; k];
    let mut q = vec![0.0; k];
    for &c in nbrs {
        params.posterior_logits(w, c, &mut edge, &mut logits);
        math::softmax_into(&logits, &mut q);
        axpy(1.0, &q, &mut acc);
    }
    let n = nbrs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn aggregated_membership_backward(params: &ModelParams, g: &Graph, w: usize, upstream: &[f64], grads: &mut Gradients) {
    let k = params.community_count();
    let nbrs = g.neighbors(w);
    if nbrs.is_empty() {
        return;
    }
    let inv = 1.0 / nbrs.len() as f64;
    let scaled: Vec<f64> = upstream.iter().map(|x| x * inv).collect();
    let mut edge = vec![0.0; params.dim()];
    let mut logits = vec![0.0; k];
    let mut q = vec![0.0; k];
    let mut gs = vec![0.0; k];
    let mut du = vec![0.0; params.dim()];
    for &c in nbrs {
        params.posterior_logits(w, c, &mut edge, &mut logits);
        math::softmax_into(&logits, &mut q);
        gs.fill(0.0);
        softmax_backward(&q, &scaled, &mut gs);
        du.fill(0.0);
        for (j, &gj) in gs.iter().enumerate() {
            axpy(gj, &edge, grads.psi.row_mut(j));
            axpy(gj, params.psi.row(j), &mut du);
        }
        for ((gi, a), b) in grads.phi.row_mut(w).iter_mut().zip(&du).zip(params.phi.row(c)) {
            *gi += a * b;
        }
        for ((gi, a), b) in grads.phi.row_mut(c).iter_mut().zip(&du).zip(params.phi.row(w)) {
            *gi += a * b;
        }
    }
}

/// Batch-mean loss of `pairs` under `objective`.
pub fn total_loss<O: Objective + ?Sized>(
    objective: &mut O,
    params: &ModelParams,
    ctx: &TrainContext<'_>,
    pairs: &[Pair],
    noise: &mut dyn NoiseSource,
    options: LossOptions,
) -> LossComponents {
    objective.batch(params, ctx, pairs, noise, options, None)
}

/// Batch-mean loss and its analytic gradient.
pub fn compute_gradients<O: Objective + ?Sized>(
    objective: &mut O,
    params: &ModelParams,
    ctx: &TrainContext<'_>,
    pairs: &[Pair],
    noise: &mut dyn NoiseSource,
    options: LossOptions,
) -> (LossComponents, Gradients) {
    let mut grads = Gradients::zeros_like(params);
    let loss = objective.batch(params, ctx, pairs, noise, options, Some(&mut grads));
    (loss, grads)
}

/// Adam moments for all three tables. Each row stores its first moment
/// followed by its second moment.
#[derive(Debug, Clone)]
pub struct AdamState {
    moments: [Vec<f64>; 3],
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

const TABLES: [Table; 3] = [Table::Phi, Table::Varphi, Table::Psi];

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let shape = |t: Table| {
            let m = params.table(t);
            vec![0.0; 2 * m.rows() * m.cols()]
        };
        AdamState {
            moments: TABLES.map(shape),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// Bias-corrected Adam update. Rows with no gradient this step are left
/// untouched, including their moments.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let step_size = lr / (1.0 - b1.powi(t));
    let inv_c2 = 1.0 / (1.0 - b2.powi(t));
    for (i, table) in TABLES.into_iter().enumerate() {
        let param = params.table_mut(table);
        let d = param.cols();
        let rows = grads.table(table);
        for (n, (r, g)) in rows.iter().enumerate() {
            if let Some(&next) = rows.touched().get(n + 1) {
                math::prefetch(param.row(next));
                math::prefetch(&state.moments[i][2 * next * d..2 * (next + 1) * d]);
            }
            let (m, v) = state.moments[i][2 * r * d..2 * (r + 1) * d].split_at_mut(d);
            let x = param.row_mut(r);
            for (((xj, mj), vj), &gj) in x.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g) {
                *mj = b1 * *mj + (1.0 - b1) * gj;
                *vj = b2 * *vj + (1.0 - b2) * gj * gj;
                *xj -= step_size * *mj / ((*vj * inv_c2).sqrt() + eps);
            }
        }
    }
}

/// One recorded loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub recon: f64,
    pub kl: f64,
    pub reg: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub final_params: ModelParams,
    /// Parameters at the lowest recorded total loss.
    pub best_params: ModelParams,
    pub best_iteration: usize,
    pub history: Vec<LossRecord>,
}

impl TrainedModel {
    pub fn best_total(&self) -> f64 {
        self.history
            .iter()
            .find(|r| r.iteration == self.best_iteration)
            .map(|r| r.total)
            .unwrap_or(f64::INFINITY)
    }
}

/// Stepwise trainer over any [`Objective`].
pub struct Trainer<'g, O: Objective> {
    ctx: TrainContext<'g>,
    objective: O,
    config: TrainConfig,
    params: ModelParams,
    adam: AdamState,
    rng: ChaCha8Rng,
    grads: Gradients,
    eval_pairs: Vec<Pair>,
    batch: Vec<Pair>,
    iteration: usize,
    history: Vec<LossRecord>,
    best: Option<(usize, f64, ModelParams)>,
}

impl<'g, O: Objective> Trainer<'g, O> {
    pub fn new(graph: &'g Graph, config: &TrainConfig, objective: O) -> Result<Self> {
        config.validate()?;
        if graph.node_count() == 0 {
            return Err(Error::Config("graph has no nodes".into()));
        }
        let ctx = TrainContext::new(graph, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::random(
            graph.node_count(),
            objective.psi_rows(),
            config.dim,
            config.tau_at(0),
            &mut rng,
        );
        let eval_pairs = if graph.edge_count() > config.eval_sample_threshold {
            let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed ^ EVAL_SALT.rotate_left(17));
            (0..config.eval_sample_pairs)
                .map(|_| ctx.pairs[eval_rng.random_range(0..ctx.pairs.len())])
                .collect()
        } else {
            ctx.pairs.clone()
        };
        Ok(Trainer {
            adam: AdamState::new(&params),
            grads: Gradients::zeros_like(&params),
            ctx,
            objective,
            config: config.clone(),
            params,
            rng,
            eval_pairs,
            batch: Vec::new(),
            iteration: 0,
            history: Vec::new(),
            best: None,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn context(&self) -> &TrainContext<'g> {
        &self.ctx
    }

    fn fill_batch(&mut self) {
        let total = self.ctx.pairs.len();
        self.batch.clear();
        let b = self.config.batch_edges;
        if b == 0 || b >= total {
            self.batch.extend_from_slice(&self.ctx.pairs);
        } else {
            for _ in 0..b {
                let i = self.rng.random_range(0..total);
                self.batch.push(self.ctx.pairs[i]);
            }
        }
    }

    /// One optimizer step; returns the loss of the batch it stepped on.
    pub fn step(&mut self) -> Result<LossComponents> {
        let lr = lr_at(self.iteration, &self.config);
        self.params.tau = self.config.tau_at(self.iteration);
        self.fill_batch();
        self.grads.clear();
        let loss = {
            let mut noise = SampledNoise {
                rng: &mut self.rng,
                dist: &self.ctx.noise,
            };
            self.objective.batch(
                &self.params,
                &self.ctx,
                &self.batch,
                &mut noise,
                LossOptions::default(),
                Some(&mut self.grads),
            )
        };
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                detail: format!(
                    "recon={} kl={} reg={} at lr={lr:e}",
                    loss.recon, loss.kl, loss.reg
                ),
            });
        }
        adam_step(&mut self.params, &self.grads, &mut self.adam, lr);
        self.iteration += 1;
        Ok(loss)
    }

    /// Loss on the tracking pairs with a noise stream that is identical at
    /// every call, so records are comparable across iterations.
    pub fn evaluate(&mut self) -> LossComponents {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ EVAL_SALT);
        let mut noise = SampledNoise {
            rng: &mut rng,
            dist: &self.ctx.noise,
        };
        self.objective.batch(
            &self.params,
            &self.ctx,
            &self.eval_pairs,
            &mut noise,
            LossOptions::default(),
            None,
        )
    }

    fn record(&mut self) -> Result<()> {
        let loss = self.evaluate();
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                iteration: self.iteration,
                detail: format!("tracked loss {loss:?}"),
            });
        }
        self.history.push(LossRecord {
            iteration: self.iteration,
            recon: loss.recon,
            kl: loss.kl,
            reg: loss.reg,
            total: loss.total,
            lr: lr_at(self.iteration, &self.config),
        });
        let better = self.best.as_ref().is_none_or(|(_, t, _)| loss.total < *t);
        if better {
            self.best = Some((self.iteration, loss.total, self.params.clone()));
        }
        log::debug!("iteration {} total loss {:.6}", self.iteration, loss.total);
        Ok(())
    }

    /// Runs to `config.iters`, recording the tracked loss every `eval_every`
    /// iterations and after the last step.
    pub fn run(mut self) -> Result<TrainedModel> {
        while self.iteration < self.config.iters {
            if self.iteration.is_multiple_of(self.config.eval_every) {
                self.record()?;
            }
            self.step()?;
        }
        if self.history.last().is_none_or(|r| r.iteration != self.iteration) {
            self.record()?;
        }
        let (best_iteration, _, best_params) = self.best.take().expect("at least one record");
        Ok(TrainedModel {
            final_params: self.params,
            best_params,
            best_iteration,
            history: self.history,
        })
    }
}

/// Trains the flat model.
pub fn train(g: &Graph, config: &TrainConfig) -> Result<TrainedModel> {
    Trainer::new(g, config, FlatObjective::new(config.communities))?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::gumbel_softmax;

    fn cfg(k: usize) -> TrainConfig {
        TrainConfig {
            communities: k,
            dim: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learning_rate_schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(0, &c), 0.05);
        assert_eq!(lr_at(99, &c), 0.05);
        assert!((lr_at(100, &c) - 0.0495).abs() < 1e-15);
        assert!((lr_at(250, &c) - 0.049005).abs() < 1e-15);
    }

    #[test]
    fn kl_cases() {
        let p = MembershipVector(vec![0.5, 0.5]);
        assert_eq!(kl_categorical(&p, &p), 0.0);
        let q = MembershipVector(vec![1.0, 0.0]);
        assert!((kl_categorical(&q, &p) - 2f64.ln()).abs() < 1e-15);
        // p with a zero entry is floored, not infinite
        let z = MembershipVector(vec![0.0, 1.0]);
        assert!(kl_categorical(&p, &z).is_finite());
    }

    #[test]
    fn elbo_terms_single_community() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ModelParams::random(4, 1, 3, 1.0, &mut rng);
        let s = gumbel_softmax(&p.posterior_distribution(0, 1).unwrap(), 1.0, &[0.3]);
        let (recon, kl) = elbo_terms(&p, 0, 1, &s, None).unwrap();
        assert_eq!(kl, 0.0);
        assert_eq!(recon, p.decoder_distribution(0).unwrap()[1].ln());
    }

    #[test]
    fn elbo_terms_zero_params() {
        let p = ModelParams::zeros(5, 3, 2, 1.0);
        let s = gumbel_softmax(&p.posterior_distribution(0, 1).unwrap(), 1.0, &[0.0, 1.0, 0.0]);
        let (recon, kl) = elbo_terms(&p, 0, 1, &s, None).unwrap();
        assert!((recon - (1.0f64 / 5.0).ln()).abs() < 1e-15);
        assert!(kl.abs() < 1e-15);
    }

    #[test]
    fn smoothness_hand_case() {
        // triangle a-b-c: alpha(a, b) = 1/3; priors (1, 0) and (0, 1)
        let (g, _) = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut p = ModelParams::zeros(3, 2, 2, 1.0);
        p.psi.set(0, 0, 1.0);
        p.psi.set(1, 1, 1.0);
        p.phi.set(0, 0, 800.0);
        p.phi.set(1, 1, 800.0);
        let v = smoothness_penalty(&p, &g, &[(0, 1)], 100.0).unwrap();
        assert!((v - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(smoothness_penalty(&p, &g, &[(0, 1)], 0.0).unwrap(), 0.0);
        // identical priors everywhere
        let z = ModelParams::zeros(3, 2, 2, 1.0);
        assert_eq!(smoothness_penalty(&z, &g, &[(0, 1), (1, 2)], 100.0).unwrap(), 0.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ModelParams::zeros(1, 1, 1, 1.0);
        let mut state = AdamState::new(&p);
        let mut g = Gradients::zeros_like(&p);
        g.phi.row_mut(0)[0] = 1.0;
        adam_step(&mut p, &g, &mut state, 0.05);
        // m_hat = 1, v_hat = 1 -> step = 0.05 / (1 + 1e-8)
        assert!((p.phi.get(0, 0) + 0.05).abs() < 1e-9);
        assert_eq!(p.psi.get(0, 0), 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ModelParams::random(3, 2, 2, 1.0, &mut rng);
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let mut g = Gradients::zeros_like(&p);
        g.phi.row_mut(1);
        adam_step(&mut p, &g, &mut state, 0.05);
        assert_eq!(p, before);
    }

    #[test]
    fn bookkeeping_identity() {
        let (g, _) = crate::graph::generate_sbm(20, 2, 0.5, 0.1, 4).unwrap();
        let mut c = cfg(3);
        c.lambda = 100.0;
        let ctx = TrainContext::new(&g, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::random(20, 3, 4, 1.0, &mut rng);
        let mut noise = SampledNoise {
            rng: &mut rng,
            dist: &ctx.noise,
        };
        let loss = total_loss(&mut FlatObjective::new(3), &p, &ctx, &ctx.pairs, &mut noise, LossOptions::default());
        assert!((loss.total - (-loss.recon + loss.kl + loss.reg)).abs() < 1e-12);
        assert!(loss.reg > 0.0);
    }

    #[test]
    fn absent_nodes_get_zero_gradient() {
        // node 5 is isolated and never drawn as a negative
        let (g, _) = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)]).unwrap();
        let mut c = cfg(3);
        c.lambda = 10.0;
        c.decoder = DecoderMode::NegativeSampling;
        c.negatives = 2;
        let ctx = TrainContext::new(&g, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = ModelParams::random(6, 3, 4, 1.0, &mut rng);
        // pairs of edge (0, 1); jaccard terms touch only 0 and 1
        let batch = vec![ctx.pairs[0], ctx.pairs[1]];
        let mut noise = FixedNoise::new(
            vec![vec![0.1, -0.3, 0.5], vec![1.2, 0.0, -0.7]],
            vec![vec![2, 0], vec![1, 2]],
        );
        let (_, grads) = compute_gradients(&mut FlatObjective::new(3), &p, &ctx, &batch, &mut noise, LossOptions::default());
        for v in [3, 4, 5] {
            assert!(grads.phi.row(v).iter().all(|&x| x == 0.0));
            assert!(grads.varphi.row(v).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_iterations_return_initialization() {
        let (g, _) = crate::graph::generate_sbm(12, 2, 0.8, 0.1, 1).unwrap();
        let mut c = cfg(2);
        c.iters = 0;
        c.seed = 17;
        let m = train(&g, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let init = ModelParams::random(12, 2, 4, 1.0, &mut rng);
        assert_eq!(m.final_params, init);
        assert_eq!(m.best_params, init);
        assert_eq!(m.history.len(), 1);
    }

    #[test]
    fn best_checkpoint_is_minimum() {
        let (g, _) = crate::graph::generate_sbm(30, 2, 0.5, 0.05, 2).unwrap();
        let mut c = cfg(2);
        c.iters = 300;
        c.eval_every = 20;
        let m = train(&g, &c).unwrap();
        let min = m.history.iter().map(|r| r.total).fold(f64::INFINITY, f64::min);
        assert_eq!(m.best_total(), min);
        assert!(m.history.iter().all(|r| m.best_total() <= r.total));
    }

    #[test]
    fn invalid_config_rejected() {
        let (g, _) = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let mut c = cfg(0);
        assert!(matches!(train(&g, &c), Err(Error::Config(_))));
        c.communities = 2;
        c.decay = 1.5;
        assert!(matches!(train(&g, &c), Err(Error::Config(_))));
    }
}
