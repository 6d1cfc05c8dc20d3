//! Undirected simple graphs, community sets, negative-sampling noise, and
//! synthetic block-model generators.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;

use crate::error::{Error, Result};

/// Exponent applied to node degree in the noise distribution.
pub const NOISE_EXPONENT: f64 = 0.75;

/// Immutable undirected simple graph with dense node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

/// What the edge-list loader dropped on the way in.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a graph over `node_count` nodes labelled `"0"`, `"1"`, ... from
    /// index pairs. Self-loops and duplicates are dropped.
    pub fn from_edges(node_count: usize, pairs: &[(usize, usize)]) -> Result<(Self, LoadReport)> {
        let labels: Vec<String> = (0..node_count).map(|i| i.to_string()).collect();
        Self::build(labels, pairs.iter().copied())
    }

    fn build(
        labels: Vec<String>,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<(Self, LoadReport)> {
        let n = labels.len();
        let mut report = LoadReport::default();
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        let mut adjacency = vec![Vec::new(); n];
        for (a, b) in pairs {
            for x in [a, b] {
                if x >= n {
                    return Err(Error::NodeOutOfRange { index: x, count: n });
                }
            }
            if a == b {
                report.self_loops += 1;
                continue;
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                report.duplicates += 1;
                continue;
            }
            edges.push(key);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok((
            Graph {
                edges,
                adjacency,
                labels,
                index,
            },
            report,
        ))
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Undirected edges as `(low, high)` index pairs in insertion order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted neighbor indices of `w`.
    pub fn neighbors(&self, w: usize) -> &[usize] {
        &self.adjacency[w]
    }

    pub fn degree(&self, w: usize) -> usize {
        self.adjacency[w].len()
    }

    pub fn label(&self, w: usize) -> &str {
        &self.labels[w]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn check_node(&self, w: usize) -> Result<()> {
        if w < self.node_count() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                index: w,
                count: self.node_count(),
            })
        }
    }

    pub fn is_isolated(&self, w: usize) -> bool {
        self.adjacency[w].is_empty()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Hex SHA-256 over the label sequence; ties checkpoints to the graph
    /// they were trained on.
    pub fn id_map_hash(&self) -> String {
        id_map_hash(&self.labels)
    }

    /// Jaccard coefficient of the neighbor sets of `w` and `c` (each set
    /// excludes its own node). Zero when both sets are empty.
    pub fn jaccard_coefficient(&self, w: usize, c: usize) -> Result<f64> {
        self.check_node(w)?;
        self.check_node(c)?;
        Ok(jaccard_sorted(&self.adjacency[w], &self.adjacency[c]))
    }

    /// Writes the graph as a whitespace-separated edge list.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for &(a, b) in &self.edges {
            writeln!(out, "{}\t{}", self.labels[a], self.labels[b])?;
        }
        Ok(())
    }
}

pub fn id_map_hash(labels: &[String]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for l in labels {
        h.update(l.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

fn jaccard_sorted(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Parses a whitespace-separated edge list. Blank lines and `#` comments are
/// skipped; labels are assigned dense indices in first-seen order.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<(Graph, LoadReport)> {
    let mut labels = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pairs = Vec::new();
    let mut intern = |s: &str, labels: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(s) {
            return i;
        }
        let i = labels.len();
        labels.push(s.to_string());
        index.insert(s.to_string(), i);
        i
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected two node labels, found {}", tokens.len()),
            });
        }
        let a = intern(tokens[0], &mut labels);
        let b = intern(tokens[1], &mut labels);
        pairs.push((a, b));
    }
    let (g, report) = Graph::build(labels, pairs)?;
    if report.self_loops > 0 {
        log::info!("dropped {} self-loop(s)", report.self_loops);
    }
    if report.duplicates > 0 {
        log::info!("dropped {} duplicate edge(s)", report.duplicates);
    }
    Ok((g, report))
}

/// Communities as node sets, with the inverse per-node membership kept in sync.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunitySet {
    members: Vec<Vec<usize>>,
    membership: Vec<Vec<usize>>,
}

impl CommunitySet {
    /// Builds from per-community member lists over `node_count` nodes.
    /// Member lists are sorted and deduplicated.
    pub fn from_members(node_count: usize, members: Vec<Vec<usize>>) -> Result<Self> {
        let mut members = members;
        let mut membership = vec![Vec::new(); node_count];
        for (k, list) in members.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &v in list.iter() {
                if v >= node_count {
                    return Err(Error::NodeOutOfRange {
                        index: v,
                        count: node_count,
                    });
                }
                membership[v].push(k);
            }
        }
        Ok(CommunitySet {
            members,
            membership,
        })
    }

    /// One community per node; `None` leaves the node unassigned.
    pub fn from_assignment(k: usize, assignment: &[Option<usize>]) -> Result<Self> {
        let mut members = vec![Vec::new(); k];
        for (v, a) in assignment.iter().enumerate() {
            if let Some(c) = *a {
                if c >= k {
                    return Err(Error::CommunityOutOfRange { index: c, count: k });
                }
                members[c].push(v);
            }
        }
        Self::from_members(assignment.len(), members)
    }

    /// Number of communities (including empty ones).
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn node_count(&self) -> usize {
        self.membership.len()
    }

    pub fn members(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn membership(&self, v: usize) -> &[usize] {
        &self.membership[v]
    }

    /// True when no node belongs to more than one community.
    pub fn is_nonoverlapping(&self) -> bool {
        self.membership.iter().all(|m| m.len() <= 1)
    }

    pub fn unassigned_count(&self) -> usize {
        self.membership.iter().filter(|m| m.is_empty()).count()
    }

    /// Per-node single community, or `Error::Overlapping`.
    pub fn assignment(&self) -> Result<Vec<Option<usize>>> {
        self.membership
            .iter()
            .map(|m| match m.len() {
                0 => Ok(None),
                1 => Ok(Some(m[0])),
                _ => Err(Error::Overlapping),
            })
            .collect()
    }

    /// Non-empty communities as sorted node lists.
    pub fn nonempty(&self) -> impl Iterator<Item = &[usize]> {
        self.members
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| m.as_slice())
    }

    /// Writes one community per line using the graph's external labels.
    /// Empty communities are skipped.
    pub fn write_snap<W: Write>(&self, g: &Graph, mut out: W) -> Result<()> {
        for list in self.nonempty() {
            let line: Vec<&str> = list.iter().map(|&v| g.label(v)).collect();
            writeln!(out, "{}", line.join("\t"))?;
        }
        Ok(())
    }
}

/// Ground-truth line layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommunityFormat {
    /// Whitespace-separated member labels.
    Snap,
    /// A leading community name followed by member labels (ego-network circles).
    Circles,
}

/// Reads a community file against `g`'s label map. Labels unknown to the
/// graph are skipped; the count of skipped label occurrences is returned.
pub fn load_communities<R: BufRead>(
    reader: R,
    g: &Graph,
    format: CommunityFormat,
) -> Result<(CommunitySet, usize)> {
    let mut members = Vec::new();
    let mut unknown = 0;
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let skip = usize::from(format == CommunityFormat::Circles);
        let mut list = Vec::new();
        for tok in trimmed.split_whitespace().skip(skip) {
            match g.index_of(tok) {
                Some(i) => list.push(i),
                None => unknown += 1,
            }
        }
        members.push(list);
    }
    Ok((CommunitySet::from_members(g.node_count(), members)?, unknown))
}

/// Sampling distribution over nodes with weight `deg^0.75`, drawn in
/// constant time from an alias table. Zero-degree nodes are never drawn.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    nodes: Vec<usize>,
    weights: Vec<f64>,
    total: f64,
    alias: WeightedAliasIndex<f64>,
}

impl NoiseDistribution {
    pub fn new(g: &Graph) -> Result<Self> {
        if g.edge_count() == 0 {
            return Err(Error::NoEdges);
        }
        let nodes: Vec<usize> = (0..g.node_count()).filter(|&v| g.degree(v) > 0).collect();
        let weights: Vec<f64> = nodes.iter().map(|&v| (g.degree(v) as f64).powf(NOISE_EXPONENT)).collect();
        let total = weights.iter().sum();
        let alias = WeightedAliasIndex::new(weights.clone()).map_err(|e| Error::Config(format!("noise table: {e}")))?;
        Ok(NoiseDistribution {
            nodes,
            weights,
            total,
            alias,
        })
    }

    /// Sum of unnormalized weights.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Normalized probability of drawing node `v`.
    pub fn probability(&self, v: usize) -> f64 {
        match self.nodes.binary_search(&v) {
            Ok(i) => self.weights[i] / self.total,
            Err(_) => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.nodes[self.alias.sample(rng)]
    }
}

/// Draws `m` independent noise nodes.
pub fn sample_negatives<R: Rng + ?Sized>(
    g: &Graph,
    noise: &NoiseDistribution,
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if g.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    Ok((0..m).map(|_| noise.sample(rng)).collect())
}

/// Splits `n` items into `k` contiguous near-equal blocks; returns the block of each item.
pub fn block_assignment(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    let mut out = Vec::with_capacity(n);
    for b in 0..k {
        let size = base + usize::from(b < extra);
        out.extend(std::iter::repeat_n(b, size));
    }
    out
}

/// Planted partition graph: within-block pairs link with `p_in`, cross-block
/// pairs with `p_out`.
pub fn generate_sbm(
    n: usize,
    k: usize,
    p_in: f64,
    p_out: f64,
    seed: u64,
) -> Result<(Graph, CommunitySet)> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=p_in).contains(&p_out) {
        return Err(Error::Config(format!(
            "need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let (g, mut levels) = generate_hierarchical_sbm(n, &[k], &[p_out, p_in], seed)?;
    Ok((g, levels.pop().expect("one level")))
}

/// Nested block model. `branching[l]` children per node at level `l`;
/// `probs[l]` is the link probability for a pair whose deepest shared block is
/// at depth `l` (0 = only the root shared, `branching.len()` = same leaf block).
/// Returns the graph and the planted partition at each depth 1..=D.
pub fn generate_hierarchical_sbm(
    n: usize,
    branching: &[usize],
    probs: &[f64],
    seed: u64,
) -> Result<(Graph, Vec<CommunitySet>)> {
    if branching.is_empty() || branching.contains(&0) {
        return Err(Error::Config("branching factors must be positive".into()));
    }
    if probs.len() != branching.len() + 1 {
        return Err(Error::Config(format!(
            "expected {} link probabilities, got {}",
            branching.len() + 1,
            probs.len()
        )));
    }
    if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Config("link probabilities must lie in [0, 1]".into()));
    }
    let leaves: usize = branching.iter().product();
    if leaves > n {
        return Err(Error::Config(format!(
            "{leaves} blocks requested for only {n} nodes"
        )));
    }
    let leaf_of = block_assignment(n, leaves);
    // ancestor at depth l (1-based) of a leaf block, via mixed radix
    let ancestor = |leaf: usize, depth: usize| -> usize {
        let below: usize = branching[depth..].iter().product();
        leaf / below
    };
    let mut starts = vec![0usize; leaves + 1];
    for &b in &leaf_of {
        starts[b + 1] += 1;
    }
    for b in 0..leaves {
        starts[b + 1] += starts[b];
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for a in 0..leaves {
        for b in a..leaves {
            let shared = (1..=branching.len())
                .take_while(|&d| ancestor(a, d) == ancestor(b, d))
                .count();
            let p = probs[shared];
            let (sa, na) = (starts[a], starts[a + 1] - starts[a]);
            let (sb, nb) = (starts[b], starts[b + 1] - starts[b]);
            if a == b {
                let total = na * na.saturating_sub(1) / 2;
                for idx in bernoulli_indices(total, p, &mut rng) {
                    let (i, j) = triangle_pair(idx);
                    pairs.push((sa + i, sa + j));
                }
            } else {
                for idx in bernoulli_indices(na * nb, p, &mut rng) {
                    pairs.push((sa + idx / nb, sb + idx % nb));
                }
            }
        }
    }
    let (g, _) = Graph::from_edges(n, &pairs)?;
    let mut levels = Vec::with_capacity(branching.len());
    for depth in 1..=branching.len() {
        let count: usize = branching[..depth].iter().product();
        let assignment: Vec<Option<usize>> =
            leaf_of.iter().map(|&l| Some(ancestor(l, depth))).collect();
        levels.push(CommunitySet::from_assignment(count, &assignment)?);
    }
    Ok((g, levels))
}

/// Indices in `0..total` kept by independent Bernoulli(p) trials, generated
/// with geometric skips so sparse blocks cost time proportional to the hits.
fn bernoulli_indices<R: Rng>(total: usize, p: f64, rng: &mut R) -> Vec<usize> {
    if p <= 0.0 || total == 0 {
        return Vec::new();
    }
    if p >= 1.0 {
        return (0..total).collect();
    }
    let log_q = (1.0 - p).ln();
    let mut out = Vec::new();
    let mut pos: usize = 0;
    loop {
        // 1 - U lies in (0, 1]
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / log_q).floor();
        if !skip.is_finite() || skip >= (total - pos) as f64 {
            break;
        }
        pos += skip as usize;
        out.push(pos);
        pos += 1;
        if pos >= total {
            break;
        }
    }
    out
}

/// Maps a linear index over `{(i, j): i < j}` (ordered by j, then i) to the pair.
fn triangle_pair(idx: usize) -> (usize, usize) {
    // j is the largest value with j*(j-1)/2 <= idx
    let mut j = ((1.0 + (1.0 + 8.0 * idx as f64).sqrt()) / 2.0) as usize;
    while j * (j - 1) / 2 > idx {
        j -= 1;
    }
    while (j + 1) * j / 2 <= idx {
        j += 1;
    }
    (idx - j * (j - 1) / 2, j)
}
