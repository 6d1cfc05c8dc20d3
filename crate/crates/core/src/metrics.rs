//! Community and embedding quality scores.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{CommunitySet, Graph};
use crate::math;
use crate::model::Matrix;

/// Normalized mutual information between two partitions, normalized by the
/// arithmetic mean of the entropies. Only nodes assigned in both partitions
/// count. Two single-cluster partitions score 1.
pub fn nmi(a: &CommunitySet, b: &CommunitySet) -> Result<f64> {
    let la = a.assignment()?;
    let lb = b.assignment()?;
    if la.len() != lb.len() {
        return Err(Error::Shape(format!(
            "partitions over {} and {} nodes",
            la.len(),
            lb.len()
        )));
    }
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ca: HashMap<usize, f64> = HashMap::new();
    let mut cb: HashMap<usize, f64> = HashMap::new();
    let mut n = 0.0;
    for (x, y) in la.iter().zip(&lb) {
        if let (Some(x), Some(y)) = (x, y) {
            *joint.entry((*x, *y)).or_default() += 1.0;
            *ca.entry(*x).or_default() += 1.0;
            *cb.entry(*y).or_default() += 1.0;
            n += 1.0;
        }
    }
    if n == 0.0 {
        return Err(Error::EmptyCommunities);
    }
    let entropy = |counts: &HashMap<usize, f64>| -> f64 {
        let mut keys: Vec<_> = counts.keys().copied().collect();
        keys.sort_unstable();
        -keys
            .iter()
            .map(|k| {
                let p = counts[k] / n;
                p * p.ln()
            })
            .sum::<f64>()
    };
    let ha = entropy(&ca);
    let hb = entropy(&cb);
    let mut cells: Vec<_> = joint.into_iter().collect();
    cells.sort_unstable_by_key(|(k, _)| *k);
    let mut mi = 0.0;
    for ((x, y), nxy) in cells {
        mi += nxy / n * (n * nxy / (ca[&x] * cb[&y])).ln();
    }
    let denom = 0.5 * (ha + hb);
    if denom <= 0.0 {
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Newman modularity of a partition. Unassigned nodes contribute no community
/// terms; `m` still counts every edge.
pub fn modularity(g: &Graph, p: &CommunitySet) -> Result<f64> {
    if g.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    let assignment = p.assignment()?;
    if assignment.len() != g.node_count() {
        return Err(Error::Shape("partition and graph node counts differ".into()));
    }
    let m = g.edge_count() as f64;
    let k = p.k();
    let mut internal = vec![0.0; k];
    let mut degree = vec![0.0; k];
    for (v, a) in assignment.iter().enumerate() {
        if let Some(c) = a {
            degree[*c] += g.degree(v) as f64;
        }
    }
    for &(a, b) in g.edges() {
        if let (Some(x), Some(y)) = (assignment[a], assignment[b]) {
            if x == y {
                internal[x] += 1.0;
            }
        }
    }
    Ok((0..k)
        .map(|c| internal[c] / m - (degree[c] / (2.0 * m)).powi(2))
        .sum())
}

fn overlap(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn f1_score(a: &[usize], b: &[usize]) -> f64 {
    let i = overlap(a, b) as f64;
    2.0 * i / (a.len() + b.len()) as f64
}

fn jaccard_score(a: &[usize], b: &[usize]) -> f64 {
    let i = overlap(a, b);
    i as f64 / (a.len() + b.len() - i) as f64
}

/// Symmetric best-match average of `score` between two families of node
/// sets. Empty communities are ignored on both sides.
fn best_match(pred: &CommunitySet, truth: &CommunitySet, score: fn(&[usize], &[usize]) -> f64) -> Result<f64> {
    let p: Vec<&[usize]> = pred.nonempty().collect();
    let t: Vec<&[usize]> = truth.nonempty().collect();
    if p.is_empty() || t.is_empty() {
        return Err(Error::EmptyCommunities);
    }
    let side = |from: &[&[usize]], to: &[&[usize]]| -> f64 {
        from.iter()
            .map(|a| to.iter().map(|b| score(a, b)).fold(0.0, f64::max))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (side(&t, &p) + side(&p, &t)))
}

/// Best-match F1 between predicted and ground-truth communities.
pub fn overlapping_f1(pred: &CommunitySet, truth: &CommunitySet) -> Result<f64> {
    best_match(pred, truth, f1_score)
}

/// Best-match Jaccard similarity between predicted and ground-truth communities.
pub fn overlapping_jaccard(pred: &CommunitySet, truth: &CommunitySet) -> Result<f64> {
    best_match(pred, truth, jaccard_score)
}

/// Single-label class per node; `None` for unlabeled nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<Option<usize>>,
    classes: usize,
}

impl LabelSet {
    pub fn new(labels: Vec<Option<usize>>) -> Self {
        let classes = labels.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        LabelSet { labels, classes }
    }

    pub fn get(&self, v: usize) -> Option<usize> {
        self.labels.get(v).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationScores {
    pub micro_f1: f64,
    pub macro_f1: f64,
}

const L2_STRENGTH: f64 = 1.0;
const MAX_EPOCHS: usize = 5000;
const GRAD_TOL: f64 = 1e-6;

/// L2-penalized logistic regression for one binary target (unpenalized intercept).
/// Full-batch gradient descent with a step from a Lipschitz bound.
fn fit_binary(x: &[&[f64]], y: &[f64]) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let lipschitz = 0.25 * x.iter().map(|r| 1.0 + math::dot(r, r)).sum::<f64>() + L2_STRENGTH;
    let step = 1.0 / lipschitz;
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut gw = vec![0.0; d];
    for _ in 0..MAX_EPOCHS {
        gw.iter_mut().zip(&w).for_each(|(g, wi)| *g = L2_STRENGTH * wi);
        let mut gb = 0.0;
        for (row, &yi) in x.iter().zip(y) {
            let r = math::sigmoid(math::dot(row, &w) + b) - yi;
            math::axpy(r, row, &mut gw);
            gb += r;
        }
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < GRAD_TOL {
            break;
        }
        math::axpy(-step, &gw, &mut w);
        b -= step * gb;
    }
    (w, b)
}

/// One-vs-rest logistic regression on a seeded `train_fraction` split of the
/// labeled nodes; Micro/Macro-F1 on the rest. Macro-F1 averages over classes
/// present in the test split.
pub fn classify_nodes(embeddings: &Matrix, labels: &LabelSet, train_fraction: f64, seed: u64) -> Result<ClassificationScores> {
    if labels.len() != embeddings.rows() {
        return Err(Error::Shape(format!(
            "{} labels for {} embedding rows",
            labels.len(),
            embeddings.rows()
        )));
    }
    let mut nodes: Vec<usize> = (0..labels.len()).filter(|&v| labels.get(v).is_some()).collect();
    nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((nodes.len() as f64) * train_fraction).round() as usize;
    let (train, test) = nodes.split_at(n_train.min(nodes.len()));
    if test.is_empty() {
        return Err(Error::Config("no labeled nodes left for testing".into()));
    }
    let mut train_classes: Vec<usize> = train.iter().filter_map(|&v| labels.get(v)).collect();
    train_classes.sort_unstable();
    train_classes.dedup();
    if train_classes.len() < 2 {
        return Err(Error::Config("need at least two classes in the training split".into()));
    }
    let x: Vec<&[f64]> = train.iter().map(|&v| embeddings.row(v)).collect();
    let models: Vec<(usize, Vec<f64>, f64)> = train_classes
        .iter()
        .map(|&cls| {
            let y: Vec<f64> = train
                .iter()
                .map(|&v| if labels.get(v) == Some(cls) { 1.0 } else { 0.0 })
                .collect();
            let (w, b) = fit_binary(&x, &y);
            (cls, w, b)
        })
        .collect();

    let k = labels.class_count();
    let (mut tp, mut fp, mut fneg) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
    let mut correct = 0;
    for &v in test {
        let row = embeddings.row(v);
        let scores: Vec<f64> = models.iter().map(|(_, w, b)| math::dot(row, w) + b).collect();
        let pred = models[math::argmax(&scores)].0;
        let truth = labels.get(v).expect("labeled");
        if pred == truth {
            correct += 1;
            tp[truth] += 1;
        } else {
            fp[pred] += 1;
            fneg[truth] += 1;
        }
    }
    let micro_f1 = correct as f64 / test.len() as f64;
    let test_classes: Vec<usize> = (0..k).filter(|&c| tp[c] + fneg[c] > 0).collect();
    if test_classes.iter().any(|c| !train_classes.contains(c)) {
        log::warn!("some test classes are absent from the training split");
    }
    let macro_f1 = test_classes
        .iter()
        .map(|&c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum::<f64>()
        / test_classes.len() as f64;
    Ok(ClassificationScores { micro_f1, macro_f1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(n: usize, blocks: &[&[usize]]) -> CommunitySet {
        CommunitySet::from_members(n, blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    #[test]
    fn nmi_hand_cases() {
        let a = part(4, &[&[0, 1], &[2, 3]]);
        assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let crossed = part(4, &[&[0, 2], &[1, 3]]);
        assert!(nmi(&a, &crossed).unwrap().abs() < 1e-12);
        let one = part(4, &[&[0, 1, 2, 3]]);
        assert!(nmi(&one, &a).unwrap().abs() < 1e-12);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        let overlapping = part(4, &[&[0, 1], &[1, 2, 3]]);
        assert!(matches!(nmi(&overlapping, &a), Err(Error::Overlapping)));
    }

    #[test]
    fn modularity_hand_cases() {
        let (g, _) = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
        let split = part(6, &[&[0, 1, 2], &[3, 4, 5]]);
        assert!((modularity(&g, &split).unwrap() - 0.5).abs() < 1e-12);
        let one = part(6, &[&[0, 1, 2, 3, 4, 5]]);
        assert!(modularity(&g, &one).unwrap().abs() < 1e-12);
        let (empty, _) = Graph::from_edges(2, &[]).unwrap();
        assert!(modularity(&empty, &part(2, &[&[0, 1]])).is_err());
    }

    #[test]
    fn overlapping_hand_case() {
        // truth {A,B},{C}; pred {A,B,C}
        let truth = part(3, &[&[0, 1], &[2]]);
        let pred = part(3, &[&[0, 1, 2]]);
        // F1 table: 0.8, 0.5 -> (0.65 + 0.8) / 2
        assert!((overlapping_f1(&pred, &truth).unwrap() - 0.725).abs() < 1e-12);
        // Jaccard table: 2/3, 1/3 -> (1/2 + 2/3) / 2
        assert!((overlapping_jaccard(&pred, &truth).unwrap() - 7.0 / 12.0).abs() < 1e-12);
        assert_eq!(overlapping_f1(&truth, &truth).unwrap(), 1.0);
        let disjoint = part(6, &[&[3, 4], &[5]]);
        let truth6 = part(6, &[&[0, 1], &[2]]);
        assert_eq!(overlapping_f1(&disjoint, &truth6).unwrap(), 0.0);
        assert_eq!(overlapping_jaccard(&disjoint, &truth6).unwrap(), 0.0);
        let empty = part(3, &[&[]]);
        assert!(matches!(overlapping_f1(&empty, &truth), Err(Error::EmptyCommunities)));
    }

    #[test]
    fn separable_classification() {
        let n = 40;
        let labels: Vec<Option<usize>> = (0..n).map(|v| Some(v % 4)).collect();
        let mut emb = Matrix::zeros(n, 4);
        for v in 0..n {
            emb.set(v, v % 4, 1.0);
        }
        let s = classify_nodes(&emb, &LabelSet::new(labels.clone()), 0.7, 3).unwrap();
        assert_eq!(s.micro_f1, 1.0);
        assert_eq!(s.macro_f1, 1.0);
        let again = classify_nodes(&emb, &LabelSet::new(labels), 0.7, 3).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn constant_embeddings_predict_training_majority() {
        let n = 50;
        let labels: Vec<Option<usize>> = (0..n).map(|v| Some(usize::from(v % 5 == 0) + usize::from(v % 7 == 0))).collect();
        let set = LabelSet::new(labels.clone());
        let emb = Matrix::from_vec(n, 2, vec![0.5; 2 * n]).unwrap();
        let seed = 12;
        let s = classify_nodes(&emb, &set, 0.7, seed).unwrap();
        // recompute the split and count the majority baseline
        let mut nodes: Vec<usize> = (0..n).collect();
        nodes.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (train, test) = nodes.split_at(35);
        let mut counts = [0usize; 3];
        for &v in train {
            counts[labels[v].unwrap()] += 1;
        }
        let majority = (0..3).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
        let expected = test.iter().filter(|&&v| labels[v] == Some(majority)).count() as f64 / test.len() as f64;
        assert!((s.micro_f1 - expected).abs() < 1e-12);
    }

    #[test]
    fn classification_needs_two_classes() {
        let emb = Matrix::zeros(10, 2);
        let set = LabelSet::new(vec![Some(0); 10]);
        assert!(classify_nodes(&emb, &set, 0.7, 0).is_err());
    }
}
