use proptest::prelude::*;
use vgraph_core::graph::{load_edge_list, sample_negatives, CommunitySet, Graph, NoiseDistribution};
use vgraph_core::metrics::{nmi, overlapping_f1, overlapping_jaccard};
use vgraph_core::model::{assign, AssignMode, Matrix, MembershipVector, ModelParams};
use vgraph_core::training::kl_categorical;

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0..1.0f64, rows * cols)
        .prop_map(move |v| Matrix::from_vec(rows, cols, v.into_iter().map(|x| x * scale).collect()).unwrap())
}

fn params(nodes: usize, k: usize, d: usize) -> impl Strategy<Value = ModelParams> {
    prop_oneof![Just(1.0), Just(10.0), Just(31.0)].prop_flat_map(move |scale| {
        (matrix(nodes, d, scale), matrix(nodes, d, scale), matrix(k, d, scale)).prop_map(|(phi, varphi, psi)| ModelParams {
            phi,
            varphi,
            psi,
            tau: 1.0,
        })
    })
}

fn graph(n: usize) -> impl Strategy<Value = Graph> {
    prop::collection::vec((0..n, 0..n), 1..3 * n).prop_filter_map("needs an edge", move |pairs| {
        let (g, _) = Graph::from_edges(n, &pairs).ok()?;
        (g.edge_count() > 0).then_some(g)
    })
}

fn partition(n: usize, k: usize) -> impl Strategy<Value = CommunitySet> {
    prop::collection::vec(0..k, n).prop_map(move |a| {
        let a: Vec<Option<usize>> = a.into_iter().map(Some).collect();
        CommunitySet::from_assignment(k, &a).unwrap()
    })
}

fn cover(n: usize, k: usize) -> impl Strategy<Value = CommunitySet> {
    prop::collection::vec(prop::collection::vec(0..n, 1..n), 1..=k).prop_map(move |mut sets| {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        CommunitySet::from_members(n, sets).unwrap()
    })
}

fn normalized(v: &[f64]) -> bool {
    v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distributions_are_normalized(p in params(6, 4, 5), w in 0..6usize, c in 0..6usize) {
        prop_assert!(normalized(p.prior_distribution(w).unwrap().probs()));
        prop_assert!(normalized(&p.decoder_distribution(w % 4).unwrap()));
        let q = p.posterior_distribution(w, c).unwrap();
        prop_assert!(normalized(q.probs()));
        prop_assert_eq!(q, p.posterior_distribution(c, w).unwrap());
    }

    #[test]
    fn memberships_are_normalized(p in params(8, 3, 4), g in graph(8)) {
        for w in 0..8 {
            if !g.is_isolated(w) {
                prop_assert!(normalized(p.node_membership(&g, w).unwrap().probs()));
            }
        }
    }

    #[test]
    fn kl_is_nonnegative(a in prop::collection::vec(-30.0..30.0f64, 5), b in prop::collection::vec(-30.0..30.0f64, 5)) {
        let q = MembershipVector(vgraph_core::math::softmax(&a));
        let p = MembershipVector(vgraph_core::math::softmax(&b));
        prop_assert!(kl_categorical(&q, &p) >= 0.0);
        prop_assert!(kl_categorical(&q, &q).abs() < 1e-12);
    }

    #[test]
    fn nmi_range_and_symmetry(a in partition(20, 4), b in partition(20, 5)) {
        let x = nmi(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - nmi(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((nmi(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_scores_range_and_symmetry(a in cover(20, 5), b in cover(20, 5)) {
        for f in [overlapping_f1, overlapping_jaccard] {
            let x = f(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert!((x - f(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert_eq!(f(&a, &a).unwrap(), 1.0);
            let same: std::collections::BTreeSet<&[usize]> = a.nonempty().collect();
            let other: std::collections::BTreeSet<&[usize]> = b.nonempty().collect();
            prop_assert_eq!(x == 1.0, same == other);
        }
    }

    #[test]
    fn jaccard_is_symmetric(g in graph(10), w in 0..10usize, c in 0..10usize) {
        prop_assert_eq!(g.jaccard_coefficient(w, c).unwrap(), g.jaccard_coefficient(c, w).unwrap());
    }

    #[test]
    fn adjacency_is_symmetric_and_round_trips(g in graph(12)) {
        for &(a, b) in g.edges() {
            prop_assert!(g.neighbors(a).contains(&b) && g.neighbors(b).contains(&a));
        }
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let (back, _) = load_edge_list(buf.as_slice()).unwrap();
        prop_assert_eq!(back.edge_count(), g.edge_count());
        for &(a, b) in g.edges() {
            let (x, y) = (back.index_of(g.label(a)).unwrap(), back.index_of(g.label(b)).unwrap());
            prop_assert!(back.has_edge(x, y));
        }
    }

    #[test]
    fn negatives_are_in_range(g in graph(9), seed in any::<u64>(), m in 0..20usize) {
        use rand::SeedableRng;
        let nd = NoiseDistribution::new(&g).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let negs = sample_negatives(&g, &nd, m, &mut rng).unwrap();
        prop_assert_eq!(negs.len(), m);
        prop_assert!(negs.iter().all(|&v| v < g.node_count() && !g.is_isolated(v)));
    }
}

/// When every edge's posterior is one-hot on a community fixed per
/// component, overlapping assignment collapses to the partition.
#[test]
fn overlapping_reduces_to_partition_for_one_hot_posteriors() {
    let (g, _) = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
    let mut phi = Matrix::zeros(6, 2);
    for v in 0..6 {
        phi.set(v, usize::from(v >= 3), 1.0);
    }
    let psi = Matrix::from_vec(2, 2, vec![50.0, 0.0, 0.0, 50.0]).unwrap();
    let p = ModelParams {
        varphi: phi.clone(),
        phi,
        psi,
        tau: 1.0,
    };
    let over = assign(&p, &g, AssignMode::Overlapping).unwrap();
    let flat = assign(&p, &g, AssignMode::Nonoverlapping).unwrap();
    assert_eq!(over, flat);
    assert_eq!(flat.members(), &[vec![0, 1, 2], vec![3, 4, 5]]);
}
