//! Acceptance gate. Runs every criterion at its stated tolerance and prints one
//! line per criterion.
//!
//! Pass criterion numbers as arguments to run a subset, e.g.
//! `cargo test --test acceptance -- 4 9`. Runtime budgets depend on the host,
//! so a missed budget is reported as FAIL but only aborts the run when
//! `VGRAPH_STRICT_TIMING=1`. Criterion 5 needs the SNAP ego networks under
//! `$VGRAPH_DATA_DIR/facebook/`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vgraph_core::graph::{
    generate_hierarchical_sbm, generate_sbm, load_communities, load_edge_list, CommunityFormat, CommunitySet, Graph,
};
use vgraph_core::hierarchy::{assign_hierarchical, path_prior, train_hierarchical, CommunityTree, HierarchicalObjective};
use vgraph_core::io::{write_embeddings, write_loss_csv, write_memberships, Checkpoint};
use vgraph_core::metrics::{modularity, nmi, overlapping_f1, overlapping_jaccard};
use vgraph_core::model::{all_memberships, assign, AssignMode, ModelParams, Table};
use vgraph_core::oracle;
use vgraph_core::training::{
    compute_gradients, kl_categorical, total_loss, train, DecoderMode, FixedNoise, FlatObjective, Forward, LossOptions,
    Objective, SmoothnessTarget, Terms, TrainConfig, TrainContext, Trainer,
};

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Report {
    status: Status,
    detail: String,
    /// Set when the only failure is a runtime budget.
    timing_only: bool,
}

impl Report {
    fn check(ok: bool, detail: String) -> Self {
        Report {
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
            timing_only: false,
        }
    }

    /// Quality check `ok` plus a runtime budget.
    fn timed(ok: bool, elapsed: Duration, budget: Duration, detail: String) -> Self {
        let in_time = elapsed < budget;
        let detail = format!("{detail}; {:.1}s of {:.0}s budget", elapsed.as_secs_f64(), budget.as_secs_f64());
        Report {
            status: if ok && in_time { Status::Pass } else { Status::Fail },
            detail,
            timing_only: ok && !in_time,
        }
    }
}

fn random_params(rng: &mut ChaCha8Rng, v: usize, k: usize, d: usize, scale: f64) -> ModelParams {
    let mut p = ModelParams::random(v, k, d, 0.5 + rng.random::<f64>(), rng);
    for t in [Table::Phi, Table::Varphi, Table::Psi] {
        for x in p.table_mut(t).as_mut_slice() {
            *x = scale * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    p
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    loop {
        let mut pairs = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random::<f64>() < p {
                    pairs.push((a, b));
                }
            }
        }
        let (g, _) = Graph::from_edges(n, &pairs).unwrap();
        if g.edge_count() >= (n * (n - 1) / 2).min(3) {
            return g;
        }
    }
}

fn normalized(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && *x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

fn distributions() -> Report {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let (mut bad, mut max_logit, mut vectors) = (0usize, 0.0f64, 0usize);
    let mut min_kl = f64::INFINITY;
    for _ in 0..1000 {
        let v = rng.random_range(2..=12);
        let k = rng.random_range(1..=8);
        let d = rng.random_range(1..=6);
        // entries up to 10^1.5 in magnitude, so logits reach about 10^3
        let scale = 10f64.powf(rng.random_range(-2.0..1.5));
        let p = random_params(&mut rng, v, k, d, scale);
        let g = random_graph(&mut rng, v, 0.4);
        let mut logits = vec![0.0; k];
        for w in 0..v {
            p.prior_logits(w, &mut logits);
            max_logit = logits.iter().fold(max_logit, |m, x| m.max(x.abs()));
            bad += usize::from(!normalized(p.prior_distribution(w).unwrap().probs()));
            vectors += 1;
            if !g.is_isolated(w) {
                bad += usize::from(!normalized(p.node_membership(&g, w).unwrap().probs()));
                vectors += 1;
            }
        }
        for j in 0..k {
            bad += usize::from(!normalized(&p.decoder_distribution(j).unwrap()));
            vectors += 1;
        }
        for _ in 0..10 {
            let (w, c) = (rng.random_range(0..v), rng.random_range(0..v));
            let q = p.posterior_distribution(w, c).unwrap();
            bad += usize::from(!normalized(q.probs()));
            vectors += 1;
            let kl = kl_categorical(&q, &p.prior_distribution(w).unwrap());
            min_kl = min_kl.min(kl);
            bad += usize::from(kl.is_nan() || kl < 0.0);
        }
        if k >= 2 && k % 2 == 0 {
            let tree = CommunityTree::new(&[2, k / 2]).unwrap();
            let tp = random_params(&mut rng, v, tree.node_count(), d, scale);
            bad += usize::from(!normalized(&path_prior(&tp, &tree, 0).unwrap()));
            vectors += 1;
        }
    }
    let ok = bad == 0 && max_logit >= 500.0;
    Report::timed(
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        format!("{vectors} vectors, {bad} violations, max |logit| {max_logit:.0}, min KL {min_kl:.2e}"),
    )
}

fn bound() -> Report {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let (mut worst_excess, mut worst_gap) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..100 {
        let v = rng.random_range(2..=50);
        let k = rng.random_range(1..=8);
        let d = rng.random_range(1..=6);
        let scale = rng.random_range(0.2..2.0);
        let p = random_params(&mut rng, v, k, d, scale);
        let (w, c) = (rng.random_range(0..v), rng.random_range(0..v));
        let ll = oracle::exact_edge_loglik(&p, w, c);
        worst_excess = worst_excess.max(oracle::exact_elbo(&p, w, c) - ll);
        let tight = oracle::elbo_with(&p, w, c, &oracle::bayes_posterior(&p, w, c));
        worst_gap = worst_gap.max((tight - ll).abs());
    }
    let ok = worst_excess <= 1e-12 && worst_gap <= 1e-9;
    Report::timed(
        ok,
        start.elapsed(),
        Duration::from_secs(10),
        format!("max(elbo - loglik) {worst_excess:.2e}, Bayes-posterior gap {worst_gap:.2e}"),
    )
}

fn gradient_error<O: Objective>(
    objective: &mut O,
    params: &ModelParams,
    ctx: &TrainContext<'_>,
    noise: &mut FixedNoise,
    options: LossOptions,
) -> f64 {
    const H: f64 = 1e-5;
    noise.rewind();
    let (_, grads) = compute_gradients(objective, params, ctx, &ctx.pairs, noise, options);
    let mut worst: f64 = 0.0;
    let mut p = params.clone();
    for table in [Table::Phi, Table::Varphi, Table::Psi] {
        let (rows, cols) = (params.table(table).rows(), params.table(table).cols());
        for r in 0..rows {
            for c in 0..cols {
                let orig = params.table(table).get(r, c);
                p.table_mut(table).set(r, c, orig + H);
                noise.rewind();
                let up = total_loss(objective, &p, ctx, &ctx.pairs, noise, options).total;
                p.table_mut(table).set(r, c, orig - H);
                noise.rewind();
                let down = total_loss(objective, &p, ctx, &ctx.pairs, noise, options).total;
                p.table_mut(table).set(r, c, orig);
                let numeric = (up - down) / (2.0 * H);
                let analytic = grads.table(table).get(r, c);
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic - numeric).abs() / denom);
            }
        }
    }
    worst
}

fn gradients() -> Report {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let g = random_graph(&mut rng, 8, 0.4);
        let decoder = if i % 2 == 0 { DecoderMode::FullSoftmax } else { DecoderMode::NegativeSampling };
        let config = TrainConfig {
            communities: 3,
            dim: 4,
            decoder,
            lambda: if i % 4 < 2 { 0.0 } else { 100.0 },
            negatives: 3,
            ..TrainConfig::default()
        };
        let ctx = TrainContext::new(&g, &config).unwrap();
        let params = random_params(&mut rng, 8, 3, 4, 1.5);
        let mut noise = FixedNoise::draw(&mut rng, ctx.pairs.len(), 3, 3, &ctx.noise);
        let options = LossOptions {
            forward: Forward::Relaxed,
            terms: Terms::ALL,
        };
        worst = worst.max(gradient_error(&mut FlatObjective::new(3), &params, &ctx, &mut noise, options));
    }
    Report::timed(
        worst <= 1e-4,
        start.elapsed(),
        Duration::from_secs(30),
        format!("max relative error {worst:.2e} over 20 instances"),
    )
}

fn planted_recovery() -> Report {
    let start = Instant::now();
    let mut scores = Vec::new();
    for seed in 0..5 {
        let (g, truth) = generate_sbm(300, 3, 0.1, 0.005, seed).unwrap();
        let config = TrainConfig {
            communities: 3,
            dim: 16,
            iters: 2000,
            seed,
            ..TrainConfig::default()
        };
        let model = train(&g, &config).unwrap();
        let pred = assign(&model.best_params, &g, AssignMode::Nonoverlapping).unwrap();
        scores.push(nmi(&pred, &truth).unwrap());
    }
    let hits = scores.iter().filter(|&&s| s >= 0.9).count();
    Report::timed(
        hits >= 4,
        start.elapsed(),
        Duration::from_secs(120),
        format!("NMI {} ({hits}/5 >= 0.9)", fmt_list(&scores)),
    )
}

fn facebook414() -> Report {
    let skip = |why: String| Report {
        status: Status::Skip,
        detail: why,
        timing_only: false,
    };
    let Some(dir) = std::env::var_os("VGRAPH_DATA_DIR") else {
        return skip("VGRAPH_DATA_DIR not set; SNAP facebook ego networks unavailable".into());
    };
    let base = std::path::Path::new(&dir).join("facebook");
    let (edges, circles) = (base.join("414.edges"), base.join("414.circles"));
    if !edges.exists() || !circles.exists() {
        return skip(format!("{} or {} missing", edges.display(), circles.display()));
    }
    let start = Instant::now();
    let reader = |p: &std::path::Path| std::io::BufReader::new(std::fs::File::open(p).unwrap());
    let (g, _) = load_edge_list(reader(&edges)).unwrap();
    let (truth, _) = load_communities(reader(&circles), &g, CommunityFormat::Circles).unwrap();
    let config = TrainConfig {
        communities: 7,
        ..TrainConfig::default()
    };
    let model = train(&g, &config).unwrap();
    let pred = assign(&model.best_params, &g, AssignMode::Overlapping).unwrap();
    let f1 = overlapping_f1(&pred, &truth).unwrap();
    let jac = overlapping_jaccard(&pred, &truth).unwrap();
    Report::timed(
        f1 >= 0.55 && jac >= 0.42,
        start.elapsed(),
        Duration::from_secs(300),
        format!(
            "{} nodes, {} edges, {} circles; F1 {f1:.4} (paper 0.6471), Jaccard {jac:.4} (paper 0.5184)",
            g.node_count(),
            g.edge_count(),
            truth.k()
        ),
    )
}

fn per_iteration_losses<O: Objective>(g: &Graph, config: &TrainConfig, objective: O, iters: usize) -> Vec<f64> {
    let mut t = Trainer::new(g, config, objective).unwrap();
    (0..iters).map(|_| t.step().unwrap().total).collect()
}

fn hierarchy() -> Report {
    let start = Instant::now();
    let (g, _) = generate_sbm(300, 3, 0.1, 0.005, 7).unwrap();
    let mut worst: f64 = 0.0;
    for (decoder, lambda) in [(DecoderMode::FullSoftmax, 10.0), (DecoderMode::NegativeSampling, 0.0)] {
        let config = TrainConfig {
            communities: 3,
            dim: 16,
            batch_edges: 1000,
            decoder,
            lambda,
            seed: 7,
            ..TrainConfig::default()
        };
        let flat = per_iteration_losses(&g, &config, FlatObjective::new(3), 500);
        let tree = HierarchicalObjective::new(CommunityTree::new(&[3]).unwrap());
        let deep = per_iteration_losses(&g, &config, tree, 500);
        worst = flat.iter().zip(&deep).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }

    let tree = CommunityTree::new(&[3, 2]).unwrap();
    let mut level1 = Vec::new();
    let mut level2 = Vec::new();
    for seed in 0..5 {
        let (g, truth) = generate_hierarchical_sbm(300, &[3, 2], &[0.002, 0.1, 0.25], seed).unwrap();
        let config = TrainConfig {
            dim: 16,
            iters: 2000,
            seed,
            ..TrainConfig::default()
        };
        let model = train_hierarchical(&g, &config, &tree).unwrap();
        let levels = assign_hierarchical(&model.best_params, &tree, &g, AssignMode::Nonoverlapping).unwrap();
        level1.push(nmi(&levels[0], &truth[0]).unwrap());
        level2.push(nmi(&levels[1], &truth[1]).unwrap());
    }
    let hits = level1.iter().filter(|&&s| s >= 0.9).count();
    Report::check(
        worst <= 1e-9 && hits >= 4,
        format!(
            "depth-1 vs flat max loss difference {worst:.2e} over 2x500 iterations; level-1 NMI {} ({hits}/5 >= 0.9), level-2 NMI {}; {:.1}s",
            fmt_list(&level1),
            fmt_list(&level2),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn random_partition(rng: &mut ChaCha8Rng, n: usize, k: usize) -> CommunitySet {
    let a: Vec<Option<usize>> = (0..n).map(|_| Some(rng.random_range(0..k))).collect();
    CommunitySet::from_assignment(k, &a).unwrap()
}

fn random_cover(rng: &mut ChaCha8Rng, n: usize) -> CommunitySet {
    let k = rng.random_range(1..=5);
    let members = (0..k)
        .map(|_| {
            let mut s: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.3).collect();
            if s.is_empty() {
                s.push(rng.random_range(0..n));
            }
            s
        })
        .collect();
    CommunitySet::from_members(n, members).unwrap()
}

/// Mutual information over entropies from raw counts, independent of the
/// library's contingency code.
fn naive_nmi(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ca: HashMap<usize, f64> = HashMap::new();
    let mut cb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let h = |m: &HashMap<usize, f64>| -m.values().map(|c| c / n * (c / n).ln()).sum::<f64>();
    let (ha, hb) = (h(&ca), h(&cb));
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint.iter().map(|(&(x, y), &c)| c / n * (c * n / (ca[&x] * cb[&y])).ln()).sum();
    2.0 * mi / (ha + hb)
}

fn metrics() -> Report {
    let part = |n: usize, blocks: &[&[usize]]| CommunitySet::from_members(n, blocks.iter().map(|b| b.to_vec()).collect()).unwrap();
    let mut hand = Vec::new();
    // H(a) = ln 2, H(b) = ln 3, I = (2/3) ln 2
    let a = part(6, &[&[0, 1, 2], &[3, 4, 5]]);
    let b = part(6, &[&[0, 1], &[2, 3], &[4, 5]]);
    let expect = (4.0 / 3.0) * 2f64.ln() / 6f64.ln();
    hand.push(("nmi", nmi(&a, &b).unwrap(), expect));
    hand.push(("nmi crossed", nmi(&part(4, &[&[0, 1], &[2, 3]]), &part(4, &[&[0, 2], &[1, 3]])).unwrap(), 0.0));
    let (two_triangles, _) = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
    hand.push(("modularity triangles", modularity(&two_triangles, &a).unwrap(), 0.5));
    // path 0-1-2-3 split in halves: 2 * (1/3 - (3/6)^2)
    let (path, _) = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
    hand.push(("modularity path", modularity(&path, &part(4, &[&[0, 1], &[2, 3]])).unwrap(), 1.0 / 6.0));
    let truth = part(3, &[&[0, 1], &[2]]);
    let pred = part(3, &[&[0, 1, 2]]);
    hand.push(("f1", overlapping_f1(&pred, &truth).unwrap(), 0.725));
    hand.push(("jaccard", overlapping_jaccard(&pred, &truth).unwrap(), 7.0 / 12.0));
    let hand_worst = hand.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let hand_bad: Vec<&str> = hand.iter().filter(|(_, g, w)| (g - w).abs() > 1e-12).map(|(n, _, _)| *n).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let mut violations = 0usize;
    let mut oracle_gap: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(2..30);
        let (ka, kb) = (rng.random_range(1..6), rng.random_range(1..6));
        let (x, y) = (random_partition(&mut rng, n, ka), random_partition(&mut rng, n, kb));
        let s = nmi(&x, &y).unwrap();
        let labels = |p: &CommunitySet| p.assignment().unwrap().into_iter().map(Option::unwrap).collect::<Vec<_>>();
        oracle_gap = oracle_gap.max((s - naive_nmi(&labels(&x), &labels(&y))).abs());
        violations += usize::from(!(0.0..=1.0).contains(&s) || (s - nmi(&y, &x).unwrap()).abs() > 1e-12);
        violations += usize::from((nmi(&x, &x).unwrap() - 1.0).abs() > 1e-12);

        let g = random_graph(&mut rng, n.max(3), 0.3);
        let p = random_partition(&mut rng, g.node_count(), ka);
        let q = modularity(&g, &p).unwrap();
        violations += usize::from(!(-0.5..=1.0).contains(&q));

        let (u, v) = (random_cover(&mut rng, n), random_cover(&mut rng, n));
        for f in [overlapping_f1, overlapping_jaccard] {
            let s = f(&u, &v).unwrap();
            violations += usize::from(!(0.0..=1.0).contains(&s) || (s - f(&v, &u).unwrap()).abs() > 1e-12);
            violations += usize::from(f(&u, &u).unwrap() != 1.0);
        }
    }
    Report::check(
        hand_bad.is_empty() && violations == 0 && oracle_gap <= 1e-12,
        format!(
            "{} hand cases, worst error {hand_worst:.1e}{}; 1000 fuzzed inputs, {violations} violations, NMI vs naive oracle {oracle_gap:.1e}",
            hand.len(),
            if hand_bad.is_empty() { String::new() } else { format!(" (wrong: {})", hand_bad.join(", ")) }
        ),
    )
}

fn scalability() -> Report {
    const BUDGET: Duration = Duration::from_secs(300);
    let (g, _) = generate_sbm(100_000, 5, 2e-4, 2.5e-5, 1).unwrap();
    let config = TrainConfig {
        communities: 5,
        dim: 128,
        negatives: 5,
        batch_edges: 5000,
        iters: 10_000,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&g, &config, FlatObjective::new(5)).unwrap();
    let start = Instant::now();
    let mut done = 0;
    // the same work as a full run: a step per iteration plus the tracked loss every eval_every
    while done < config.iters && start.elapsed() < BUDGET {
        if done % config.eval_every == 0 {
            trainer.evaluate();
        }
        trainer.step().unwrap();
        done += 1;
    }
    let elapsed = start.elapsed();
    let projected = elapsed.as_secs_f64() * config.iters as f64 / done as f64;

    let per_step = |k: usize| {
        let config = TrainConfig {
            communities: k,
            ..config.clone()
        };
        let mut t = Trainer::new(&g, &config, FlatObjective::new(k)).unwrap();
        // the first steps touch every row for the first time
        for _ in 0..40 {
            t.step().unwrap();
        }
        let s = Instant::now();
        for _ in 0..60 {
            t.step().unwrap();
        }
        s.elapsed().as_secs_f64() / 60.0
    };
    let (t32, t64) = (per_step(32), per_step(64));
    let ratio = t64 / t32;
    let ratio_ok = (1.5..=2.5).contains(&ratio);
    let finished = done == config.iters;
    let mut detail = format!(
        "{} nodes, {} edges; {done}/{} iterations in {:.1}s (projected {projected:.0}s for all)",
        g.node_count(),
        g.edge_count(),
        config.iters,
        elapsed.as_secs_f64()
    );
    let _ = write!(detail, "; step K=32 {:.1}ms, K=64 {:.1}ms, ratio {ratio:.2} (want 1.5-2.5)", t32 * 1e3, t64 * 1e3);
    Report {
        status: if finished && ratio_ok { Status::Pass } else { Status::Fail },
        detail,
        timing_only: !finished || !ratio_ok,
    }
}

/// Every exported artifact of one training run, as bytes.
fn artifacts(g: &Graph, config: &TrainConfig, tree: Option<&CommunityTree>) -> Vec<(&'static str, Vec<u8>)> {
    let model = match tree {
        Some(t) => train_hierarchical(g, config, t).unwrap(),
        None => train(g, config).unwrap(),
    };
    let mut out = Vec::new();
    let mut buf = Vec::new();
    Checkpoint::from_model(g, config, tree, &model).write(&mut buf).unwrap();
    out.push(("checkpoint", std::mem::take(&mut buf)));
    for (name, table) in [("phi.tsv", Table::Phi), ("varphi.tsv", Table::Varphi), ("psi.tsv", Table::Psi)] {
        write_embeddings(g.labels(), &model.best_params, table, &mut buf).unwrap();
        out.push((name, std::mem::take(&mut buf)));
    }
    write_loss_csv(&model.history, &mut buf).unwrap();
    out.push(("loss.csv", std::mem::take(&mut buf)));
    match tree {
        Some(t) => {
            for level in assign_hierarchical(&model.best_params, t, g, AssignMode::Overlapping).unwrap() {
                level.write_snap(g, &mut buf).unwrap();
            }
            out.push(("levels.txt", std::mem::take(&mut buf)));
        }
        None => {
            write_memberships(g, &all_memberships(&model.best_params, g), &mut buf).unwrap();
            out.push(("memberships.tsv", std::mem::take(&mut buf)));
            for mode in [AssignMode::Overlapping, AssignMode::Nonoverlapping] {
                assign(&model.best_params, g, mode).unwrap().write_snap(g, &mut buf).unwrap();
            }
            out.push(("communities.txt", std::mem::take(&mut buf)));
        }
    }
    out
}

fn determinism() -> Report {
    let (g, _) = generate_sbm(300, 3, 0.1, 0.005, 3).unwrap();
    let flat = TrainConfig {
        communities: 3,
        dim: 16,
        iters: 300,
        batch_edges: 1000,
        lambda: 1.0,
        decoder: DecoderMode::NegativeSampling,
        seed: 3,
        ..TrainConfig::default()
    };
    let tree = CommunityTree::new(&[3, 2]).unwrap();
    let hier = TrainConfig {
        decoder: DecoderMode::FullSoftmax,
        smoothness_target: SmoothnessTarget::Prior,
        ..flat.clone()
    };
    let mut mismatched = Vec::new();
    let mut digest = Sha256::new();
    let mut files = 0;
    for (config, tree) in [(&flat, None), (&hier, Some(&tree))] {
        let (a, b) = (artifacts(&g, config, tree), artifacts(&g, config, tree));
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            files += 1;
            digest.update(x);
            if x != y {
                mismatched.push(*name);
            }
        }
        let back = Checkpoint::read(a[0].1.as_slice()).unwrap();
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        if again != a[0].1 {
            mismatched.push("checkpoint round trip");
        }
    }
    let hash = hex::encode(digest.finalize());
    Report::check(
        mismatched.is_empty(),
        format!(
            "{files} artifacts from flat and tree runs compared byte for byte{}; digest {}",
            if mismatched.is_empty() { String::new() } else { format!(", differing: {}", mismatched.join(", ")) },
            &hash[..16]
        ),
    )
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

type Criterion = (u32, &'static str, fn() -> Report);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "distributions", distributions),
        (2, "bound", bound),
        (3, "gradients", gradients),
        (4, "planted recovery", planted_recovery),
        (5, "facebook414", facebook414),
        (6, "hierarchy", hierarchy),
        (7, "metric oracles", metrics),
        (8, "scalability", scalability),
        (9, "determinism", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict_timing = std::env::var("VGRAPH_STRICT_TIMING").is_ok_and(|v| v == "1");
    let mut fatal = 0;
    let mut counts = [0usize; 3];
    for (id, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let r = run();
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        counts[r.status as usize] += 1;
        let note = if r.status == Status::Fail && r.timing_only && !strict_timing { " [runtime budget, non-fatal]" } else { "" };
        println!("{tag} criterion {id} ({name}): {}{note}", r.detail);
        if r.status == Status::Fail && (!r.timing_only || strict_timing) {
            fatal += 1;
        }
    }
    println!("acceptance: {} passed, {} failed, {} skipped", counts[0], counts[1], counts[2]);
    if fatal > 0 {
        std::process::exit(1);
    }
}
