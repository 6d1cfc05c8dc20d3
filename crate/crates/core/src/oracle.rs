//! Slow reference computations with naive arithmetic, used to cross-check
//! the fast paths. Nothing here reuses the model's numeric helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::Graph;
use crate::model::{MembershipVector, ModelParams, Table};

fn naive_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn naive_softmax(logits: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    for &x in logits {
        if x > m {
            m = x;
        }
    }
    let exps: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// p(z | w), unfloored.
pub fn prior(params: &ModelParams, w: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..params.community_count())
        .map(|j| naive_dot(params.phi.row(w), params.psi.row(j)))
        .collect();
    naive_softmax(&logits)
}

/// p(c | z = j) over every node.
pub fn decoder(params: &ModelParams, j: usize) -> Vec<f64> {
    let logits: Vec<f64> = (0..params.node_count())
        .map(|c| naive_dot(params.psi.row(j), params.varphi.row(c)))
        .collect();
    naive_softmax(&logits)
}

/// q(z | w, c) from the edge embedding.
pub fn posterior(params: &ModelParams, w: usize, c: usize) -> Vec<f64> {
    let edge: Vec<f64> = params.phi.row(w).iter().zip(params.phi.row(c)).map(|(a, b)| a * b).collect();
    let logits: Vec<f64> = (0..params.community_count())
        .map(|j| naive_dot(&edge, params.psi.row(j)))
        .collect();
    naive_softmax(&logits)
}

/// log p(c | w) = log Σ_j p(c | j) p(j | w).
pub fn exact_edge_loglik(params: &ModelParams, w: usize, c: usize) -> f64 {
    let p = prior(params, w);
    let mut s = 0.0;
    for (j, pj) in p.iter().enumerate() {
        s += decoder(params, j)[c] * pj;
    }
    s.ln()
}

/// True posterior p(j | w, c) by Bayes' rule.
pub fn bayes_posterior(params: &ModelParams, w: usize, c: usize) -> Vec<f64> {
    let p = prior(params, w);
    let joint: Vec<f64> = p.iter().enumerate().map(|(j, pj)| decoder(params, j)[c] * pj).collect();
    let z: f64 = joint.iter().sum();
    joint.into_iter().map(|x| x / z).collect()
}

/// Σ_j q_j log p(c | j) − KL(q ‖ p(· | w)) for an arbitrary q.
pub fn elbo_with(params: &ModelParams, w: usize, c: usize, q: &[f64]) -> f64 {
    let p = prior(params, w);
    let mut s = 0.0;
    for (j, &qj) in q.iter().enumerate() {
        if qj > 0.0 {
            s += qj * (decoder(params, j)[c].ln() - (qj / p[j]).ln());
        }
    }
    s
}

/// The bound under the model's own variational posterior.
pub fn exact_elbo(params: &ModelParams, w: usize, c: usize) -> f64 {
    elbo_with(params, w, c, &posterior(params, w, c))
}

/// Neighbor-averaged posterior for every node; `None` for isolated nodes.
pub fn brute_force_memberships(params: &ModelParams, g: &Graph) -> Vec<Option<MembershipVector>> {
    let k = params.community_count();
    (0..g.node_count())
        .map(|w| {
            let mut total = vec![0.0; k];
            let mut count = 0usize;
            for c in 0..g.node_count() {
                if g.has_edge(w, c) {
                    for (t, q) in total.iter_mut().zip(posterior(params, w, c)) {
                        *t += q;
                    }
                    count += 1;
                }
            }
            (count > 0).then(|| MembershipVector(total.into_iter().map(|t| t / count as f64).collect()))
        })
        .collect()
}

/// One cross-check: the worst deviation over `cases` comparisons. For the
/// bound, the deviation is `elbo - loglik`, which must stay at or below the
/// tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Check {
            name,
            cases: 0,
            worst: f64::NEG_INFINITY,
            tolerance,
        }
    }

    fn record(&mut self, deviation: f64) {
        self.cases += 1;
        // NaN must fail the check, so it cannot go through f64::max
        if !self.worst.is_nan() && (deviation.is_nan() || deviation > self.worst) {
            self.worst = deviation;
        }
    }

    pub fn passed(&self) -> bool {
        self.cases == 0 || self.worst <= self.tolerance
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, |m, d| if d > m || d.is_nan() { d } else { m })
}

struct Checks {
    prior: Check,
    posterior: Check,
    decoder: Check,
    bound: Check,
    tightness: Check,
    membership: Check,
}

impl Checks {
    fn new() -> Self {
        Checks {
            prior: Check::new("prior vs naive", 1e-12),
            posterior: Check::new("posterior vs naive", 1e-12),
            decoder: Check::new("decoder vs naive", 1e-12),
            bound: Check::new("elbo - loglik", 1e-12),
            tightness: Check::new("Bayes-posterior gap", 1e-9),
            membership: Check::new("membership vs brute force", 1e-12),
        }
    }

    fn pair(&mut self, params: &ModelParams, w: usize, c: usize) -> Result<()> {
        self.prior.record(max_abs_diff(params.prior_distribution(w)?.probs(), &prior(params, w)));
        self.posterior
            .record(max_abs_diff(params.posterior_distribution(w, c)?.probs(), &posterior(params, w, c)));
        let ll = exact_edge_loglik(params, w, c);
        self.bound.record(exact_elbo(params, w, c) - ll);
        self.tightness.record((elbo_with(params, w, c, &bayes_posterior(params, w, c)) - ll).abs());
        Ok(())
    }

    fn decoders(&mut self, params: &ModelParams) -> Result<()> {
        for j in 0..params.community_count() {
            self.decoder.record(max_abs_diff(&params.decoder_distribution(j)?, &decoder(params, j)));
        }
        Ok(())
    }

    fn memberships(&mut self, params: &ModelParams, g: &Graph) -> Result<()> {
        for (w, slow) in brute_force_memberships(params, g).iter().enumerate() {
            if let Some(slow) = slow {
                self.membership.record(max_abs_diff(params.node_membership(g, w)?.probs(), slow.probs()));
            }
        }
        Ok(())
    }

    fn finish(self) -> Vec<Check> {
        vec![self.prior, self.posterior, self.decoder, self.bound, self.tightness, self.membership]
    }
}

/// Cross-checks on `instances` random models and graphs with up to 30 nodes.
pub fn verify_random(instances: usize, seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Checks::new();
    for _ in 0..instances {
        let v = rng.random_range(2..=30);
        let k = rng.random_range(1..=8);
        let d = rng.random_range(1..=6);
        let scale = rng.random_range(0.2..3.0);
        let mut params = ModelParams::random(v, k, d, 1.0, &mut rng);
        for t in [Table::Phi, Table::Varphi, Table::Psi] {
            for x in params.table_mut(t).as_mut_slice() {
                *x = scale * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        let pairs: Vec<(usize, usize)> = (0..2 * v)
            .map(|_| (rng.random_range(0..v), rng.random_range(0..v)))
            .filter(|(a, b)| a != b)
            .collect();
        let (g, _) = Graph::from_edges(v, &pairs)?;
        for &(w, c) in g.edges() {
            checks.pair(&params, w, c)?;
        }
        checks.decoders(&params)?;
        checks.memberships(&params, &g)?;
    }
    Ok(checks.finish())
}

/// Cross-checks on a trained flat model: `sample_edges` random edges of `g`,
/// every decoder row, and, for graphs up to `brute_force_nodes` nodes, every
/// membership vector.
pub fn verify_model(
    params: &ModelParams,
    g: &Graph,
    sample_edges: usize,
    brute_force_nodes: usize,
    seed: u64,
) -> Result<Vec<Check>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Checks::new();
    if g.edge_count() > 0 {
        for _ in 0..sample_edges {
            let (w, c) = g.edges()[rng.random_range(0..g.edge_count())];
            checks.pair(params, w, c)?;
        }
    }
    checks.decoders(params)?;
    if g.node_count() <= brute_force_nodes {
        checks.memberships(params, g)?;
    }
    Ok(checks.finish())
}
