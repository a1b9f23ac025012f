//! Desk-scale empirical checks of the framework's analytical claims:
//! the majority-vote class-distribution shift under random partitioning,
//! quadratic-form preservation when merging structurally identical nodes,
//! and the running size bound of the reduced graph.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::seed::seed_for;

#[derive(Debug, Clone)]
pub struct VoteSimConfig {
    pub n: usize,
    pub c: usize,
    /// Class distribution; entries non-negative, summing to 1.
    pub p: Vec<f64>,
    /// Fraction of nodes kept: the partition has n' = ⌊gamma·n⌋ clusters.
    pub gamma: f64,
    /// Number of nodes held out as protected singleton clusters (0 = off).
    pub b: usize,
    pub trials: usize,
    pub seed: u64,
}

impl VoteSimConfig {
    fn validate(&self) -> Result<usize> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.c == 0 || self.p.len() != self.c {
            return bad(format!(
                "distribution has {} entries, expected c = {}",
                self.p.len(),
                self.c
            ));
        }
        if self.p.iter().any(|&x| x < 0.0 || !x.is_finite()) {
            return bad("class probabilities must be non-negative".into());
        }
        if (self.p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return bad(format!(
                "class probabilities sum to {}, expected 1",
                self.p.iter().sum::<f64>()
            ));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        let n_prime = (self.gamma * self.n as f64).floor() as usize;
        if n_prime == 0 {
            return bad(format!("gamma {} and n {} give an empty partition", self.gamma, self.n));
        }
        if self.b >= n_prime {
            return bad(format!("b = {} must be smaller than n' = {n_prime}", self.b));
        }
        if self.trials < 2 {
            return bad("need at least 2 trials for a standard error".into());
        }
        Ok(n_prime)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VoteSimResult {
    /// Estimated post-coarsening class distribution p'.
    pub mean: Vec<f64>,
    /// Standard error of each estimate.
    pub stderr: Vec<f64>,
}

/// Cluster id per node for one random partition: nodes 0..b are protected
/// singletons, nodes b..n' seed the regular clusters, and the surplus is
/// allocated independently and uniformly over the regular clusters (node
/// labels are i.i.d., so fixing which indices seed loses no generality).
fn cluster_assignment(rng: &mut ChaCha20Rng, n: usize, n_prime: usize, b: usize) -> Vec<usize> {
    let mut assignment = Vec::with_capacity(n);
    for v in 0..n_prime {
        assignment.push(v);
    }
    for _ in n_prime..n {
        assignment.push(rng.gen_range(b..n_prime));
    }
    assignment
}

fn sample_class(rng: &mut ChaCha20Rng, p: &[f64]) -> usize {
    let mut draw = rng.gen::<f64>();
    for (c, &q) in p.iter().enumerate() {
        draw -= q;
        if draw < 0.0 {
            return c;
        }
    }
    p.len() - 1
}

/// Monte Carlo estimate of the class distribution after majority voting
/// over a uniformly random partition into n' clusters. Ties are split by a
/// uniform roll among the tied classes.
pub fn simulate_partition_vote(cfg: &VoteSimConfig) -> Result<VoteSimResult> {
    let n_prime = cfg.validate()?;
    let mut sum = vec![0.0; cfg.c];
    let mut sum_sq = vec![0.0; cfg.c];
    for trial in 0..cfg.trials {
        let mut rng =
            ChaCha20Rng::seed_from_u64(seed_for(cfg.seed, &format!("vote-trial-{trial}")));
        let labels: Vec<usize> = (0..cfg.n).map(|_| sample_class(&mut rng, &cfg.p)).collect();
        let assignment = cluster_assignment(&mut rng, cfg.n, n_prime, cfg.b);
        let mut votes = vec![vec![0usize; cfg.c]; n_prime];
        for (v, &cluster) in assignment.iter().enumerate() {
            votes[cluster][labels[v]] += 1;
        }
        let mut counts = vec![0usize; cfg.c];
        for row in &votes {
            let top = *row.iter().max().unwrap();
            let tied: Vec<usize> = (0..cfg.c).filter(|&k| row[k] == top).collect();
            let winner = tied[rng.gen_range(0..tied.len())];
            counts[winner] += 1;
        }
        for k in 0..cfg.c {
            let frac = counts[k] as f64 / n_prime as f64;
            sum[k] += frac;
            sum_sq[k] += frac * frac;
        }
    }
    let t = cfg.trials as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / t).collect();
    let stderr = sum_sq
        .iter()
        .zip(&mean)
        .map(|(&sq, &m)| ((sq / t - m * m).max(0.0) / (t - 1.0)).sqrt())
        .collect();
    Ok(VoteSimResult { mean, stderr })
}

fn self_looped_adjacency(g: &SparseGraph) -> Array2<f64> {
    let n = g.n();
    let mut a = g.adjacency().to_dense();
    for i in 0..n {
        a[[i, i]] += 1.0;
    }
    a
}

fn quadratic_form(m: &Array2<f64>, x: &Array1<f64>) -> f64 {
    x.dot(&m.dot(x))
}

/// |x'ᵀM'x' − xᵀMx| maximised over random Gaussian x, where M is the
/// self-looped adjacency Ã = A + I, the averaging projector P merges
/// exactly {i, j} with uniform weights, x' = Px, and M' = P^∓ M P^+ (the
/// pseudoinverse pair of P reduces to the cluster indicator matrix). No
/// structural precondition — callers wanting the guarantee use
/// `check_laplacian_equivalence`.
pub fn merge_pair_quadratic_deviation(
    g: &SparseGraph,
    i: usize,
    j: usize,
    num_vectors: usize,
    seed: u64,
) -> Result<f64> {
    let n = g.n();
    for &v in [i, j].iter() {
        if v >= n {
            return Err(Error::NodeOutOfRange { index: v, n });
        }
    }
    if i == j {
        return Err(Error::Precondition("cannot merge a node with itself".into()));
    }
    let a = self_looped_adjacency(g);
    // Cluster indicator: merged pair first, remaining nodes in order.
    let mut cluster_of = vec![0usize; n];
    let mut next = 1;
    for v in 0..n {
        if v != i && v != j {
            cluster_of[v] = next;
            next += 1;
        }
    }
    let mut q = Array2::zeros((n, n - 1));
    for v in 0..n {
        q[[v, cluster_of[v]]] = 1.0;
    }
    let reduced = q.t().dot(&a).dot(&q);

    let mut rng = ChaCha20Rng::seed_from_u64(seed_for(seed, "quadratic-form-x"));
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut max_dev = 0.0f64;
    for _ in 0..num_vectors {
        let x = Array1::from_shape_fn(n, |_| normal.sample(&mut rng));
        // x' = Px: the merged pair averages, everything else passes through.
        let mut xp = Array1::zeros(n - 1);
        xp[0] = 0.5 * (x[i] + x[j]);
        for v in 0..n {
            if v != i && v != j {
                xp[cluster_of[v]] = x[v];
            }
        }
        let dev = (quadratic_form(&reduced, &xp) - quadratic_form(&a, &x)).abs();
        max_dev = max_dev.max(dev);
    }
    Ok(max_dev)
}

/// Verify the structural precondition Ã_i = Ã_j (identical rows of the
/// self-looped adjacency: mutually adjacent with the same external
/// neighborhood), then measure the quadratic-form deviation, which the
/// precondition guarantees to vanish.
pub fn check_laplacian_equivalence(
    g: &SparseGraph,
    i: usize,
    j: usize,
    num_vectors: usize,
    seed: u64,
) -> Result<f64> {
    let n = g.n();
    for &v in [i, j].iter() {
        if v >= n {
            return Err(Error::NodeOutOfRange { index: v, n });
        }
    }
    if i == j {
        return Err(Error::Precondition("cannot merge a node with itself".into()));
    }
    let a = self_looped_adjacency(g);
    for k in 0..n {
        if (a[[i, k]] - a[[j, k]]).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "rows {i} and {j} of A + I differ in column {k}: {} vs {}",
                a[[i, k]],
                a[[j, k]]
            )));
        }
    }
    merge_pair_quadratic_deviation(g, i, j, num_vectors, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCheck {
    pub pass: bool,
    /// Smallest bound − size margin over the trace (negative on failure).
    pub min_slack: f64,
}

/// Check n^r_t <= ((1−gamma)/gamma)·n_MAX after every task, where n_MAX is
/// the largest per-task new-node count seen so far.
pub fn check_size_bound(sizes: &[usize], new_counts: &[usize], gamma: f64) -> BoundCheck {
    assert_eq!(sizes.len(), new_counts.len(), "trace lengths must match");
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    let factor = (1.0 - gamma) / gamma;
    let mut n_max = 0usize;
    let mut min_slack = f64::INFINITY;
    for (&size, &count) in sizes.iter().zip(new_counts) {
        n_max = n_max.max(count);
        let slack = factor * n_max as f64 - size as f64;
        min_slack = min_slack.min(slack);
    }
    BoundCheck {
        pass: min_slack >= 0.0,
        min_slack,
    }
}
