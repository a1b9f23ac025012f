//! RePro coarsening: score edges by embedding cosine similarity with a
//! protection penalty, contract greedily to the target size, and build the
//! membership matrix Q, the importance-weighted contribution matrix P, and
//! the reduced graph A^r = QᵀAQ, X^r = PᵀX, Y^r = argmax(PᵀY).

use std::collections::HashSet;

use ndarray::Array2;

use crate::graph::{SparseGraph, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceMeasure {
    Degree,
    NdSum,
}

#[derive(Debug, Clone, Copy)]
pub struct EdgeScore {
    pub edge_id: usize,
    pub u: usize,
    pub v: usize,
    pub beta: f64,
}

/// Disjoint cluster assignment over the nodes of a graph, with per-node
/// importance scores.
#[derive(Debug, Clone)]
pub struct Partition {
    cluster_of: Vec<usize>,
    n_clusters: usize,
    importance: Vec<f64>,
    target: usize,
    target_reached: bool,
}

impl Partition {
    /// Explicit assignment. Cluster ids must be compact (every id in
    /// 0..max+1 occupied) so the normalization has no empty columns.
    pub fn new(cluster_of: Vec<usize>, importance: Vec<f64>) -> crate::error::Result<Self> {
        use crate::error::Error;
        if cluster_of.len() != importance.len() {
            return Err(Error::Dimension(format!(
                "{} cluster assignments vs {} importance scores",
                cluster_of.len(),
                importance.len()
            )));
        }
        if cluster_of.is_empty() {
            return Err(Error::EmptyInput("partition over no nodes".into()));
        }
        let n_clusters = cluster_of.iter().max().unwrap() + 1;
        let mut seen = vec![false; n_clusters];
        for &c in &cluster_of {
            seen[c] = true;
        }
        if let Some(gap) = seen.iter().position(|&s| !s) {
            return Err(Error::Inconsistent(format!("cluster id {gap} is unused")));
        }
        Ok(Partition {
            cluster_of,
            n_clusters,
            importance,
            target: n_clusters,
            target_reached: true,
        })
    }

    /// Identity partition: every node its own cluster.
    pub fn identity(importance: Vec<f64>) -> Self {
        let n = importance.len();
        Partition {
            cluster_of: (0..n).collect(),
            n_clusters: n,
            importance,
            target: n,
            target_reached: true,
        }
    }

    pub fn n(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.cluster_of[v]
    }

    pub fn clusters(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// False when the contraction ran out of edges before reaching the
    /// target cluster count.
    pub fn target_reached(&self) -> bool {
        self.target_reached
    }
}

/// Importance-weighted normalization of the membership assignment:
/// P[i, cluster(i)] = sqrt(s_i / Σ_{v in cluster(i)} s_v). PᵀP = I.
#[derive(Debug, Clone)]
pub struct NormalizedPartition {
    cluster_of: Vec<usize>,
    weight: Vec<f64>,
    n_clusters: usize,
}

impl NormalizedPartition {
    pub fn n(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.cluster_of[v]
    }

    /// The single nonzero of row i of P.
    pub fn weight(&self, v: usize) -> f64 {
        self.weight[v]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut p = Array2::zeros((self.n(), self.n_clusters));
        for i in 0..self.n() {
            p[[i, self.cluster_of[i]]] = self.weight[i];
        }
        p
    }
}

/// Weighted super-node graph with labels and its cluster assignment.
#[derive(Debug, Clone)]
pub struct ReducedGraph {
    pub graph: SparseGraph,
    /// Cluster of each original (pre-reduction) node index.
    pub cluster_of: Vec<usize>,
    pub target_reached: bool,
}

impl ReducedGraph {
    pub fn n(&self) -> usize {
        self.graph.n()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Returns true if the sets were distinct.
    fn union(&mut self, x: usize, y: usize) -> bool {
        let (mut xr, mut yr) = (self.find(x), self.find(y));
        if xr == yr {
            return false;
        }
        if self.size[xr] < self.size[yr] {
            std::mem::swap(&mut xr, &mut yr);
        }
        self.parent[yr] = xr;
        self.size[xr] += self.size[yr];
        true
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        // Zero-norm embeddings (dead ReLU, isolated untrained nodes) score
        // the neutral value instead of NaN.
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Cosine similarity per undirected edge, minus `epsilon` when either
/// endpoint is protected. Self-loops are not contraction candidates and are
/// skipped. Edge ids follow (u, v) order with u < v.
pub fn score_edges(
    g: &SparseGraph,
    h: &Array2<f64>,
    protected: &HashSet<usize>,
    epsilon: f64,
) -> Vec<EdgeScore> {
    assert!(epsilon >= 0.0, "epsilon must be non-negative");
    assert_eq!(h.nrows(), g.n(), "embedding rows must align with graph nodes");
    let mut scores = Vec::new();
    for (u, v, _) in g.undirected_edges() {
        if u == v {
            continue;
        }
        let hu = h.row(u);
        let hv = h.row(v);
        let mut beta = cosine(hu.as_slice().unwrap(), hv.as_slice().unwrap());
        if protected.contains(&u) || protected.contains(&v) {
            beta -= epsilon;
        }
        scores.push(EdgeScore {
            edge_id: scores.len(),
            u,
            v,
            beta,
        });
    }
    scores
}

fn node_importance(g: &SparseGraph, measure: ImportanceMeasure) -> Vec<f64> {
    (0..g.n())
        .map(|v| match measure {
            ImportanceMeasure::Degree => g.degree(v).unwrap(),
            ImportanceMeasure::NdSum => g.neighbor_degree_sum(v).unwrap(),
        })
        .collect()
}

/// Greedy contraction in descending score order until the live cluster
/// count reaches ⌊gamma·n⌋ or the edges run out. Ties break on edge id. A
/// node may take part in several consecutive merges.
pub fn repro_coarsen(
    g: &SparseGraph,
    h: &Array2<f64>,
    protected: &HashSet<usize>,
    gamma: f64,
    epsilon: f64,
    measure: ImportanceMeasure,
) -> Partition {
    assert!(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
    let n = g.n();
    let target = ((gamma * n as f64).floor() as usize).max(1);

    let mut scores = score_edges(g, h, protected, epsilon);
    scores.sort_by(|a, b| {
        b.beta
            .partial_cmp(&a.beta)
            .expect("similarity scores are finite")
            .then(a.edge_id.cmp(&b.edge_id))
    });

    let mut uf = UnionFind::new(n);
    let mut live = n;
    for score in &scores {
        if live <= target {
            break;
        }
        if uf.union(score.u, score.v) {
            live -= 1;
        }
    }

    // Compact root ids to 0..n'-1 in first-appearance order.
    let mut cluster_of = vec![usize::MAX; n];
    let mut next = 0;
    let mut root_to_cluster = vec![usize::MAX; n];
    for v in 0..n {
        let root = uf.find(v);
        if root_to_cluster[root] == usize::MAX {
            root_to_cluster[root] = next;
            next += 1;
        }
        cluster_of[v] = root_to_cluster[root];
    }

    Partition {
        cluster_of,
        n_clusters: live,
        importance: node_importance(g, measure),
        target,
        target_reached: live <= target,
    }
}

/// Importance-weighted normalization; zero importance scores are floored
/// to 1 so every P column stays unit-norm.
pub fn normalize_partition(p: &Partition) -> NormalizedPartition {
    let scores: Vec<f64> = p
        .importance
        .iter()
        .map(|&s| if s == 0.0 { 1.0 } else { s })
        .collect();
    let mut cluster_sum = vec![0.0; p.n_clusters];
    for (v, &c) in p.cluster_of.iter().enumerate() {
        cluster_sum[c] += scores[v];
    }
    let weight = scores
        .iter()
        .zip(&p.cluster_of)
        .map(|(&s, &c)| (s / cluster_sum[c]).sqrt())
        .collect();
    NormalizedPartition {
        cluster_of: p.cluster_of.clone(),
        weight,
        n_clusters: p.n_clusters,
    }
}

/// Build the reduced graph: A^r = QᵀAQ (weighted, self-loops kept),
/// X^r = PᵀX, labels by P-weighted majority vote with all-zero vote columns
/// left unlabeled and ties broken to the lowest class index.
pub fn generate_reduced(g: &SparseGraph, p: &NormalizedPartition, target_reached: bool) -> ReducedGraph {
    assert_eq!(p.n(), g.n(), "partition must cover the graph");
    let nr = p.n_clusters;
    let d = g.features().ncols();

    let mut xr = Array2::zeros((nr, d));
    for i in 0..g.n() {
        let c = p.cluster_of[i];
        let w = p.weight[i];
        for k in 0..d {
            xr[[c, k]] += w * g.features()[[i, k]];
        }
    }

    let num_classes = g
        .labels()
        .iter()
        .filter_map(|&l| l)
        .max()
        .map(|m| m + 1)
        .unwrap_or(0);
    let mut votes = vec![vec![0.0; num_classes]; nr];
    for i in 0..g.n() {
        if let Some(y) = g.label(i) {
            votes[p.cluster_of[i]][y] += p.weight[i];
        }
    }
    let labels: Vec<Option<usize>> = votes
        .iter()
        .map(|row| {
            let mut best: Option<usize> = None;
            let mut best_val = 0.0;
            for (class, &v) in row.iter().enumerate() {
                if v > best_val {
                    best = Some(class);
                    best_val = v;
                }
            }
            best
        })
        .collect();

    let mut adj = SparseMatrix::zeros(nr);
    for (i, j, w) in g.adjacency().entries() {
        adj.add(p.cluster_of[i], p.cluster_of[j], w);
    }
    let mut graph = SparseGraph::new(xr, labels);
    for (a, b, w) in adj.entries() {
        if a <= b && w != 0.0 {
            graph.add_edge(a, b, w);
        }
    }

    ReducedGraph {
        graph,
        cluster_of: p.cluster_of.clone(),
        target_reached,
    }
}
