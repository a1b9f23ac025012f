//! Shared helpers for the benchmarks: random graph and embedding builders.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use taco_core::SparseGraph;

/// Random multigraph with `n` nodes and `m` unit edges, plus Gaussian-ish
/// embeddings of width `d`.
pub fn random_graph(n: usize, m: usize, d: usize, seed: u64) -> (SparseGraph, Array2<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut g = SparseGraph::new(Array2::zeros((n, 1)), vec![None; n]);
    let mut added = 0;
    while added < m {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u != v {
            g.add_edge(u, v, 1.0);
            added += 1;
        }
    }
    let h = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
    (g, h)
}
