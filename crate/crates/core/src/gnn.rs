//! Two-layer GCN node classifier with manual backpropagation.
//!
//! The layer-1 pre-activation output H feeds the coarsening similarity
//! scores, so `forward` exposes it alongside the logits. No bias terms, no
//! dropout; full-batch gradient descent with optional weight decay. All
//! arithmetic is f64.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Debug, Clone)]
pub struct GcnModel {
    w1: Array2<f64>,
    w2: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.5,
            weight_decay: 5e-4,
        }
    }
}

impl GcnModel {
    /// Glorot-style initialization, seeded.
    pub fn new(feature_dim: usize, hidden_dim: usize, num_classes: usize, seed: u64) -> Self {
        assert!(hidden_dim > 0, "hidden size must be positive");
        assert!(num_classes >= 2, "need at least two classes");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize| {
            let scale = (2.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| {
                rng.gen_range(-1.0..1.0) * scale
            })
        };
        GcnModel {
            w1: init(feature_dim, hidden_dim),
            w2: init(hidden_dim, num_classes),
        }
    }

    pub fn w1(&self) -> &Array2<f64> {
        &self.w1
    }

    pub fn w2(&self) -> &Array2<f64> {
        &self.w2
    }

    pub fn w1_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w1
    }

    pub fn w2_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w2
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.ncols()
    }

    /// H = Â X W1 (pre-activation), logits = Â relu(H) W2.
    pub fn forward(&self, g: &SparseGraph) -> Result<(Array2<f64>, Array2<f64>)> {
        if g.features().ncols() != self.w1.nrows() {
            return Err(Error::Dimension(format!(
                "graph has {} features, model expects {}",
                g.features().ncols(),
                self.w1.nrows()
            )));
        }
        let a_hat = g.normalized_adjacency();
        let ax = a_hat.mul_dense(g.features());
        let h = ax.dot(&self.w1);
        let r = h.mapv(|v| v.max(0.0));
        let ar = a_hat.mul_dense(&r);
        let logits = ar.dot(&self.w2);
        Ok((h, logits))
    }

    /// Mean cross-entropy over `train_mask` plus L2 weight decay, with
    /// analytic gradients.
    pub fn loss_and_grads(
        &self,
        g: &SparseGraph,
        train_mask: &[usize],
        weight_decay: f64,
    ) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        if train_mask.is_empty() {
            return Err(Error::EmptyTrainMask);
        }
        for &v in train_mask {
            if v >= g.n() {
                return Err(Error::NodeOutOfRange { index: v, n: g.n() });
            }
            if g.label(v).is_none() {
                return Err(Error::Inconsistent(format!(
                    "train node {v} has no label"
                )));
            }
        }
        let a_hat = g.normalized_adjacency();
        let ax = a_hat.mul_dense(g.features());
        let h = ax.dot(&self.w1);
        let r = h.mapv(|v| v.max(0.0));
        let ar = a_hat.mul_dense(&r);
        let logits = ar.dot(&self.w2);

        let k = train_mask.len() as f64;
        let c = self.num_classes();
        let mut loss = 0.0;
        let mut d_logits = Array2::zeros(logits.raw_dim());
        for &v in train_mask {
            let y = g.label(v).unwrap();
            let row = logits.row(v);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_z = row.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
            loss += (log_z - logits[[v, y]]) / k;
            for j in 0..c {
                let p = (logits[[v, j]] - log_z).exp();
                d_logits[[v, j]] = (p - if j == y { 1.0 } else { 0.0 }) / k;
            }
        }
        loss += 0.5
            * weight_decay
            * (self.w1.iter().map(|w| w * w).sum::<f64>()
                + self.w2.iter().map(|w| w * w).sum::<f64>());

        let mut d_w2 = ar.t().dot(&d_logits);
        // Â is symmetric, so the adjoint of x -> Âx is Â itself.
        let d_ar = d_logits.dot(&self.w2.t());
        let d_r = a_hat.mul_dense(&d_ar);
        let d_h = &d_r * &h.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let mut d_w1 = ax.t().dot(&d_h);
        d_w1 += &(weight_decay * &self.w1);
        d_w2 += &(weight_decay * &self.w2);
        Ok((loss, d_w1, d_w2))
    }

    /// Full-batch gradient descent; returns the per-epoch loss trace.
    pub fn train(
        &mut self,
        g: &SparseGraph,
        train_mask: &[usize],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>> {
        if train_mask.is_empty() {
            return Err(Error::EmptyTrainMask);
        }
        let mut trace = Vec::with_capacity(cfg.epochs);
        for epoch in 0..cfg.epochs {
            let (loss, d_w1, d_w2) = self.loss_and_grads(g, train_mask, cfg.weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            self.w1 -= &(cfg.learning_rate * &d_w1);
            self.w2 -= &(cfg.learning_rate * &d_w2);
            trace.push(loss);
        }
        debug_assert!(self.w1.iter().chain(self.w2.iter()).all(|w| w.is_finite()));
        Ok(trace)
    }

    /// Argmax over logits rows; ties break to the lowest class index.
    pub fn predict(&self, g: &SparseGraph, eval_mask: &[usize]) -> Result<Vec<usize>> {
        let (_, logits) = self.forward(g)?;
        Ok(eval_mask
            .iter()
            .map(|&v| argmax_row(&logits, v))
            .collect())
    }
}

fn argmax_row(m: &Array2<f64>, row: usize) -> usize {
    let mut best = 0;
    let mut best_val = m[[row, 0]];
    for j in 1..m.ncols() {
        if m[[row, j]] > best_val {
            best = j;
            best_val = m[[row, j]];
        }
    }
    best
}
