//! Synthetic drifting-stream generator: stochastic-block-model tasks whose
//! class mixture follows a per-task drift schedule, Gaussian features
//! around class centers, and backward-only cross-task citation edges.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::seed::seed_for;
use crate::stream::{NodeRecord, TimestampedGraph};

#[derive(Debug, Clone)]
pub struct SyntheticStreamSpec {
    pub tasks: usize,
    pub nodes_per_task: usize,
    pub classes: usize,
    /// Per-task class mixture; rows are normalized before sampling.
    pub drift: Vec<Vec<f64>>,
    /// Same-class edge probability within a task.
    pub p_intra: f64,
    /// Cross-class edge probability within a task.
    pub p_inter: f64,
    /// Per-pair probability of an edge from a new node to any earlier node.
    pub p_cross: f64,
    pub feature_dim: usize,
    /// Standard deviation of the Gaussian around each class center.
    pub noise: f64,
    /// Per task, classes whose labels are withheld (node stays unlabeled).
    pub masked_classes: Vec<Vec<usize>>,
    pub seed: u64,
}

impl SyntheticStreamSpec {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.tasks == 0 || self.nodes_per_task == 0 {
            return bad("need at least one task and one node per task".into());
        }
        if self.classes == 0 {
            return bad("need at least one class".into());
        }
        if self.feature_dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        if self.noise < 0.0 {
            return bad("noise must be non-negative".into());
        }
        if self.drift.len() != self.tasks {
            return bad(format!(
                "drift schedule has {} rows, expected {}",
                self.drift.len(),
                self.tasks
            ));
        }
        for (t, row) in self.drift.iter().enumerate() {
            if row.len() != self.classes {
                return bad(format!("drift row {t} has {} entries, expected {}", row.len(), self.classes));
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return bad(format!("drift row {t} has a negative or non-finite entry"));
            }
            if row.iter().sum::<f64>() <= 0.0 {
                return bad(format!("drift row {t} sums to zero"));
            }
        }
        for &p in [self.p_intra, self.p_inter, self.p_cross].iter() {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("edge probability {p} outside [0, 1]"));
            }
        }
        if self.masked_classes.len() != self.tasks {
            return bad(format!(
                "masked_classes has {} rows, expected {}",
                self.masked_classes.len(),
                self.tasks
            ));
        }
        Ok(())
    }
}

fn sample_class(rng: &mut ChaCha20Rng, mixture: &[f64]) -> usize {
    let total: f64 = mixture.iter().sum();
    let mut draw = rng.gen::<f64>() * total;
    for (c, &p) in mixture.iter().enumerate() {
        draw -= p;
        if draw < 0.0 {
            return c;
        }
    }
    mixture.len() - 1
}

/// Generate the stream. Node ids are 1-based and sequential; task t gets
/// time period t (1-based). Deterministic under the configured seed.
pub fn generate_synthetic(spec: &SyntheticStreamSpec) -> Result<TimestampedGraph> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed_for(spec.seed, "synthetic"));
    let normal = Normal::new(0.0, 1.0).unwrap();

    // Well-separated class centers on a scaled hypercube corner pattern.
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..spec.feature_dim)
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();

    let mut nodes: Vec<NodeRecord> = Vec::with_capacity(spec.tasks * spec.nodes_per_task);
    let mut classes: Vec<usize> = Vec::with_capacity(nodes.capacity());
    let mut edges: Vec<(u64, u64)> = Vec::new();
    let mut next_id: u64 = 1;

    for t in 0..spec.tasks {
        let task_start = nodes.len();
        for _ in 0..spec.nodes_per_task {
            let class = sample_class(&mut rng, &spec.drift[t]);
            let features: Vec<f64> = centers[class]
                .iter()
                .map(|&c| c + spec.noise * normal.sample(&mut rng))
                .collect();
            let label = if spec.masked_classes[t].contains(&class) {
                None
            } else {
                Some(class)
            };
            nodes.push(NodeRecord {
                id: next_id,
                tau: (t + 1) as u32,
                label,
                features,
            });
            classes.push(class);
            next_id += 1;
        }
        // Intra-task edges: later node cites earlier so tau(o) <= tau(s)
        // holds trivially.
        for i in task_start..nodes.len() {
            for j in task_start..i {
                let p = if classes[i] == classes[j] {
                    spec.p_intra
                } else {
                    spec.p_inter
                };
                if p > 0.0 && rng.gen_bool(p) {
                    edges.push((nodes[i].id, nodes[j].id));
                }
            }
            // Backward citations into earlier tasks.
            if spec.p_cross > 0.0 {
                for j in 0..task_start {
                    if rng.gen_bool(spec.p_cross) {
                        edges.push((nodes[i].id, nodes[j].id));
                    }
                }
            }
        }
    }

    TimestampedGraph::new(nodes, edges)
}
