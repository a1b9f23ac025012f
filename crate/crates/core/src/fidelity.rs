//! Node fidelity replay buffer: a fixed-capacity set of representative
//! nodes updated per task, fed to the coarsener as the protected set.
//!
//! Three update strategies: reservoir sampling over the global node stream,
//! per-class ring buffers, and per-class nearest-to-running-mean selection.
//! Ring and mean-of-features allocate ⌊b/c⌋ slots per class; remainder
//! slots go unused. Entries snapshot features at insertion time, since the
//! originals are lost after coarsening.

use std::collections::{HashMap, HashSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferStrategy {
    Reservoir,
    Ring,
    MeanFeatures,
}

#[derive(Debug, Clone)]
pub struct BufferEntry {
    pub node_id: u64,
    pub class: usize,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone)]
enum State {
    Reservoir {
        seen: u64,
        items: Vec<BufferEntry>,
        rng: ChaCha20Rng,
    },
    Ring {
        queues: Vec<VecDeque<BufferEntry>>,
    },
    MeanFeatures {
        pools: Vec<Vec<BufferEntry>>,
        sums: Vec<Vec<f64>>,
        counts: Vec<u64>,
    },
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    num_classes: usize,
    state: State,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, num_classes: usize, strategy: BufferStrategy, seed: u64) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        assert!(num_classes > 0, "need at least one class");
        let state = match strategy {
            BufferStrategy::Reservoir => State::Reservoir {
                seen: 0,
                items: Vec::new(),
                rng: ChaCha20Rng::seed_from_u64(seed),
            },
            BufferStrategy::Ring => State::Ring {
                queues: vec![VecDeque::new(); num_classes],
            },
            BufferStrategy::MeanFeatures => State::MeanFeatures {
                pools: vec![Vec::new(); num_classes],
                sums: Vec::new(),
                counts: vec![0; num_classes],
            },
        };
        ReplayBuffer {
            capacity,
            num_classes,
            state,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    fn per_class_capacity(&self) -> usize {
        self.capacity / self.num_classes
    }

    pub fn len(&self) -> usize {
        match &self.state {
            State::Reservoir { items, .. } => items.len(),
            State::Ring { queues } => queues.iter().map(|q| q.len()).sum(),
            State::MeanFeatures { pools, .. } => pools.iter().map(|p| p.len()).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entries(&self) -> Vec<&BufferEntry> {
        match &self.state {
            State::Reservoir { items, .. } => items.iter().collect(),
            State::Ring { queues } => queues.iter().flatten().collect(),
            State::MeanFeatures { pools, .. } => pools.iter().flatten().collect(),
        }
    }

    /// Fold one task's labeled new nodes into the buffer. Empty input is a
    /// no-op.
    pub fn update(&mut self, new_nodes: &[BufferEntry]) {
        let per_class = self.per_class_capacity();
        match &mut self.state {
            State::Reservoir { seen, items, rng } => {
                for node in new_nodes {
                    *seen += 1;
                    if items.len() < self.capacity {
                        items.push(node.clone());
                    } else {
                        let j = rng.gen_range(0..*seen);
                        if (j as usize) < self.capacity {
                            items[j as usize] = node.clone();
                        }
                    }
                }
            }
            State::Ring { queues } => {
                for node in new_nodes {
                    let q = &mut queues[node.class];
                    q.push_back(node.clone());
                    if q.len() > per_class {
                        q.pop_front();
                    }
                }
            }
            State::MeanFeatures {
                pools,
                sums,
                counts,
            } => {
                if sums.is_empty() && !new_nodes.is_empty() {
                    let d = new_nodes[0].features.len();
                    *sums = vec![vec![0.0; d]; self.num_classes];
                }
                for node in new_nodes {
                    counts[node.class] += 1;
                    for (s, f) in sums[node.class].iter_mut().zip(&node.features) {
                        *s += f;
                    }
                    pools[node.class].push(node.clone());
                }
                // Prune each class pool to the entries nearest the running
                // mean; stable sort keeps insertion order on ties.
                for class in 0..self.num_classes {
                    if counts[class] == 0 || pools[class].len() <= per_class {
                        continue;
                    }
                    let mean: Vec<f64> = sums[class]
                        .iter()
                        .map(|s| s / counts[class] as f64)
                        .collect();
                    let dist = |e: &BufferEntry| -> f64 {
                        e.features
                            .iter()
                            .zip(&mean)
                            .map(|(f, m)| (f - m) * (f - m))
                            .sum()
                    };
                    pools[class].sort_by(|a, b| dist(a).partial_cmp(&dist(b)).unwrap());
                    pools[class].truncate(per_class);
                }
            }
        }
        debug_assert!(self.len() <= self.capacity);
    }

    /// Resolve buffer entries through the original-node -> current-index
    /// map; the result is the coarsener's protected set.
    pub fn protected_set(&self, map: &HashMap<u64, usize>) -> Result<HashSet<usize>> {
        let mut out = HashSet::new();
        for entry in self.entries() {
            match map.get(&entry.node_id) {
                Some(&idx) => {
                    out.insert(idx);
                }
                None => {
                    return Err(Error::Inconsistent(format!(
                        "buffer node {} is not resolvable in the node map",
                        entry.node_id
                    )));
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(node_id: u64, class: usize, features: Vec<f64>) -> BufferEntry {
        BufferEntry {
            node_id,
            class,
            features,
        }
    }

    #[test]
    fn reservoir_with_slack_keeps_everything() {
        let mut buf = ReplayBuffer::new(10, 2, BufferStrategy::Reservoir, 0);
        let nodes: Vec<BufferEntry> = (0..7).map(|i| entry(i, 0, vec![0.0])).collect();
        buf.update(&nodes);
        let mut ids: Vec<u64> = buf.entries().iter().map(|e| e.node_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn ring_evicts_oldest_first() {
        let mut buf = ReplayBuffer::new(2, 1, BufferStrategy::Ring, 0);
        buf.update(&[entry(1, 0, vec![]), entry(2, 0, vec![]), entry(3, 0, vec![])]);
        let mut ids: Vec<u64> = buf.entries().iter().map(|e| e.node_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![2, 3]);
    }

    #[test]
    fn ring_is_seed_independent() {
        let mut a = ReplayBuffer::new(4, 2, BufferStrategy::Ring, 1);
        let mut b = ReplayBuffer::new(4, 2, BufferStrategy::Ring, 99);
        let nodes: Vec<BufferEntry> = (0..9).map(|i| entry(i, (i % 2) as usize, vec![])).collect();
        a.update(&nodes);
        b.update(&nodes);
        let ids = |buf: &ReplayBuffer| buf.entries().iter().map(|e| e.node_id).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
    }

    #[test]
    fn mean_features_keeps_nearest_to_mean() {
        let mut buf = ReplayBuffer::new(2, 1, BufferStrategy::MeanFeatures, 0);
        // Symmetric candidates keep the class mean at the origin.
        buf.update(&[
            entry(1, 0, vec![1.0, 0.0]),
            entry(2, 0, vec![-2.0, 0.0]),
            entry(3, 0, vec![3.0, 0.0]),
            entry(4, 0, vec![-1.0, 0.0]),
            entry(5, 0, vec![-3.0, 0.0]),
            entry(6, 0, vec![2.0, 0.0]),
        ]);
        let mut ids: Vec<u64> = buf.entries().iter().map(|e| e.node_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![1, 4]);
    }

    #[test]
    fn empty_update_is_noop() {
        let mut buf = ReplayBuffer::new(4, 2, BufferStrategy::Reservoir, 0);
        buf.update(&[]);
        assert!(buf.is_empty());
    }

    #[test]
    fn reservoir_inclusion_frequency_is_uniform() {
        // Stream of 100, capacity 10: every item should survive with
        // probability 0.1. SE of the mean over r runs is sqrt(p(1-p)/r).
        let runs = 10_000;
        let stream_len = 100u64;
        let cap = 10;
        let mut counts = vec![0u32; stream_len as usize];
        for run in 0..runs {
            let mut buf = ReplayBuffer::new(cap, 1, BufferStrategy::Reservoir, run);
            let nodes: Vec<BufferEntry> =
                (0..stream_len).map(|i| entry(i, 0, vec![])).collect();
            buf.update(&nodes);
            for e in buf.entries() {
                counts[e.node_id as usize] += 1;
            }
        }
        let p = cap as f64 / stream_len as f64;
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / runs as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se,
                "item {i}: frequency {freq} vs expected {p} (3 SE = {})",
                3.0 * se
            );
        }
    }

    #[test]
    fn protected_set_resolves_through_map() {
        let mut buf = ReplayBuffer::new(4, 1, BufferStrategy::Ring, 0);
        assert!(buf.protected_set(&HashMap::new()).unwrap().is_empty());
        buf.update(&[entry(42, 0, vec![])]);
        let map: HashMap<u64, usize> = [(42u64, 7usize)].into_iter().collect();
        let got = buf.protected_set(&map).unwrap();
        assert_eq!(got, [7].into_iter().collect());
        // Merged node resolves to its super-node index.
        let map2: HashMap<u64, usize> = [(42u64, 3usize)].into_iter().collect();
        assert_eq!(buf.protected_set(&map2).unwrap(), [3].into_iter().collect());
        assert!(buf.protected_set(&HashMap::new()).is_err());
    }

    proptest! {
        #[test]
        fn capacity_never_exceeded(
            capacity in 1usize..20,
            classes in 1usize..5,
            strategy in 0usize..3,
            stream in proptest::collection::vec((0usize..5, -10.0f64..10.0), 0..200),
        ) {
            let strategy = match strategy {
                0 => BufferStrategy::Reservoir,
                1 => BufferStrategy::Ring,
                _ => BufferStrategy::MeanFeatures,
            };
            let mut buf = ReplayBuffer::new(capacity, classes, strategy, 7);
            for (chunk_id, chunk) in stream.chunks(13).enumerate() {
                let nodes: Vec<BufferEntry> = chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &(class, f))| entry((chunk_id * 100 + i) as u64, class % classes, vec![f]))
                    .collect();
                buf.update(&nodes);
                prop_assert!(buf.len() <= capacity);
            }
        }
    }
}
