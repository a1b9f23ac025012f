//! The continual-learning driver: replays the task stream in one of three
//! modes and fills the lower-triangular evaluation matrix.
//!
//! `taco` runs the full loop per task: combine the incoming subgraph with
//! the previous reduced graph, train, update the replay buffer, coarsen
//! with the buffer protected, and carry the reduced graph forward through
//! the node map. `finetune` trains on each task's subgraph alone (lower
//! bound); `joint` retrains from scratch on the union of all tasks so far
//! (upper bound). Evaluation always runs on the original task subgraphs —
//! the reduced graph never appears in an evaluation input.
//!
//! `gamma` here is the reduction ratio: each coarsening pass removes a
//! gamma fraction of the combined graph, keeping 1 - gamma. That is what
//! makes the running size bound n^r_t <= ((1-gamma)/gamma) * n_MAX hold.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::coarsen::{generate_reduced, normalize_partition, repro_coarsen, ImportanceMeasure};
use crate::error::{Error, Result};
use crate::fidelity::{BufferEntry, BufferStrategy, ReplayBuffer};
use crate::gnn::{GcnModel, TrainConfig};
use crate::graph::SparseGraph;
use crate::metrics::{bacc, macro_f1, MetricsMatrix, MetricsReport, Score};
use crate::seed::seed_for;
use crate::stream::{make_splits, split_tasks, TaskSubgraph, TimestampedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Taco,
    Finetune,
    Joint,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "taco" => Ok(Mode::Taco),
            "finetune" => Ok(Mode::Finetune),
            "joint" => Ok(Mode::Joint),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Reduction ratio in (0, 1): fraction of combined-graph nodes removed
    /// per coarsening pass.
    pub gamma: f64,
    /// Protection penalty subtracted from edge scores touching buffer nodes.
    pub epsilon: f64,
    pub importance: ImportanceMeasure,
    pub buffer_capacity: usize,
    pub buffer_strategy: BufferStrategy,
    pub hidden_dim: usize,
    pub train: TrainConfig,
    /// Master seed; per-component seeds are derived from it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 0.5,
            epsilon: 2.0,
            importance: ImportanceMeasure::Degree,
            buffer_capacity: 200,
            buffer_strategy: BufferStrategy::Reservoir,
            hidden_dim: 48,
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.epsilon < 0.0 {
            return Err(Error::InvalidConfig("epsilon must be non-negative".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be positive".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::InvalidConfig("buffer capacity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub mode: Mode,
    pub metrics: MetricsReport,
    /// Reduced-graph node count after each task (taco mode only).
    pub reduced_sizes: Vec<usize>,
    /// Labeled-or-not new nodes arriving with each task.
    pub new_node_counts: Vec<usize>,
    /// Per task: coarsening stopped early because it ran out of edges.
    pub target_unreached: Vec<bool>,
    /// Per task [train, coarsen, eval] wall-clock seconds.
    pub timings: Vec<[f64; 3]>,
    /// Final original-node -> reduced-node assignments, sorted by node id
    /// (taco mode only).
    pub node_map: Vec<(u64, usize)>,
    /// Per task, the cluster of every combined-graph node (taco mode only).
    pub partitions: Vec<Vec<usize>>,
}

/// Build the per-task evaluation subgraph over its original nodes, with
/// full features and labels. Returns the graph and the id -> index map.
fn build_task_graph(
    dataset: &TimestampedGraph,
    task: &TaskSubgraph,
) -> (SparseGraph, HashMap<u64, usize>) {
    let d = dataset.feature_dim();
    let n = task.node_ids.len();
    let mut index = HashMap::with_capacity(n);
    let mut x = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (i, &id) in task.node_ids.iter().enumerate() {
        index.insert(id, i);
        let rec = dataset.node(id).unwrap();
        for (k, &f) in rec.features.iter().enumerate() {
            x[[i, k]] = f;
        }
        labels.push(rec.label);
    }
    let mut g = SparseGraph::new(x, labels);
    for &(s, o) in &task.edges {
        g.add_edge(index[&s], index[&o], 1.0);
    }
    (g, index)
}

/// Merge the incoming task into the carried reduced graph. Super-nodes keep
/// their indices 0..n_r; new nodes are appended in task order and entered
/// into `map`. Edges to old nodes are rewired through `map`; the rare edge
/// whose old endpoint is unresolvable is dropped. Labels on new nodes are
/// restricted to `train_ids` so that held-out labels never reach the
/// super-node vote.
fn combine(
    dataset: &TimestampedGraph,
    task: &TaskSubgraph,
    reduced: Option<&SparseGraph>,
    map: &mut HashMap<u64, usize>,
    train_ids: &HashSet<u64>,
) -> SparseGraph {
    let d = dataset.feature_dim();
    let nr = reduced.map(|g| g.n()).unwrap_or(0);
    let new_ids: Vec<u64> = task.new_node_ids().collect();
    let n = nr + new_ids.len();

    let mut x = Array2::zeros((n, d));
    let mut labels = vec![None; n];
    if let Some(r) = reduced {
        for i in 0..nr {
            for k in 0..d {
                x[[i, k]] = r.features()[[i, k]];
            }
            labels[i] = r.label(i);
        }
    }
    for (k, &id) in new_ids.iter().enumerate() {
        let i = nr + k;
        let rec = dataset.node(id).unwrap();
        for (j, &f) in rec.features.iter().enumerate() {
            x[[i, j]] = f;
        }
        if train_ids.contains(&id) {
            labels[i] = rec.label;
        }
        map.insert(id, i);
    }

    let mut g = SparseGraph::new(x, labels);
    if let Some(r) = reduced {
        for (u, v, w) in r.undirected_edges() {
            g.add_edge(u, v, w);
        }
    }
    for &(s, o) in &task.edges {
        let si = map[&s];
        let o_tau = dataset.node(o).unwrap().tau;
        if o_tau == task.task {
            g.add_edge(si, map[&o], 1.0);
        } else if let Some(&oi) = map.get(&o) {
            g.add_edge(si, oi, 1.0);
        }
        // else: old endpoint untracked, edge dropped
    }
    g
}

struct EvalSet {
    graph: SparseGraph,
    mask: Vec<usize>,
    truth: Vec<usize>,
}

/// Run the whole stream in one mode and report the evaluation matrix plus
/// the loop's size, timing, and partition traces.
pub fn run_stream(dataset: &TimestampedGraph, cfg: &RunConfig, mode: Mode) -> Result<RunReport> {
    cfg.validate()?;
    let num_classes = dataset.num_classes();
    if num_classes < 2 {
        return Err(Error::InvalidConfig(format!(
            "dataset has {num_classes} labeled classes, need at least 2"
        )));
    }
    let tasks = split_tasks(dataset);
    if tasks.is_empty() {
        return Err(Error::EmptyInput("stream has no tasks".into()));
    }
    let splits = make_splits(dataset, &tasks, cfg.seed);

    let eval_sets: Vec<EvalSet> = tasks
        .iter()
        .zip(&splits)
        .map(|(task, split)| {
            let (graph, index) = build_task_graph(dataset, task);
            let mask: Vec<usize> = split.test.iter().map(|id| index[id]).collect();
            let truth: Vec<usize> = split
                .test
                .iter()
                .map(|id| dataset.node(*id).unwrap().label.unwrap())
                .collect();
            EvalSet { graph, mask, truth }
        })
        .collect();

    let d = dataset.feature_dim();
    let mut model = GcnModel::new(
        d,
        cfg.hidden_dim,
        num_classes,
        seed_for(cfg.seed, "model-init-1"),
    );
    let mut buffer = ReplayBuffer::new(
        cfg.buffer_capacity,
        num_classes,
        cfg.buffer_strategy,
        seed_for(cfg.seed, "buffer"),
    );
    let mut reduced: Option<SparseGraph> = None;
    let mut map: HashMap<u64, usize> = HashMap::new();

    let mut matrix = MetricsMatrix::new();
    let mut reduced_sizes = Vec::new();
    let mut new_node_counts = Vec::new();
    let mut target_unreached = Vec::new();
    let mut timings = Vec::new();
    let mut partitions = Vec::new();
    let mut n_max = 0usize;

    for (ti, task) in tasks.iter().enumerate() {
        let n_new = task.is_new.iter().filter(|&&b| b).count();
        new_node_counts.push(n_new);
        n_max = n_max.max(n_new);
        let train_ids: HashSet<u64> = splits[ti].train.iter().copied().collect();

        let mut train_secs = 0.0;
        let mut coarsen_secs = 0.0;

        match mode {
            Mode::Taco => {
                let start = Instant::now();
                let combined = combine(dataset, task, reduced.as_ref(), &mut map, &train_ids);
                coarsen_secs += start.elapsed().as_secs_f64();

                let mask: Vec<usize> = (0..combined.n())
                    .filter(|&v| combined.label(v).is_some())
                    .collect();
                let start = Instant::now();
                model.train(&combined, &mask, &cfg.train)?;
                train_secs += start.elapsed().as_secs_f64();

                let start = Instant::now();
                let entries: Vec<BufferEntry> = task
                    .new_node_ids()
                    .filter(|id| train_ids.contains(id))
                    .map(|id| {
                        let rec = dataset.node(id).unwrap();
                        BufferEntry {
                            node_id: id,
                            class: rec.label.unwrap(),
                            features: rec.features.clone(),
                        }
                    })
                    .collect();
                buffer.update(&entries);

                let (h, _) = model.forward(&combined)?;
                let protected = buffer.protected_set(&map)?;
                let keep = 1.0 - cfg.gamma;
                let partition = repro_coarsen(
                    &combined,
                    &h,
                    &protected,
                    keep,
                    cfg.epsilon,
                    cfg.importance,
                );
                let np = normalize_partition(&partition);
                let next = generate_reduced(&combined, &np, partition.target_reached());
                for idx in map.values_mut() {
                    *idx = partition.cluster_of(*idx);
                }
                let bound = (1.0 - cfg.gamma) / cfg.gamma * n_max as f64;
                assert!(
                    next.n() as f64 <= bound || !partition.target_reached() || bound < 1.0,
                    "reduced size {} exceeds bound {bound} after task {}",
                    next.n(),
                    task.task
                );
                reduced_sizes.push(next.n());
                target_unreached.push(!partition.target_reached());
                partitions.push(partition.clusters().to_vec());
                reduced = Some(next.graph);
                coarsen_secs += start.elapsed().as_secs_f64();
            }
            Mode::Finetune => {
                let (g, index) = build_task_graph(dataset, task);
                let mask: Vec<usize> = splits[ti].train.iter().map(|id| index[id]).collect();
                let start = Instant::now();
                model.train(&g, &mask, &cfg.train)?;
                train_secs += start.elapsed().as_secs_f64();
            }
            Mode::Joint => {
                model = GcnModel::new(
                    d,
                    cfg.hidden_dim,
                    num_classes,
                    seed_for(cfg.seed, &format!("model-init-{}", ti + 1)),
                );
                let (g, index) = build_union_graph(dataset, &tasks[..=ti]);
                let mask: Vec<usize> = splits[..=ti]
                    .iter()
                    .flat_map(|s| s.train.iter().map(|id| index[id]))
                    .collect();
                let start = Instant::now();
                model.train(&g, &mask, &cfg.train)?;
                train_secs += start.elapsed().as_secs_f64();
            }
        }

        let start = Instant::now();
        let mut row = Vec::with_capacity(ti + 1);
        for eval in &eval_sets[..=ti] {
            let pred = model.predict(&eval.graph, &eval.mask)?;
            row.push(Score {
                f1: macro_f1(&pred, &eval.truth)?,
                bacc: bacc(&pred, &eval.truth)?,
            });
        }
        let eval_secs = start.elapsed().as_secs_f64();
        matrix.push_row(row);
        timings.push([train_secs, coarsen_secs, eval_secs]);
    }

    let mut node_map: Vec<(u64, usize)> = map.into_iter().collect();
    node_map.sort_unstable();
    Ok(RunReport {
        mode,
        metrics: MetricsReport::from_matrix(&matrix)?,
        reduced_sizes,
        new_node_counts,
        target_unreached,
        timings,
        node_map,
        partitions,
    })
}

/// Union of the first tasks' subgraphs: every node indexed by its unique
/// new-arrival position, every edge with unit weight.
fn build_union_graph(
    dataset: &TimestampedGraph,
    tasks: &[TaskSubgraph],
) -> (SparseGraph, HashMap<u64, usize>) {
    let d = dataset.feature_dim();
    let mut index = HashMap::new();
    let mut records = Vec::new();
    for task in tasks {
        for id in task.new_node_ids() {
            index.insert(id, records.len());
            records.push(dataset.node(id).unwrap());
        }
    }
    let mut x = Array2::zeros((records.len(), d));
    let mut labels = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        for (k, &f) in rec.features.iter().enumerate() {
            x[[i, k]] = f;
        }
        labels.push(rec.label);
    }
    let mut g = SparseGraph::new(x, labels);
    for task in tasks {
        for &(s, o) in &task.edges {
            g.add_edge(index[&s], index[&o], 1.0);
        }
    }
    (g, index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::NodeRecord;
    use crate::synth::{generate_synthetic, SyntheticStreamSpec};

    fn record(id: u64, tau: u32, label: Option<usize>, features: Vec<f64>) -> NodeRecord {
        NodeRecord {
            id,
            tau,
            label,
            features,
        }
    }

    fn two_task_dataset() -> TimestampedGraph {
        // Task 1: nodes 1, 2 (edge 2->1). Task 2: nodes 3, 4; 3 cites 1.
        TimestampedGraph::new(
            vec![
                record(1, 1, Some(0), vec![1.0, 0.0]),
                record(2, 1, Some(1), vec![0.0, 1.0]),
                record(3, 2, Some(0), vec![1.0, 0.0]),
                record(4, 2, Some(1), vec![0.0, 1.0]),
            ],
            vec![(2, 1), (3, 1), (4, 3)],
        )
        .unwrap()
    }

    #[test]
    fn combine_without_reduced_graph_is_task_subgraph() {
        let g = two_task_dataset();
        let tasks = split_tasks(&g);
        let mut map = HashMap::new();
        let train: HashSet<u64> = [1, 2].into_iter().collect();
        let c = combine(&g, &tasks[0], None, &mut map, &train);
        assert_eq!(c.n(), 2);
        assert_eq!(c.adjacency().get(map[&1], map[&2]), 1.0);
        assert_eq!(c.label(map[&1]), Some(0));
    }

    #[test]
    fn combine_rewires_old_targets_through_map() {
        let g = two_task_dataset();
        let tasks = split_tasks(&g);
        // Pretend task 1 was reduced to a single super-node at index 0.
        let reduced = {
            let mut r = SparseGraph::new(Array2::from_elem((1, 2), 0.5), vec![Some(0)]);
            r.add_edge(0, 0, 2.0);
            r
        };
        let mut map: HashMap<u64, usize> = [(1u64, 0usize), (2, 0)].into_iter().collect();
        let train: HashSet<u64> = [3, 4].into_iter().collect();
        let c = combine(&g, &tasks[1], Some(&reduced), &mut map, &train);
        assert_eq!(c.n(), 3);
        // Case 1: both endpoints new -> unit edge between them.
        assert_eq!(c.adjacency().get(map[&4], map[&3]), 1.0);
        // Case 2: new source, old target -> edge to the super-node.
        assert_eq!(c.adjacency().get(map[&3], 0), 1.0);
        // The super-node's self-loop carries over.
        assert_eq!(c.adjacency().get(0, 0), 2.0);
    }

    #[test]
    fn combine_drops_edges_to_untracked_old_nodes() {
        let g = two_task_dataset();
        let tasks = split_tasks(&g);
        let reduced = SparseGraph::new(Array2::zeros((1, 2)), vec![Some(0)]);
        // Node 1 missing from the map: the (3, 1) edge must vanish.
        let mut map: HashMap<u64, usize> = [(2u64, 0usize)].into_iter().collect();
        let c = combine(&g, &tasks[1], Some(&reduced), &mut map, &HashSet::new());
        assert_eq!(c.adjacency().row_sum(0), 0.0);
        assert_eq!(c.adjacency().get(map[&4], map[&3]), 1.0);
    }

    #[test]
    fn combine_keeps_held_out_labels_hidden() {
        let g = two_task_dataset();
        let tasks = split_tasks(&g);
        let mut map = HashMap::new();
        let train: HashSet<u64> = [1].into_iter().collect();
        let c = combine(&g, &tasks[0], None, &mut map, &train);
        assert_eq!(c.label(map[&1]), Some(0));
        assert_eq!(c.label(map[&2]), None);
    }

    fn small_spec(tasks: usize, seed: u64) -> SyntheticStreamSpec {
        SyntheticStreamSpec {
            tasks,
            nodes_per_task: 60,
            classes: 3,
            drift: (0..tasks)
                .map(|t| {
                    let mut p = vec![1.0; 3];
                    p[t % 3] = 4.0;
                    let s: f64 = p.iter().sum();
                    p.iter().map(|v| v / s).collect()
                })
                .collect(),
            p_intra: 0.15,
            p_inter: 0.02,
            p_cross: 0.02,
            feature_dim: 8,
            noise: 0.4,
            masked_classes: vec![Vec::new(); tasks],
            seed,
        }
    }

    #[test]
    fn single_task_modes_agree_bitwise() {
        let g = generate_synthetic(&small_spec(1, 5)).unwrap();
        let cfg = RunConfig {
            hidden_dim: 8,
            train: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            seed: 11,
            ..RunConfig::default()
        };
        let taco = run_stream(&g, &cfg, Mode::Taco).unwrap();
        let fine = run_stream(&g, &cfg, Mode::Finetune).unwrap();
        let joint = run_stream(&g, &cfg, Mode::Joint).unwrap();
        assert_eq!(taco.metrics.matrix, fine.metrics.matrix);
        assert_eq!(taco.metrics.matrix, joint.metrics.matrix);
        // One task: AP is that task's score and AF is zero.
        assert_eq!(taco.metrics.f1_ap, taco.metrics.matrix[0][0][0]);
        assert_eq!(taco.metrics.f1_af, 0.0);
    }

    #[test]
    fn reduced_sizes_respect_running_bound() {
        let g = generate_synthetic(&small_spec(4, 9)).unwrap();
        for gamma in [0.3, 0.5, 0.7] {
            let cfg = RunConfig {
                gamma,
                hidden_dim: 8,
                train: TrainConfig {
                    epochs: 20,
                    ..TrainConfig::default()
                },
                seed: 3,
                ..RunConfig::default()
            };
            let report = run_stream(&g, &cfg, Mode::Taco).unwrap();
            let n_max = *report.new_node_counts.iter().max().unwrap() as f64;
            let bound = (1.0 - gamma) / gamma * n_max;
            for (&size, &unreached) in report.reduced_sizes.iter().zip(&report.target_unreached) {
                assert!(
                    size as f64 <= bound || unreached,
                    "gamma {gamma}: size {size} > bound {bound}"
                );
            }
        }
    }

    #[test]
    fn node_map_recomposes_from_partitions() {
        let g = generate_synthetic(&small_spec(3, 21)).unwrap();
        let cfg = RunConfig {
            hidden_dim: 8,
            train: TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
            seed: 7,
            ..RunConfig::default()
        };
        let report = run_stream(&g, &cfg, Mode::Taco).unwrap();
        let tasks = split_tasks(&g);
        let mut m: HashMap<u64, usize> = HashMap::new();
        let mut prev_nr = 0;
        for (ti, task) in tasks.iter().enumerate() {
            for (k, id) in task.new_node_ids().enumerate() {
                m.insert(id, prev_nr + k);
            }
            for idx in m.values_mut() {
                *idx = report.partitions[ti][*idx];
            }
            prev_nr = report.reduced_sizes[ti];
        }
        let mut got: Vec<(u64, usize)> = m.into_iter().collect();
        got.sort_unstable();
        assert_eq!(got, report.node_map);
        // Closure: every mapped index is a valid reduced-graph node.
        let final_n = *report.reduced_sizes.last().unwrap();
        assert!(report.node_map.iter().all(|&(_, idx)| idx < final_n));
        assert_eq!(report.node_map.len(), g.nodes().len());
    }

    #[test]
    fn replay_beats_finetune_on_drifting_stream() {
        let mut spec = small_spec(4, 33);
        spec.nodes_per_task = 100;
        // Hide one class per task so finetune must forget it.
        spec.masked_classes = vec![vec![2], vec![0], vec![1], vec![2]];
        let g = generate_synthetic(&spec).unwrap();
        let cfg = RunConfig {
            hidden_dim: 16,
            train: TrainConfig {
                epochs: 60,
                ..TrainConfig::default()
            },
            seed: 1,
            ..RunConfig::default()
        };
        let taco = run_stream(&g, &cfg, Mode::Taco).unwrap();
        let fine = run_stream(&g, &cfg, Mode::Finetune).unwrap();
        assert!(
            taco.metrics.f1_af < fine.metrics.f1_af,
            "taco AF {} vs finetune AF {}",
            taco.metrics.f1_af,
            fine.metrics.f1_af
        );
    }

    #[test]
    fn invalid_gamma_is_rejected() {
        let g = generate_synthetic(&small_spec(1, 2)).unwrap();
        let cfg = RunConfig {
            gamma: 1.0,
            ..RunConfig::default()
        };
        assert!(run_stream(&g, &cfg, Mode::Taco).is_err());
    }
}
