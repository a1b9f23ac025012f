//! Topology-aware graph coarsening (RePro) and the TACO continual-learning
//! loop for node classification on timestamped streaming graphs, plus a
//! theory lab that validates the accompanying claims at desk scale.

#![forbid(unsafe_code)]

pub mod coarsen;
pub mod error;
pub mod fidelity;
pub mod framework;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod seed;
pub mod stream;
pub mod synth;
pub mod theory;

pub use coarsen::{
    generate_reduced, normalize_partition, repro_coarsen, score_edges, EdgeScore,
    ImportanceMeasure, NormalizedPartition, Partition, ReducedGraph,
};
pub use error::{Error, Result};
pub use fidelity::{BufferEntry, BufferStrategy, ReplayBuffer};
pub use framework::{Mode, RunConfig, RunReport, run_stream};
pub use gnn::{GcnModel, TrainConfig};
pub use graph::{SparseGraph, SparseMatrix};
pub use metrics::{af_st, ap_af, bacc, macro_f1, MetricsMatrix, MetricsReport, Score};
pub use seed::seed_for;
pub use stream::{load_dataset, split_tasks, NodeRecord, TaskSubgraph, TimestampedGraph};
pub use synth::{generate_synthetic, SyntheticStreamSpec};
pub use theory::{
    check_laplacian_equivalence, check_size_bound, merge_pair_quadratic_deviation,
    simulate_partition_vote, BoundCheck, VoteSimConfig, VoteSimResult,
};
