//! Dataset loading and splitting of a timestamped graph into the ordered
//! task sequence.
//!
//! Node file: one node per line, `node_id <TAB> tau <TAB> label_or_dash
//! <TAB> f_1,f_2,...`. Edge file: `source_id <TAB> target_id`. Time periods
//! are pre-binned integers; the loader does not re-bin dates.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: u64,
    pub tau: u32,
    pub label: Option<usize>,
    pub features: Vec<f64>,
}

/// The full stream: directed edges, node timestamps, features, labels.
#[derive(Debug, Clone)]
pub struct TimestampedGraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<(u64, u64)>,
    feature_dim: usize,
    num_classes: usize,
    index: HashMap<u64, usize>,
}

impl TimestampedGraph {
    /// Validate and build from in-memory records. Node order is preserved.
    pub fn new(nodes: Vec<NodeRecord>, edges: Vec<(u64, u64)>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        let feature_dim = nodes.first().map(|n| n.features.len()).unwrap_or(0);
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(node.id, i).is_some() {
                return Err(Error::Inconsistent(format!("duplicate node id {}", node.id)));
            }
            if node.features.len() != feature_dim {
                return Err(Error::Inconsistent(format!(
                    "node {} has {} features, expected {}",
                    node.id,
                    node.features.len(),
                    feature_dim
                )));
            }
        }
        let num_classes = nodes
            .iter()
            .filter_map(|n| n.label)
            .max()
            .map(|m| m + 1)
            .unwrap_or(0);
        for &(s, o) in &edges {
            if s == o {
                return Err(Error::Inconsistent(format!("self-loop on node {s}")));
            }
            let (si, oi) = match (index.get(&s), index.get(&o)) {
                (Some(&si), Some(&oi)) => (si, oi),
                _ => {
                    return Err(Error::Inconsistent(format!("dangling edge ({s}, {o})")));
                }
            };
            if nodes[oi].tau > nodes[si].tau {
                return Err(Error::Inconsistent(format!(
                    "edge ({s}, {o}): target period {} newer than source period {}",
                    nodes[oi].tau, nodes[si].tau
                )));
            }
        }
        Ok(TimestampedGraph {
            nodes,
            edges,
            feature_dim,
            num_classes,
            index,
        })
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(u64, u64)] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of classes (max label + 1); 0 when fully unlabeled.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn node(&self, id: u64) -> Option<&NodeRecord> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn write_files(&self, node_path: &Path, edge_path: &Path) -> Result<()> {
        let io_err = |p: &Path| {
            let p = p.display().to_string();
            move |e| Error::Io { path: p, source: e }
        };
        let mut nf = std::io::BufWriter::new(
            std::fs::File::create(node_path).map_err(io_err(node_path))?,
        );
        for n in &self.nodes {
            let label = n
                .label
                .map(|l| l.to_string())
                .unwrap_or_else(|| "-".to_string());
            let feats: Vec<String> = n.features.iter().map(|f| f.to_string()).collect();
            writeln!(nf, "{}\t{}\t{}\t{}", n.id, n.tau, label, feats.join(","))
                .map_err(io_err(node_path))?;
        }
        let mut ef = std::io::BufWriter::new(
            std::fs::File::create(edge_path).map_err(io_err(edge_path))?,
        );
        for &(s, o) in &self.edges {
            writeln!(ef, "{s}\t{o}").map_err(io_err(edge_path))?;
        }
        Ok(())
    }
}

/// One task of the stream: edges whose source is new in period `task`,
/// plus all their endpoints.
#[derive(Debug, Clone)]
pub struct TaskSubgraph {
    pub task: u32,
    /// Nodes in deterministic order: new nodes in file order first, then
    /// old target nodes in first-appearance order.
    pub node_ids: Vec<u64>,
    /// True for nodes with tau(v) == task, aligned with `node_ids`.
    pub is_new: Vec<bool>,
    pub edges: Vec<(u64, u64)>,
}

impl TaskSubgraph {
    pub fn new_node_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.node_ids
            .iter()
            .zip(&self.is_new)
            .filter(|&(_, &new)| new)
            .map(|(&id, _)| id)
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Load and validate a dataset from a node file and an edge file.
pub fn load_dataset(node_path: &Path, edge_path: &Path) -> Result<TimestampedGraph> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|e| Error::Io {
            path: p.display().to_string(),
            source: e,
        })
    };

    let mut nodes = Vec::new();
    let mut index: HashMap<u64, (usize, u32)> = HashMap::new();
    let mut feature_dim: Option<usize> = None;
    for (lineno, line) in BufReader::new(open(node_path)?).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Io {
            path: node_path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                node_path,
                lineno,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let id: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(node_path, lineno, format!("bad node id `{}`", fields[0])))?;
        let tau: u32 = fields[1]
            .parse()
            .map_err(|_| parse_err(node_path, lineno, format!("bad time period `{}`", fields[1])))?;
        let label = if fields[2] == "-" {
            None
        } else {
            Some(fields[2].parse::<usize>().map_err(|_| {
                parse_err(node_path, lineno, format!("bad label `{}`", fields[2]))
            })?)
        };
        let features: Vec<f64> = if fields[3].is_empty() {
            Vec::new()
        } else {
            fields[3]
                .split(',')
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| parse_err(node_path, lineno, format!("bad feature `{f}`")))
                })
                .collect::<Result<_>>()?
        };
        match feature_dim {
            None => feature_dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(parse_err(
                    node_path,
                    lineno,
                    format!("{} features, expected {}", features.len(), d),
                ));
            }
            _ => {}
        }
        if index.insert(id, (lineno, tau)).is_some() {
            return Err(Error::Constraint {
                path: node_path.display().to_string(),
                line: lineno,
                msg: format!("duplicate node id {id}"),
            });
        }
        nodes.push(NodeRecord {
            id,
            tau,
            label,
            features,
        });
    }

    let constraint = |line, msg: String| Error::Constraint {
        path: edge_path.display().to_string(),
        line,
        msg,
    };
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(open(edge_path)?).lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::Io {
            path: edge_path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(
                edge_path,
                lineno,
                format!("expected 2 tab-separated fields, got {}", fields.len()),
            ));
        }
        let s: u64 = fields[0]
            .parse()
            .map_err(|_| parse_err(edge_path, lineno, format!("bad source id `{}`", fields[0])))?;
        let o: u64 = fields[1]
            .parse()
            .map_err(|_| parse_err(edge_path, lineno, format!("bad target id `{}`", fields[1])))?;
        if s == o {
            return Err(constraint(lineno, format!("self-loop on node {s}")));
        }
        let (s_tau, o_tau) = match (index.get(&s), index.get(&o)) {
            (Some(&(_, st)), Some(&(_, ot))) => (st, ot),
            (None, _) => return Err(constraint(lineno, format!("unknown source node {s}"))),
            (_, None) => return Err(constraint(lineno, format!("unknown target node {o}"))),
        };
        if o_tau > s_tau {
            return Err(constraint(
                lineno,
                format!("target period {o_tau} newer than source period {s_tau}"),
            ));
        }
        edges.push((s, o));
    }

    TimestampedGraph::new(nodes, edges)
}

/// Split the stream into one task per distinct time period, in ascending
/// order. An edge (s, o) belongs to task t iff tau(s) = t; a node belongs
/// iff tau(v) = t or it is the target of such an edge.
pub fn split_tasks(g: &TimestampedGraph) -> Vec<TaskSubgraph> {
    let mut taus: Vec<u32> = g.nodes().iter().map(|n| n.tau).collect();
    taus.sort_unstable();
    taus.dedup();

    let mut tasks: Vec<TaskSubgraph> = taus
        .iter()
        .map(|&t| TaskSubgraph {
            task: t,
            node_ids: Vec::new(),
            is_new: Vec::new(),
            edges: Vec::new(),
        })
        .collect();
    let slot: HashMap<u32, usize> = taus.iter().enumerate().map(|(i, &t)| (t, i)).collect();

    for node in g.nodes() {
        let task = &mut tasks[slot[&node.tau]];
        task.node_ids.push(node.id);
        task.is_new.push(true);
    }
    // Old targets, appended after the new nodes in first-appearance order.
    let mut seen: Vec<HashMap<u64, ()>> = vec![HashMap::new(); taus.len()];
    for &(s, o) in g.edges() {
        let s_tau = g.node(s).unwrap().tau;
        let o_tau = g.node(o).unwrap().tau;
        let ti = slot[&s_tau];
        tasks[ti].edges.push((s, o));
        if o_tau != s_tau && seen[ti].insert(o, ()).is_none() {
            tasks[ti].node_ids.push(o);
            tasks[ti].is_new.push(false);
        }
    }
    tasks
}

/// Train/validation/test node ids for one task, drawn from its labeled new
/// nodes.
#[derive(Debug, Clone, Default)]
pub struct TaskSplit {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

/// 30/20/50 random split over each task's labeled new nodes, seeded.
pub fn make_splits(g: &TimestampedGraph, tasks: &[TaskSubgraph], seed: u64) -> Vec<TaskSplit> {
    tasks
        .iter()
        .map(|task| {
            let mut rng =
                ChaCha20Rng::seed_from_u64(crate::seed::seed_for(seed, &format!("split-{}", task.task)));
            let mut labeled: Vec<u64> = task
                .new_node_ids()
                .filter(|&id| g.node(id).unwrap().label.is_some())
                .collect();
            labeled.shuffle(&mut rng);
            let n = labeled.len();
            let n_train = (n as f64 * 0.3).round() as usize;
            let n_val = (n as f64 * 0.2).round() as usize;
            let n_val = n_val.min(n - n_train);
            TaskSplit {
                train: labeled[..n_train].to_vec(),
                val: labeled[n_train..n_train + n_val].to_vec(),
                test: labeled[n_train + n_val..].to_vec(),
            }
        })
        .collect()
}
