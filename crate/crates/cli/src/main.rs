//! `taco` — experiment driver for topology-aware coarsening and continual
//! learning on timestamped graph streams.
//!
//! Datasets live in a directory holding `nodes.tsv` (`id  tau  label|-
//! f1,f2,...`) and `edges.tsv` (`source  target`). Settings resolve as
//! CLI flag > config-file key > built-in default, and every command that
//! writes output also writes a manifest recording the resolved settings.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use taco_core::{
    check_laplacian_equivalence, generate_reduced, generate_synthetic, load_dataset,
    merge_pair_quadratic_deviation, normalize_partition, repro_coarsen, run_stream,
    simulate_partition_vote, BufferStrategy, GcnModel, ImportanceMeasure, Mode, NodeRecord,
    RunConfig, SparseGraph, SyntheticStreamSpec, TimestampedGraph, TrainConfig, VoteSimConfig,
};

#[derive(Parser)]
#[command(name = "taco", version, about = "Streaming-graph continual learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a task stream in one mode and write the evaluation report.
    Run(RunArgs),
    /// Coarsen a whole dataset once and write the reduced graph.
    Coarsen(CoarsenArgs),
    /// Monte Carlo estimate of the majority-vote class distribution.
    SimulateVote(VoteArgs),
    /// Quadratic-form deviation when merging a node pair.
    CheckSpectral(SpectralArgs),
    /// Generate a synthetic drifting stream.
    GenSynthetic(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Directory containing nodes.tsv and edges.tsv.
    #[arg(long)]
    tasks: PathBuf,
    /// Output JSON report path.
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value config file; CLI flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// taco | finetune | joint.
    #[arg(long)]
    mode: Option<String>,
    /// Reduction ratio: fraction of combined-graph nodes removed per task.
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Replay buffer capacity.
    #[arg(long)]
    buffer: Option<usize>,
    /// reservoir | ring | mean_features.
    #[arg(long)]
    strategy: Option<String>,
    /// degree | ndsum.
    #[arg(long)]
    importance: Option<String>,
}

#[derive(Args)]
struct CoarsenArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// Output directory for the reduced nodes.tsv/edges.tsv and mapping.tsv.
    #[arg(long)]
    out: PathBuf,
    /// Target fraction of nodes kept (the reduced graph has ~gamma*n nodes).
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    /// degree | ndsum.
    #[arg(long, default_value = "degree")]
    importance: String,
    #[arg(long, default_value_t = 2.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 48)]
    hidden: usize,
    /// Epochs for the embedding model trained before scoring.
    #[arg(long, default_value_t = 100)]
    epochs: usize,
}

#[derive(Args)]
struct VoteArgs {
    #[arg(long)]
    n: usize,
    /// Class count; must match the length of --p.
    #[arg(long)]
    c: usize,
    /// Comma-separated class distribution, e.g. 0.5,0.5.
    #[arg(long)]
    p: String,
    /// Fraction of nodes kept: the partition has floor(gamma*n) clusters.
    #[arg(long)]
    gamma: f64,
    /// Protected singleton clusters (0 = off).
    #[arg(long, default_value_t = 0)]
    b: usize,
    #[arg(long, default_value_t = 2000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// Original id of the first node of the pair.
    #[arg(long)]
    i: u64,
    /// Original id of the second node of the pair.
    #[arg(long)]
    j: u64,
    #[arg(long, default_value_t = 100)]
    vectors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Measure the deviation even when the structural precondition fails.
    #[arg(long)]
    unchecked: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for nodes.tsv and edges.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    tasks: usize,
    #[arg(long, default_value_t = 500)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Per-task class mixtures, tasks separated by ';', classes by ','.
    /// Default: a peak rotating through the classes.
    #[arg(long)]
    drift: Option<String>,
    /// Per-task masked classes, tasks separated by ';' (empty = none),
    /// e.g. "2;;0,1".
    #[arg(long)]
    mask: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.005)]
    p_inter: f64,
    #[arg(long, default_value_t = 0.01)]
    p_cross: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.6)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    if let Err(err) = dispatch(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Coarsen(args) => cmd_coarsen(args),
        Command::SimulateVote(args) => cmd_simulate_vote(args),
        Command::CheckSpectral(args) => cmd_check_spectral(args),
        Command::GenSynthetic(args) => cmd_gen_synthetic(args),
    }
}

fn load_tasks(dir: &Path) -> Result<TimestampedGraph> {
    load_dataset(&dir.join("nodes.tsv"), &dir.join("edges.tsv"))
        .with_context(|| format!("loading dataset from {}", dir.display()))
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// CLI flag > config-file key > default; records the resolved value.
fn pick<T>(
    cli: Option<T>,
    cfg: &mut BTreeMap<String, String>,
    key: &str,
    default: T,
    resolved: &mut BTreeMap<String, String>,
) -> Result<T>
where
    T: FromStr + ToString,
    T::Err: std::fmt::Display,
{
    let value = match cli {
        Some(v) => v,
        None => match cfg.remove(key) {
            Some(s) => s
                .parse()
                .map_err(|e| anyhow!("config key `{key}`: {e}"))?,
            None => default,
        },
    };
    resolved.insert(key.to_string(), value.to_string());
    Ok(value)
}

fn parse_importance(s: &str) -> Result<ImportanceMeasure> {
    match s {
        "degree" => Ok(ImportanceMeasure::Degree),
        "ndsum" => Ok(ImportanceMeasure::NdSum),
        other => bail!("unknown importance measure `{other}` (expected degree | ndsum)"),
    }
}

fn parse_strategy(s: &str) -> Result<BufferStrategy> {
    match s {
        "reservoir" => Ok(BufferStrategy::Reservoir),
        "ring" => Ok(BufferStrategy::Ring),
        "mean_features" => Ok(BufferStrategy::MeanFeatures),
        other => bail!("unknown buffer strategy `{other}` (expected reservoir | ring | mean_features)"),
    }
}

fn write_manifest(path: &Path, command: &str, settings: &BTreeMap<String, String>) -> Result<()> {
    let manifest = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "settings": settings,
    });
    fs::write(path, serde_json::to_string_pretty(&manifest)?)
        .with_context(|| format!("writing manifest {}", path.display()))?;
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => read_config(path)?,
        None => BTreeMap::new(),
    };
    let mut resolved = BTreeMap::new();
    let defaults = RunConfig::default();
    let mode_str = pick(args.mode, &mut cfg, "mode", "taco".to_string(), &mut resolved)?;
    let mode = Mode::from_str(&mode_str)?;
    let gamma = pick(args.gamma, &mut cfg, "gamma", defaults.gamma, &mut resolved)?;
    let epsilon = pick(args.epsilon, &mut cfg, "epsilon", defaults.epsilon, &mut resolved)?;
    let seed = pick(args.seed, &mut cfg, "seed", defaults.seed, &mut resolved)?;
    let hidden = pick(args.hidden, &mut cfg, "hidden", defaults.hidden_dim, &mut resolved)?;
    let epochs = pick(args.epochs, &mut cfg, "epochs", defaults.train.epochs, &mut resolved)?;
    let learning_rate = pick(
        args.learning_rate,
        &mut cfg,
        "learning_rate",
        defaults.train.learning_rate,
        &mut resolved,
    )?;
    let weight_decay = pick(
        args.weight_decay,
        &mut cfg,
        "weight_decay",
        defaults.train.weight_decay,
        &mut resolved,
    )?;
    let buffer = pick(args.buffer, &mut cfg, "buffer", defaults.buffer_capacity, &mut resolved)?;
    let strategy = pick(args.strategy, &mut cfg, "strategy", "reservoir".to_string(), &mut resolved)?;
    let importance = pick(args.importance, &mut cfg, "importance", "degree".to_string(), &mut resolved)?;
    if let Some(key) = cfg.keys().next() {
        bail!("unknown config key `{key}`");
    }
    resolved.insert("tasks".into(), args.tasks.display().to_string());

    let run_cfg = RunConfig {
        gamma,
        epsilon,
        importance: parse_importance(&importance)?,
        buffer_capacity: buffer,
        buffer_strategy: parse_strategy(&strategy)?,
        hidden_dim: hidden,
        train: TrainConfig {
            epochs,
            learning_rate,
            weight_decay,
        },
        seed,
    };
    let dataset = load_tasks(&args.tasks)?;
    let report = run_stream(&dataset, &run_cfg, mode)?;
    fs::write(&args.out, serde_json::to_string_pretty(&report)?)
        .with_context(|| format!("writing report {}", args.out.display()))?;
    write_manifest(&args.out.with_extension("manifest.json"), "run", &resolved)?;
    println!(
        "mode={mode_str} tasks={} f1_ap={:.4} f1_af={:.4} bacc_ap={:.4}",
        report.metrics.matrix.len(),
        report.metrics.f1_ap,
        report.metrics.f1_af,
        report.metrics.bacc_ap,
    );
    Ok(())
}

fn cmd_coarsen(args: CoarsenArgs) -> Result<()> {
    let dataset = load_tasks(&args.tasks)?;
    let importance = parse_importance(&args.importance)?;
    if !(args.gamma > 0.0 && args.gamma < 1.0) {
        bail!("gamma must lie in (0, 1)");
    }

    // Whole dataset as one undirected graph, nodes in file order.
    let n = dataset.nodes().len();
    let d = dataset.feature_dim();
    let mut x = ndarray::Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut index = std::collections::HashMap::new();
    for (i, rec) in dataset.nodes().iter().enumerate() {
        for (k, &f) in rec.features.iter().enumerate() {
            x[[i, k]] = f;
        }
        labels.push(rec.label);
        index.insert(rec.id, i);
    }
    let mut g = SparseGraph::new(x, labels);
    for &(s, o) in dataset.edges() {
        g.add_edge(index[&s], index[&o], 1.0);
    }

    // Similarity embeddings: a trained model's hidden layer when labels
    // exist, raw features otherwise.
    let labeled: Vec<usize> = (0..n).filter(|&v| g.label(v).is_some()).collect();
    let h = if dataset.num_classes() >= 2 && !labeled.is_empty() {
        let mut model = GcnModel::new(
            d,
            args.hidden,
            dataset.num_classes(),
            taco_core::seed_for(args.seed, "coarsen-model"),
        );
        model.train(
            &g,
            &labeled,
            &TrainConfig {
                epochs: args.epochs,
                ..TrainConfig::default()
            },
        )?;
        model.forward(&g)?.0
    } else {
        g.features().clone()
    };

    let partition = repro_coarsen(
        &g,
        &h,
        &std::collections::HashSet::new(),
        args.gamma,
        args.epsilon,
        importance,
    );
    let reduced = generate_reduced(&g, &normalize_partition(&partition), partition.target_reached());

    fs::create_dir_all(&args.out)?;
    write_reduced_stream(&reduced.graph, &args.out)?;
    let mut mapping = fs::File::create(args.out.join("mapping.tsv"))?;
    for rec in dataset.nodes() {
        writeln!(mapping, "{}\t{}", rec.id, reduced.cluster_of[index[&rec.id]] + 1)?;
    }

    let mut settings = BTreeMap::new();
    settings.insert("tasks".into(), args.tasks.display().to_string());
    settings.insert("gamma".into(), args.gamma.to_string());
    settings.insert("importance".into(), args.importance.clone());
    settings.insert("epsilon".into(), args.epsilon.to_string());
    settings.insert("seed".into(), args.seed.to_string());
    settings.insert("hidden".into(), args.hidden.to_string());
    settings.insert("epochs".into(), args.epochs.to_string());
    write_manifest(&args.out.join("manifest.json"), "coarsen", &settings)?;
    println!(
        "coarsened {n} -> {} nodes (target {}, reached: {})",
        reduced.n(),
        partition.target(),
        partition.target_reached()
    );
    Ok(())
}

/// Emit a reduced graph in the stream format: super-node ids are 1-based
/// cluster ids, all in period 1. Integer edge weights become repeated edge
/// lines; self-loops are dropped (the format forbids them).
fn write_reduced_stream(g: &SparseGraph, dir: &Path) -> Result<()> {
    let mut records = Vec::with_capacity(g.n());
    for v in 0..g.n() {
        records.push(NodeRecord {
            id: (v + 1) as u64,
            tau: 1,
            label: g.label(v),
            features: g.features().row(v).to_vec(),
        });
    }
    let mut edges = Vec::new();
    for (u, v, w) in g.undirected_edges() {
        if u == v {
            continue;
        }
        for _ in 0..(w.round() as usize) {
            edges.push(((v + 1) as u64, (u + 1) as u64));
        }
    }
    let out = TimestampedGraph::new(records, edges)?;
    out.write_files(&dir.join("nodes.tsv"), &dir.join("edges.tsv"))?;
    Ok(())
}

fn cmd_simulate_vote(args: VoteArgs) -> Result<()> {
    let p: Vec<f64> = args
        .p
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| anyhow!("bad probability `{s}`: {e}")))
        .collect::<Result<_>>()?;
    if p.len() != args.c {
        bail!("--p has {} entries but --c is {}", p.len(), args.c);
    }
    let cfg = VoteSimConfig {
        n: args.n,
        c: args.c,
        p: p.clone(),
        gamma: args.gamma,
        b: args.b,
        trials: args.trials,
        seed: args.seed,
    };
    let result = simulate_partition_vote(&cfg)?;

    let mut csv = String::from("p_k,gamma,b,estimate,stderr\n");
    for k in 0..args.c {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p[k], args.gamma, args.b, result.mean[k], result.stderr[k]
        ));
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?;
            let mut settings = BTreeMap::new();
            settings.insert("n".into(), args.n.to_string());
            settings.insert("c".into(), args.c.to_string());
            settings.insert("p".into(), args.p.clone());
            settings.insert("gamma".into(), args.gamma.to_string());
            settings.insert("b".into(), args.b.to_string());
            settings.insert("trials".into(), args.trials.to_string());
            settings.insert("seed".into(), args.seed.to_string());
            write_manifest(&path.with_extension("manifest.json"), "simulate-vote", &settings)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_check_spectral(args: SpectralArgs) -> Result<()> {
    let dataset = load_tasks(&args.tasks)?;
    let n = dataset.nodes().len();
    let d = dataset.feature_dim();
    let mut x = ndarray::Array2::zeros((n, d));
    let mut index = std::collections::HashMap::new();
    for (i, rec) in dataset.nodes().iter().enumerate() {
        index.insert(rec.id, i);
        for (k, &f) in rec.features.iter().enumerate() {
            x[[i, k]] = f;
        }
    }
    let mut g = SparseGraph::new(x, vec![None; n]);
    for &(s, o) in dataset.edges() {
        g.add_edge(index[&s], index[&o], 1.0);
    }
    let lookup = |id: u64| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| anyhow!("node {id} not in dataset"))
    };
    let (i, j) = (lookup(args.i)?, lookup(args.j)?);
    let deviation = if args.unchecked {
        merge_pair_quadratic_deviation(&g, i, j, args.vectors, args.seed)?
    } else {
        check_laplacian_equivalence(&g, i, j, args.vectors, args.seed)?
    };
    println!("{deviation:e}");
    Ok(())
}

fn rotating_drift(tasks: usize, classes: usize) -> Vec<Vec<f64>> {
    (0..tasks)
        .map(|t| {
            let mut row = vec![1.0; classes];
            row[t % classes] = 4.0;
            let total: f64 = row.iter().sum();
            row.iter().map(|v| v / total).collect()
        })
        .collect()
}

fn parse_drift(s: &str, tasks: usize, classes: usize) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("bad drift entry `{v}`: {e}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != tasks {
        bail!("drift schedule has {} rows, expected {tasks}", rows.len());
    }
    if rows.iter().any(|r| r.len() != classes) {
        bail!("every drift row needs {classes} entries");
    }
    Ok(rows)
}

fn parse_mask(s: &str, tasks: usize) -> Result<Vec<Vec<usize>>> {
    let rows: Vec<Vec<usize>> = s
        .split(';')
        .map(|row| {
            row.split(',')
                .filter(|v| !v.trim().is_empty())
                .map(|v| v.trim().parse::<usize>().map_err(|e| anyhow!("bad mask entry `{v}`: {e}")))
                .collect()
        })
        .collect::<Result<_>>()?;
    if rows.len() != tasks {
        bail!("mask has {} rows, expected {tasks}", rows.len());
    }
    Ok(rows)
}

fn cmd_gen_synthetic(args: SynthArgs) -> Result<()> {
    let drift = match &args.drift {
        Some(s) => parse_drift(s, args.tasks, args.classes)?,
        None => rotating_drift(args.tasks, args.classes),
    };
    let masked_classes = match &args.mask {
        Some(s) => parse_mask(s, args.tasks)?,
        None => vec![Vec::new(); args.tasks],
    };
    let spec = SyntheticStreamSpec {
        tasks: args.tasks,
        nodes_per_task: args.nodes,
        classes: args.classes,
        drift,
        p_intra: args.p_intra,
        p_inter: args.p_inter,
        p_cross: args.p_cross,
        feature_dim: args.feature_dim,
        noise: args.noise,
        masked_classes,
        seed: args.seed,
    };
    let g = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out)?;
    g.write_files(&args.out.join("nodes.tsv"), &args.out.join("edges.tsv"))?;

    let mut settings = BTreeMap::new();
    settings.insert("tasks".into(), args.tasks.to_string());
    settings.insert("nodes".into(), args.nodes.to_string());
    settings.insert("classes".into(), args.classes.to_string());
    settings.insert("drift".into(), args.drift.clone().unwrap_or_else(|| "rotating".into()));
    settings.insert("mask".into(), args.mask.clone().unwrap_or_default());
    settings.insert("p_intra".into(), args.p_intra.to_string());
    settings.insert("p_inter".into(), args.p_inter.to_string());
    settings.insert("p_cross".into(), args.p_cross.to_string());
    settings.insert("feature_dim".into(), args.feature_dim.to_string());
    settings.insert("noise".into(), args.noise.to_string());
    settings.insert("seed".into(), args.seed.to_string());
    write_manifest(&args.out.join("manifest.json"), "gen-synthetic", &settings)?;
    println!("wrote {} nodes, {} edges to {}", g.nodes().len(), g.edges().len(), args.out.display());
    Ok(())
}
