//! Subcommands of the `geniepath` binary.
//!
//! Exit codes: 0 on success, 1 when a check fails (gradient check, training
//! divergence), 2 on bad input.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use geniepath_core::data::{gen_planted_path, SynthSpec};
use geniepath_core::gradcheck::{fixture_batch, fixture_model};
use geniepath_core::metrics::Metrics;
use geniepath_core::paths::{extract_importance, receptive_subgraph};
use geniepath_core::train::{evaluate, grad_check_model, train};
use geniepath_core::{Dataset, Model, ModelConfig, Split, Task};

use crate::config::{DataSection, ModelSection, RunConfig};
use crate::{checkpoint, dot, io, Error};

#[derive(Debug, Parser)]
#[command(name = "geniepath", version, about = "Adaptive path graph neural networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes metrics.jsonl and model.gnpk to the output directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients on a tiny instance.
    Gradcheck(GradcheckArgs),
    /// Write a planted-path dataset and a matching config.
    Synth(SynthArgs),
    /// Export learned receptive paths around a node as DOT.
    Paths(PathsArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. --set model.depth=3.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Shorthand for --set model.seed=N.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("model.seed={seed}"));
        }
        Ok(RunConfig::load(&self.config, &overrides)?)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Take the model section from this config; defaults to GeniePath, T=2, K=3.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Fails when the largest relative error exceeds this.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Test hook: use a wrong tanh derivative in the backward pass.
    #[arg(long, hide = true)]
    pub corrupt_backward: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SynthSpec::default().num_graphs)]
    pub graphs: usize,
    #[arg(long, default_value_t = SynthSpec::default().nodes_per_graph)]
    pub nodes: usize,
    /// Distance from each target to its signal node.
    #[arg(long, default_value_t = SynthSpec::default().signal_hops)]
    pub hops: usize,
    #[arg(long, default_value_t = SynthSpec::default().hub_degree)]
    pub hub_degree: usize,
    #[arg(long, default_value_t = SynthSpec::default().noise_std)]
    pub noise_std: f64,
    #[arg(long, default_value_t = SynthSpec::default().decoy_scale)]
    pub decoy_scale: f64,
    #[arg(long, default_value_t = SynthSpec::default().num_features)]
    pub features: usize,
    #[arg(long, default_value_t = SynthSpec::default().train_graphs)]
    pub train_graphs: usize,
    #[arg(long, default_value_t = SynthSpec::default().val_graphs)]
    pub val_graphs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PathsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Node whose receptive paths are drawn.
    #[arg(long)]
    pub target: usize,
    #[arg(long, default_value_t = 2)]
    pub hops: usize,
    /// Layer whose attention weights are used.
    #[arg(long, default_value_t = 0)]
    pub layer: usize,
    /// Write DOT here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| format!("expected train, val or test, got {s:?}"))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Input(#[from] Error),
    #[error("{0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Check(_) => 1,
        }
    }
}

impl From<geniepath_core::Error> for CliError {
    fn from(e: geniepath_core::Error) -> Self {
        match e {
            geniepath_core::Error::Diverged { .. } => CliError::Check(e.to_string()),
            other => CliError::Input(Error::Core(other)),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Input(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    let text = match cli.command {
        Command::Train(a) => cmd_train(&a)?,
        Command::Eval(a) => cmd_eval(&a)?,
        Command::Gradcheck(a) => cmd_gradcheck(&a)?,
        Command::Synth(a) => cmd_synth(&a)?,
        Command::Paths(a) => cmd_paths(&a)?,
    };
    stdout
        .write_all(text.as_bytes())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(())
}

/// Dataset and freshly initialized model for a run config.
fn setup(config: &RunConfig) -> Result<(Dataset, Model), CliError> {
    let model_config = config.model.to_config()?;
    let dataset = config.data.load(model_config.task)?;
    let model = Model::new(model_config, dataset.num_features(), dataset.num_classes())?;
    Ok((dataset, model))
}

#[derive(Serialize)]
struct MetricRecord<'a> {
    epoch: usize,
    split: &'a str,
    metric: &'a str,
    value: f64,
}

fn metric_lines(out: &mut String, epoch: usize, split: Split, m: &Metrics) {
    for (metric, value) in [
        ("loss", m.loss),
        ("accuracy", m.accuracy),
        ("micro_f1", m.micro_f1),
        ("macro_f1", m.macro_f1),
    ] {
        let rec = MetricRecord {
            epoch,
            split: split.as_str(),
            metric,
            value,
        };
        out.push_str(&serde_json::to_string(&rec).expect("plain record"));
        out.push('\n');
    }
}

fn summary(m: &Metrics) -> String {
    format!(
        "loss={:.6} accuracy={:.6} micro_f1={:.6} macro_f1={:.6}",
        m.loss, m.accuracy, m.micro_f1, m.macro_f1
    )
}

pub fn cmd_train(args: &TrainArgs) -> Result<String, CliError> {
    let config = args.config.load()?;
    let (dataset, model) = setup(&config)?;
    let outcome = train(model, &dataset)?;

    let mut metrics = String::new();
    for rec in &outcome.history {
        metric_lines(&mut metrics, rec.epoch, Split::Train, &rec.train);
        if let Some(v) = &rec.val {
            metric_lines(&mut metrics, rec.epoch, Split::Val, v);
        }
    }
    let test = if dataset.nodes_in(Split::Test).is_empty() {
        None
    } else {
        let m = evaluate(&outcome.model, &dataset, Split::Test)?;
        metric_lines(&mut metrics, outcome.best_epoch, Split::Test, &m);
        Some(m)
    };

    fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
    let metrics_path = config.output_dir.join("metrics.jsonl");
    let ckpt_path = config.output_dir.join("model.gnpk");
    crate::error::write(&metrics_path, metrics)?;
    checkpoint::save(&ckpt_path, outcome.model.params())?;

    let mut out = format!(
        "trained {} epochs, best epoch {}\n",
        outcome.history.len() - 1,
        outcome.best_epoch
    );
    if let Some(m) = test {
        writeln!(out, "test {}", summary(&m)).unwrap();
    }
    writeln!(out, "wrote {} and {}", metrics_path.display(), ckpt_path.display()).unwrap();
    Ok(out)
}

fn restore(config: &ConfigArgs, ckpt: &Path) -> Result<(RunConfig, Dataset, Model), CliError> {
    let config = config.load()?;
    if !ckpt.is_file() {
        return Err(Error::Config(format!("checkpoint {} does not exist", ckpt.display())).into());
    }
    config.data.check_paths()?;
    let (dataset, mut model) = setup(&config)?;
    checkpoint::load_into(ckpt, &mut model)?;
    Ok((config, dataset, model))
}

pub fn cmd_eval(args: &EvalArgs) -> Result<String, CliError> {
    let (_, dataset, model) = restore(&args.config, &args.checkpoint)?;
    if dataset.nodes_in(args.split).is_empty() {
        return Err(Error::Config(format!("split {} has no nodes", args.split.as_str())).into());
    }
    let m = evaluate(&model, &dataset, args.split)?;
    Ok(format!("{} {}\n", args.split.as_str(), summary(&m)))
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<String, CliError> {
    let section = match &args.config {
        Some(path) => RunConfig::load(path, &args.set)?.model,
        None => {
            if !args.set.is_empty() {
                return Err(Error::Config("--set needs --config".into()).into());
            }
            ModelSection {
                depth: 2,
                hidden: 3,
                ..ModelSection::default()
            }
        }
    };
    let config: ModelConfig = section.to_config()?;
    let classes = 3;
    let batch = fixture_batch(config.task, classes);
    let model = fixture_model(config.clone(), classes)?;
    let report = grad_check_model(&model, &batch, args.eps, args.corrupt_backward)?;

    let mut out = format!(
        "variant={} depth={} hidden={} task={}\n",
        config.variant,
        config.depth,
        config.hidden,
        match config.task {
            Task::MultiClass => "multi-class",
            Task::MultiLabel => "multi-label",
        }
    );
    for p in &report.params {
        writeln!(out, "{:<16} max_rel_error={:.3e}", p.name, p.max_rel_error).unwrap();
    }
    let worst = report.worst().expect("model has parameters");
    writeln!(
        out,
        "worst parameter {} entry ({}, {}): analytic={:.9e} numeric={:.9e} rel_error={:.3e}",
        worst.name, worst.worst_entry.0, worst.worst_entry.1, worst.analytic, worst.numeric, worst.max_rel_error
    )
    .unwrap();
    if report.max_rel_error > args.tolerance {
        print!("{out}");
        return Err(CliError::Check(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.1e} (worst parameter {})",
            report.max_rel_error, args.tolerance, worst.name
        )));
    }
    writeln!(out, "ok: max relative error {:.3e}", report.max_rel_error).unwrap();
    Ok(out)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<String, CliError> {
    let spec = SynthSpec {
        num_graphs: args.graphs,
        nodes_per_graph: args.nodes,
        signal_hops: args.hops,
        hub_degree: args.hub_degree,
        noise_std: args.noise_std,
        seed: args.seed,
        num_features: args.features,
        train_graphs: args.train_graphs,
        val_graphs: args.val_graphs,
        decoy_scale: args.decoy_scale,
    };
    let ds = gen_planted_path(&spec)?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let edges: Vec<(usize, usize)> = ds.graph.edges().filter(|&(s, d)| s < d).collect();
    let files = [
        ("edges.tsv", io::write_edge_list(&edges)),
        ("features.txt", io::write_features(&ds.features)),
        ("labels.tsv", io::write_labels(&ds.labels)),
        ("splits.tsv", io::write_splits(&ds.splits)),
    ];
    for (name, text) in &files {
        crate::error::write(&args.out.join(name), text)?;
    }
    let config = RunConfig {
        model: ModelSection {
            depth: spec.signal_hops,
            ..ModelSection::default()
        },
        data: DataSection {
            edges: "edges.tsv".into(),
            features: "features.txt".into(),
            labels: "labels.tsv".into(),
            splits: "splits.tsv".into(),
            undirected: true,
            num_classes: Some(2),
        },
        output_dir: "out".into(),
    };
    let json = serde_json::to_string_pretty(&config).expect("serializable") + "\n";
    crate::error::write(&args.out.join("config.json"), json)?;
    Ok(format!(
        "wrote {} graphs ({} nodes, {} edges) to {}\n",
        spec.num_graphs,
        ds.num_nodes(),
        edges.len(),
        args.out.display()
    ))
}

pub fn cmd_paths(args: &PathsArgs) -> Result<String, CliError> {
    let (_, dataset, model) = restore(&args.config, &args.checkpoint)?;
    if args.target >= dataset.num_nodes() {
        return Err(Error::Config(format!(
            "target {} out of range for {} nodes",
            args.target,
            dataset.num_nodes()
        ))
        .into());
    }
    let importances = extract_importance(&model, &dataset.graph, &dataset.features, args.layer)?;
    let looped = model.prepare(&dataset.graph)?.graph;
    let sub = receptive_subgraph(&looped, args.target, args.hops)?;
    let text = dot::export_dot(&sub, &importances, args.target);
    match &args.out {
        Some(path) => {
            crate::error::write(path, &text)?;
            Ok(format!(
                "wrote {} nodes and {} edges to {}\n",
                sub.nodes.len(),
                sub.edges.len(),
                path.display()
            ))
        }
        None => Ok(text),
    }
}
