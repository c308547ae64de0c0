use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mghga::attack::{run_attack, AttackConfig, AttackKind, SignConvention, Surrogate};
use mghga::data_io::{
    import_linqs, load_attack_result, load_checkpoint, make_split, save_attack_result, save_checkpoint,
    save_dataset, AttackMetadata, CheckpointMetadata, SplitSpec,
};
use mghga::experiment::{
    run_experiment, sweep, transfer_matrix, Construction, ExperimentConfig, ExperimentReport, SweepAxis,
};
use mghga::hgnn::{evaluate, train, Subset, TrainConfig};
use mghga::hypergraph::normalized_operator;
use mghga::{Error, Result};

#[derive(Parser)]
#[command(name = "mghga", version, about = "Feature poisoning attacks on hypergraph neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a public citation dataset into a dataset directory.
    Convert(ConvertArgs),
    /// Train an HGNN on clean features and report its accuracy.
    Train(Common),
    /// Attack a dataset and write the perturbed features with their log.
    Attack(AttackArgs),
    /// Train a victim on clean or perturbed features and report accuracy.
    Eval(EvalArgs),
    /// Run the full poisoning protocol over several repeats.
    Run(Common),
    /// Repeat the protocol over a list of values for one parameter.
    Sweep(SweepArgs),
    /// Run every surrogate/victim pair over a list of constructions.
    Transfer(TransferArgs),
}

#[derive(Args)]
struct ConvertArgs {
    /// Source layout; only `linqs` (`.content` + `.cites`) is supported.
    #[arg(long, default_value = "linqs")]
    format: String,
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    cites: PathBuf,
    #[arg(long)]
    name: String,
    /// Keep only the largest connected component of the link graph.
    #[arg(long)]
    largest_component: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy)]
enum Eta {
    Auto,
    Value(f64),
}

impl FromStr for Eta {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(Eta::Auto);
        }
        s.parse()
            .map(Eta::Value)
            .map_err(|_| format!("expected `auto` or a number, got `{s}`"))
    }
}

#[derive(Args, Clone)]
struct Common {
    /// Dataset directory or manifest.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Experiment config JSON used as the base for all other flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Construction for both surrogate and victim (`knn:K` or `eps:E`).
    #[arg(long)]
    construction: Option<Construction>,
    #[arg(long)]
    surrogate: Option<Construction>,
    #[arg(long)]
    victim: Option<Construction>,
    #[arg(long)]
    attack: Option<AttackKind>,
    /// Budget factor: the attack modifies at most floor(lambda * nodes) cells.
    #[arg(long)]
    lambda: Option<f64>,
    /// Momentum decay.
    #[arg(long)]
    mu: Option<f64>,
    /// Continuous step size, or `auto` for the clean feature mean.
    #[arg(long)]
    eta: Option<Eta>,
    /// Row fraction for the degree-constrained attacks.
    #[arg(long)]
    top_fraction: Option<f64>,
    /// Let continuous steps move in both directions.
    #[arg(long)]
    symmetric_sign: bool,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[command(flatten)]
    common: Common,
    /// Use these surrogate parameters instead of training a surrogate.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Attack result whose perturbed features replace the clean ones.
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// One of `lambda`, `k`, `eps`, `mu`.
    #[arg(long)]
    axis: SweepAxis,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct TransferArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated constructions, e.g. `knn:10,eps:0.5`.
    #[arg(long, value_delimiter = ',', required = true)]
    constructions: Vec<Construction>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if cfg.dataset.as_os_str().is_empty() {
            return Err(Error::Config("--dataset is required".into()));
        }
        if let Some(c) = self.construction {
            cfg.surrogate = c;
            cfg.victim = c;
        }
        if let Some(c) = self.surrogate {
            cfg.surrogate = c;
        }
        if let Some(c) = self.victim {
            cfg.victim = c;
        }
        if let Some(a) = self.attack {
            cfg.attack = a;
        }
        let ac = &mut cfg.attack_config;
        if let Some(v) = self.lambda {
            ac.budget_factor = v;
        }
        if let Some(v) = self.mu {
            ac.momentum_decay = v;
        }
        match self.eta {
            Some(Eta::Auto) => ac.eta = None,
            Some(Eta::Value(v)) => ac.eta = Some(v),
            None => {}
        }
        if let Some(v) = self.top_fraction {
            ac.degree_top_fraction = Some(v);
        }
        if self.symmetric_sign {
            ac.sign_convention = SignConvention::Symmetric;
        }
        if let Some(v) = self.repeats {
            cfg.n_repeats = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.subsample {
            cfg.subsample = Some(v);
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.learning_rate = v;
        }
        if let Some(v) = self.hidden {
            cfg.train.hidden_dim = v;
        }
        if let Some(v) = self.dropout {
            cfg.train.dropout_rate = v;
        }
        cfg.output = self.out.clone();
        Ok(cfg)
    }
}

fn emit(line: serde_json::Value) {
    println!("{line}");
}

fn summarize(label: &str, report: &ExperimentReport) {
    let a = &report.aggregate;
    eprintln!(
        "{label}: clean {:.2} ± {:.2}, attacked {:.2} ± {:.2} ({} ok, {} failed)",
        100.0 * a.clean_mean,
        100.0 * a.clean_std,
        100.0 * a.attacked_mean,
        100.0 * a.attacked_std,
        a.n_succeeded,
        a.n_failed
    );
}

fn convert(args: &ConvertArgs) -> Result<()> {
    if args.format != "linqs" {
        return Err(Error::Config(format!("unsupported format `{}`", args.format)));
    }
    let dataset = import_linqs(&args.name, &args.content, &args.cites, args.largest_component)?;
    let note = if args.largest_component {
        "linqs; largest connected component; classes in sorted name order"
    } else {
        "linqs; classes in sorted name order"
    };
    let path = save_dataset(&args.out, &dataset, note)?;
    emit(json!({
        "manifest": path,
        "n_nodes": dataset.n_nodes(),
        "n_features": dataset.features.n_features(),
        "n_classes": dataset.n_classes,
        "feature_mode": dataset.feature_mode,
    }));
    Ok(())
}

fn train_cmd(common: &Common) -> Result<()> {
    let mut cfg = common.config()?;
    let dataset = cfg.prepare()?;
    let seed = cfg.seed;
    let labels = make_split(&dataset.labels, dataset.n_classes, &SplitSpec { seed, ..cfg.split })?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let graph = cfg.victim.build(&dataset.features)?;
    let op = normalized_operator(&graph)?;
    let params = train(&op, &dataset.features, &labels, &train_cfg)?;
    let train_acc = evaluate(&op, &dataset.features, &params, &labels, Subset::Train)?;
    let test_acc = evaluate(&op, &dataset.features, &params, &labels, Subset::Test)?;
    if let Some(out) = &cfg.output {
        let meta = CheckpointMetadata {
            dataset: dataset.name.clone(),
            construction: cfg.victim.to_string(),
            config: serde_json::to_value(&train_cfg).expect("config serializes"),
        };
        save_checkpoint(out, &meta, &params)?;
    }
    emit(json!({
        "dataset": dataset.name,
        "construction": cfg.victim.to_string(),
        "seed": seed,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
    }));
    Ok(())
}

fn attack_cmd(args: &AttackArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    let out = cfg
        .output
        .clone()
        .ok_or_else(|| Error::Config("--out is required for attack".into()))?;
    let dataset = cfg.prepare()?;
    let seed = cfg.seed;
    let x = &dataset.features;
    let labels = make_split(&dataset.labels, dataset.n_classes, &SplitSpec { seed, ..cfg.split })?;
    let hypergraph = cfg.surrogate.build(x)?;
    let operator = normalized_operator(&hypergraph)?;
    let params = match &args.checkpoint {
        Some(path) => load_checkpoint(path)?.1,
        None => train(&operator, x, &labels, &TrainConfig { seed, ..cfg.train.clone() })?,
    };
    let surrogate = Surrogate { hypergraph, operator, params };
    let attack_cfg = AttackConfig { seed, ..cfg.attack_config.clone() };
    let result = run_attack(cfg.attack, x, &labels, Some(&surrogate), &attack_cfg)?;
    let meta = AttackMetadata {
        attack: cfg.attack.to_string(),
        dataset: dataset.name.clone(),
        feature_mode: dataset.feature_mode,
        budget: result.budget,
        modifications_used: result.modifications_used,
        exhausted: result.exhausted,
        config: serde_json::to_value(&cfg).expect("config serializes"),
    };
    save_attack_result(&out, &meta, &result)?;
    emit(json!({
        "attack": cfg.attack.to_string(),
        "budget": result.budget,
        "modifications_used": result.modifications_used,
        "changed_cells": result.changed_cells(x),
        "exhausted": result.exhausted,
        "out": out,
    }));
    Ok(())
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let mut cfg = args.common.config()?;
    let dataset = cfg.prepare()?;
    let seed = cfg.seed;
    let features = match &args.features {
        Some(path) => {
            let (_, result) = load_attack_result(path)?;
            if result.perturbed.values().dim() != dataset.features.values().dim() {
                return Err(Error::Dimension(format!(
                    "{} does not match the dataset shape",
                    path.display()
                )));
            }
            result.perturbed
        }
        None => dataset.features.clone(),
    };
    let labels = make_split(&dataset.labels, dataset.n_classes, &SplitSpec { seed, ..cfg.split })?;
    let graph = cfg.victim.build(&features)?;
    let op = normalized_operator(&graph)?;
    let params = train(&op, &features, &labels, &TrainConfig { seed, ..cfg.train.clone() })?;
    let test_acc = evaluate(&op, &features, &params, &labels, Subset::Test)?;
    emit(json!({
        "dataset": dataset.name,
        "construction": cfg.victim.to_string(),
        "features": args.features.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "clean".into()),
        "seed": seed,
        "test_accuracy": test_acc,
    }));
    Ok(())
}

fn print_jsonl_if_no_output(cfg: &ExperimentConfig, body: impl FnOnce() -> String) {
    if cfg.output.is_none() {
        print!("{}", body());
    }
}

fn run_cmd(common: &Common) -> Result<()> {
    let cfg = common.config()?;
    let report = run_experiment(&cfg)?;
    summarize(cfg.attack.name(), &report);
    print_jsonl_if_no_output(&cfg, || report.to_jsonl(&Default::default()));
    Ok(())
}

fn sweep_cmd(args: &SweepArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let reports = sweep(&cfg, args.axis, &args.values)?;
    for (r, v) in reports.iter().zip(&args.values) {
        summarize(&format!("{}={v}", args.axis), r);
    }
    print_jsonl_if_no_output(&cfg, || {
        reports
            .iter()
            .zip(&args.values)
            .map(|(r, v)| {
                let tags = serde_json::Map::from_iter([
                    ("axis".to_string(), json!(args.axis.to_string())),
                    ("value".to_string(), json!(v)),
                ]);
                r.to_jsonl(&tags)
            })
            .collect()
    });
    Ok(())
}

fn transfer_cmd(args: &TransferArgs) -> Result<()> {
    let cfg = args.common.config()?;
    let cells = transfer_matrix(&cfg, &args.constructions)?;
    for c in &cells {
        summarize(&format!("{} -> {}", c.surrogate, c.victim), &c.report);
    }
    print_jsonl_if_no_output(&cfg, || {
        cells
            .iter()
            .map(|c| {
                let tags = serde_json::Map::from_iter([
                    ("surrogate".to_string(), json!(c.surrogate.to_string())),
                    ("victim".to_string(), json!(c.victim.to_string())),
                ]);
                c.report.to_jsonl(&tags)
            })
            .collect()
    });
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Train(c) => train_cmd(c),
        Command::Attack(a) => attack_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Run(c) => run_cmd(c),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Transfer(a) => transfer_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
