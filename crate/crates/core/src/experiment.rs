//! The poisoning protocol and the experiment shapes built on it.
//!
//! One repeat with seed `s`:
//! 1. split the nodes with seed `s`;
//! 2. build the victim hypergraph on clean features and train the clean
//!    victim with seed `s`;
//! 3. build and train the surrogate on clean features (reusing the clean
//!    victim when both use the same construction);
//! 4. run the attack with seed `s`;
//! 5. rebuild the victim hypergraph from the perturbed features and train a
//!    fresh victim with seed `s`;
//! 6. record both test accuracies.
//!
//! Repeat `r` of an experiment uses seed `base + r`.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::attack::{count_changed, run_attack, AttackConfig, AttackKind, AttackResult, Surrogate};
use crate::data_io::{load_dataset, make_split, write_text, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::hgnn::{evaluate, train, LabelData, ModelParams, Subset, TrainConfig};
use crate::hypergraph::{
    build_epsilon_hypergraph, build_knn_hypergraph, normalized_operator, FeatureMatrix, Hypergraph,
    NormalizedOperator,
};

/// How a hypergraph is built from features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Construction {
    Knn { k: usize },
    Epsilon { eps: f64 },
}

impl Construction {
    pub fn build(&self, x: &FeatureMatrix) -> Result<Hypergraph> {
        match *self {
            Construction::Knn { k } => build_knn_hypergraph(x, k),
            Construction::Epsilon { eps } => build_epsilon_hypergraph(x, eps),
        }
    }

    fn validate(&self, n_nodes: usize) -> Result<()> {
        match *self {
            Construction::Knn { k } if k == 0 || k >= n_nodes => Err(Error::Config(format!(
                "K must lie in [1, {}), got {k}",
                n_nodes
            ))),
            Construction::Epsilon { eps } if !(eps > 0.0 && eps.is_finite()) => {
                Err(Error::Config(format!("epsilon must be positive, got {eps}")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Construction::Knn { k } => write!(f, "knn:{k}"),
            Construction::Epsilon { eps } => write!(f, "eps:{eps}"),
        }
    }
}

impl FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("construction must be knn:K or eps:E, got `{s}`"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "knn" => value.trim().parse().map(|k| Construction::Knn { k }).map_err(|_| bad()),
            "eps" | "epsilon" => value
                .trim()
                .parse()
                .map(|eps| Construction::Epsilon { eps })
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl From<Construction> for String {
    fn from(c: Construction) -> Self {
        c.to_string()
    }
}

impl TryFrom<String> for Construction {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset directory or manifest path.
    pub dataset: PathBuf,
    /// Keep only this many randomly chosen nodes (drawn with `seed`).
    pub subsample: Option<usize>,
    pub surrogate: Construction,
    pub victim: Construction,
    pub attack: AttackKind,
    /// `seed` and `feature_mode` are filled in per repeat and from the
    /// dataset respectively.
    pub attack_config: AttackConfig,
    /// `seed` is filled in per repeat.
    pub train: TrainConfig,
    /// `seed` is filled in per repeat.
    pub split: SplitSpec,
    pub n_repeats: usize,
    pub seed: u64,
    #[serde(skip)]
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            subsample: None,
            surrogate: Construction::Knn { k: 10 },
            victim: Construction::Knn { k: 10 },
            attack: AttackKind::Mghga,
            attack_config: AttackConfig::default(),
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            n_repeats: 10,
            seed: 0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked against a loaded dataset.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.n_repeats < 1 {
            return Err(Error::Config("n_repeats must be >= 1".into()));
        }
        let n = dataset.n_nodes();
        self.surrogate.validate(n)?;
        self.victim.validate(n)?;
        self.attack_config.budget(n)?;
        self.train.validate()?;
        self.split.validate()?;
        Ok(())
    }

    /// Loads the dataset, applies `subsample`, and aligns the attack's
    /// feature mode with the data.
    pub fn prepare(&mut self) -> Result<Dataset> {
        let mut dataset = load_dataset(&self.dataset)?;
        if let Some(n) = self.subsample {
            dataset = dataset.subsample(n, self.seed)?;
        }
        self.attack_config.feature_mode = dataset.feature_mode;
        self.validate(&dataset)?;
        Ok(dataset)
    }

    fn for_repeat(&self, seed: u64) -> (SplitSpec, TrainConfig, AttackConfig) {
        (
            SplitSpec { seed, ..self.split },
            TrainConfig { seed, ..self.train.clone() },
            AttackConfig { seed, ..self.attack_config.clone() },
        )
    }
}

/// Outcome of one repeat for one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seed: u64,
    pub attack: AttackKind,
    pub clean_accuracy: Option<f64>,
    pub attacked_accuracy: Option<f64>,
    pub budget: usize,
    pub modifications_used: usize,
    /// Cells that differ between clean and perturbed features.
    pub changed_cells: usize,
    pub exhausted: bool,
    pub wall_time_ms: u64,
    pub error: Option<String>,
}

impl RepeatRecord {
    fn failed(repeat: usize, seed: u64, attack: AttackKind, err: &Error, wall_time_ms: u64) -> Self {
        Self {
            repeat,
            seed,
            attack,
            clean_accuracy: None,
            attacked_accuracy: None,
            budget: 0,
            modifications_used: 0,
            changed_cells: 0,
            exhausted: false,
            wall_time_ms,
            error: Some(err.to_string()),
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Mean and sample standard deviation over successful repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_succeeded: usize,
    pub n_failed: usize,
    pub clean_mean: f64,
    pub clean_std: f64,
    pub attacked_mean: f64,
    pub attacked_std: f64,
}

/// `(mean, sample std)`; the deviation of a single value is zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl Aggregate {
    pub fn from_records(records: &[RepeatRecord]) -> Self {
        let ok: Vec<&RepeatRecord> = records.iter().filter(|r| r.succeeded()).collect();
        let clean: Vec<f64> = ok.iter().filter_map(|r| r.clean_accuracy).collect();
        let attacked: Vec<f64> = ok.iter().filter_map(|r| r.attacked_accuracy).collect();
        let (clean_mean, clean_std) = mean_std(&clean);
        let (attacked_mean, attacked_std) = mean_std(&attacked);
        Self {
            n_succeeded: ok.len(),
            n_failed: records.len() - ok.len(),
            clean_mean,
            clean_std,
            attacked_mean,
            attacked_std,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<RepeatRecord>,
    pub aggregate: Aggregate,
}

impl ExperimentReport {
    fn new(config: ExperimentConfig, records: Vec<RepeatRecord>) -> Result<Self> {
        if records.iter().all(|r| !r.succeeded()) {
            let first = records
                .iter()
                .find_map(|r| r.error.clone())
                .unwrap_or_default();
            return Err(Error::AllRepeatsFailed(records.len(), first));
        }
        let aggregate = Aggregate::from_records(&records);
        Ok(Self {
            config,
            records,
            aggregate,
        })
    }

    /// One JSON object per repeat followed by an aggregate object carrying
    /// the config. `tags` are added to every line.
    pub fn to_jsonl(&self, tags: &Map<String, Value>) -> String {
        let mut out = String::new();
        let mut push = |kind: &str, body: Value| {
            let mut line = Map::new();
            line.insert("type".into(), kind.into());
            line.extend(tags.clone());
            if let Value::Object(fields) = body {
                line.extend(fields);
            }
            out.push_str(&Value::Object(line).to_string());
            out.push('\n');
        };
        for r in &self.records {
            push("repeat", serde_json::to_value(r).expect("record serializes"));
        }
        let mut agg = serde_json::to_value(&self.aggregate).expect("aggregate serializes");
        agg["attack"] = self.config.attack.name().into();
        agg["config"] = serde_json::to_value(&self.config).expect("config serializes");
        push("aggregate", agg);
        out
    }
}

struct Model {
    operator: NormalizedOperator,
    params: ModelParams,
}

fn fit(construction: Construction, x: &FeatureMatrix, labels: &LabelData, cfg: &TrainConfig) -> Result<(Hypergraph, Model)> {
    let hypergraph = construction.build(x)?;
    let operator = normalized_operator(&hypergraph)?;
    let params = train(&operator, x, labels, cfg)?;
    Ok((hypergraph, Model { operator, params }))
}

fn test_accuracy(model: &Model, x: &FeatureMatrix, labels: &LabelData) -> Result<f64> {
    evaluate(&model.operator, x, &model.params, labels, Subset::Test)
}

/// Cells logged by the attack, checked against the perturbed matrix.
fn audit(clean: &FeatureMatrix, result: &AttackResult) -> Result<usize> {
    let changed = count_changed(clean, &result.perturbed);
    let mut logged: Vec<(usize, usize)> = result
        .modified_cells
        .iter()
        .map(|c| (c.node, c.feature))
        .collect();
    logged.sort_unstable();
    logged.dedup();
    if logged.len() != result.modified_cells.len() || logged.len() > result.budget {
        return Err(Error::InvalidInput(format!(
            "attack log has {} cells, {} distinct, budget {}",
            result.modified_cells.len(),
            logged.len(),
            result.budget
        )));
    }
    let unlogged = clean
        .values()
        .indexed_iter()
        .filter(|(cell, &v)| v != result.perturbed.values()[*cell] && logged.binary_search(cell).is_err())
        .count();
    if unlogged > 0 {
        return Err(Error::InvalidInput(format!("{unlogged} changed cells are missing from the attack log")));
    }
    Ok(changed)
}

/// Runs one repeat for every attack in `attacks`, sharing the split, the
/// clean victim and the surrogate between them.
fn run_repeat(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    attacks: &[AttackKind],
    repeat: usize,
) -> Vec<RepeatRecord> {
    let seed = cfg.seed.wrapping_add(repeat as u64);
    let start = Instant::now();
    let elapsed = |since: Instant| since.elapsed().as_millis() as u64;
    let (split, train_cfg, attack_cfg) = cfg.for_repeat(seed);
    let x = &dataset.features;

    let shared = (|| -> Result<(LabelData, Hypergraph, Model, Option<Surrogate>, f64)> {
        let labels = make_split(&dataset.labels, dataset.n_classes, &split)?;
        let (victim_graph, clean_victim) = fit(cfg.victim, x, &labels, &train_cfg)?;
        let clean_accuracy = test_accuracy(&clean_victim, x, &labels)?;
        let surrogate = if !attacks.iter().any(|a| a.needs_surrogate()) {
            None
        } else if cfg.surrogate == cfg.victim {
            Some(Surrogate {
                hypergraph: victim_graph.clone(),
                operator: clean_victim.operator.clone(),
                params: clean_victim.params.clone(),
            })
        } else {
            let (hypergraph, model) = fit(cfg.surrogate, x, &labels, &train_cfg)?;
            Some(Surrogate {
                hypergraph,
                operator: model.operator,
                params: model.params,
            })
        };
        Ok((labels, victim_graph, clean_victim, surrogate, clean_accuracy))
    })();
    let shared_ms = elapsed(start);
    let (labels, _, _, surrogate, clean_accuracy) = match shared {
        Ok(s) => s,
        Err(e) => {
            return attacks
                .iter()
                .map(|&a| RepeatRecord::failed(repeat, seed, a, &e, shared_ms))
                .collect()
        }
    };

    attacks
        .iter()
        .map(|&kind| {
            let own = Instant::now();
            let outcome = (|| -> Result<RepeatRecord> {
                let result = run_attack(kind, x, &labels, surrogate.as_ref(), &attack_cfg)?;
                let changed_cells = audit(x, &result)?;
                let attacked_accuracy = if changed_cells == 0 {
                    clean_accuracy
                } else {
                    let (_, victim) = fit(cfg.victim, &result.perturbed, &labels, &train_cfg)?;
                    test_accuracy(&victim, &result.perturbed, &labels)?
                };
                Ok(RepeatRecord {
                    repeat,
                    seed,
                    attack: kind,
                    clean_accuracy: Some(clean_accuracy),
                    attacked_accuracy: Some(attacked_accuracy),
                    budget: result.budget,
                    modifications_used: result.modifications_used,
                    changed_cells,
                    exhausted: result.exhausted,
                    wall_time_ms: 0,
                    error: None,
                })
            })();
            let wall = shared_ms + elapsed(own);
            match outcome {
                Ok(record) => RepeatRecord {
                    wall_time_ms: wall,
                    ..record
                },
                Err(e) => RepeatRecord {
                    clean_accuracy: Some(clean_accuracy),
                    ..RepeatRecord::failed(repeat, seed, kind, &e, wall)
                },
            }
        })
        .collect()
}

/// A single repeat of `cfg.attack` with the given seed.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RepeatRecord> {
    let mut cfg = cfg.clone();
    let dataset = cfg.prepare()?;
    cfg.seed = seed;
    let record = run_repeat(&dataset, &cfg, &[cfg.attack], 0).remove(0);
    match &record.error {
        Some(msg) => Err(Error::AllRepeatsFailed(1, msg.clone())),
        None => Ok(record),
    }
}

/// Runs `cfg.n_repeats` repeats of each attack on an already prepared
/// dataset; one report per attack, in the order given.
pub fn run_prepared(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    attacks: &[AttackKind],
) -> Result<Vec<ExperimentReport>> {
    cfg.validate(dataset)?;
    let per_repeat: Vec<Vec<RepeatRecord>> = (0..cfg.n_repeats)
        .into_par_iter()
        .map(|r| run_repeat(dataset, cfg, attacks, r))
        .collect();
    attacks
        .iter()
        .enumerate()
        .map(|(a, &kind)| {
            let records = per_repeat.iter().map(|rs| rs[a].clone()).collect();
            ExperimentReport::new(ExperimentConfig { attack: kind, ..cfg.clone() }, records)
        })
        .collect()
}

fn persist(cfg: &ExperimentConfig, body: &str) -> Result<()> {
    match &cfg.output {
        Some(path) => write_text(path, body),
        None => Ok(()),
    }
}

/// All repeats of `cfg.attack`; the report is written to `cfg.output`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut cfg = cfg.clone();
    let dataset = cfg.prepare()?;
    let report = run_prepared(&dataset, &cfg, &[cfg.attack])?.remove(0);
    persist(&cfg, &report.to_jsonl(&Map::new()))?;
    Ok(report)
}

/// Several attacks over the same repeats, sharing clean training.
pub fn run_table(cfg: &ExperimentConfig, attacks: &[AttackKind]) -> Result<Vec<ExperimentReport>> {
    let mut cfg = cfg.clone();
    let dataset = cfg.prepare()?;
    let reports = run_prepared(&dataset, &cfg, attacks)?;
    let body: String = reports.iter().map(|r| r.to_jsonl(&Map::new())).collect();
    persist(&cfg, &body)?;
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Budget factor `λ`.
    Lambda,
    /// KNN neighbour count, applied to surrogate and victim.
    K,
    /// Epsilon radius, applied to surrogate and victim.
    Eps,
    /// Momentum decay `μ`.
    Mu,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" | "budget" => Ok(SweepAxis::Lambda),
            "k" | "knn" => Ok(SweepAxis::K),
            "eps" | "epsilon" => Ok(SweepAxis::Eps),
            "mu" | "momentum" => Ok(SweepAxis::Mu),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Lambda => "lambda",
            SweepAxis::K => "k",
            SweepAxis::Eps => "eps",
            SweepAxis::Mu => "mu",
        })
    }
}

/// `cfg` with one sweep coordinate replaced.
pub fn apply_axis(cfg: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    match axis {
        SweepAxis::Lambda => out.attack_config.budget_factor = value,
        SweepAxis::Mu => out.attack_config.momentum_decay = value,
        SweepAxis::K => {
            if value.fract() != 0.0 || value < 1.0 {
                return Err(Error::Config(format!("K must be a positive integer, got {value}")));
            }
            let c = Construction::Knn { k: value as usize };
            out.surrogate = c;
            out.victim = c;
        }
        SweepAxis::Eps => {
            let c = Construction::Epsilon { eps: value };
            out.surrogate = c;
            out.victim = c;
        }
    }
    Ok(out)
}

/// One report per value, all with the same base seed. The table is written
/// to `cfg.output` with `axis` and `value` on every line.
pub fn sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<ExperimentReport>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut base = cfg.clone();
    let dataset = base.prepare()?;
    let configs = values
        .iter()
        .map(|&v| apply_axis(&base, axis, v))
        .collect::<Result<Vec<_>>>()?;
    for c in &configs {
        c.validate(&dataset)?;
    }
    let reports = configs
        .iter()
        .map(|c| run_prepared(&dataset, c, &[c.attack]).map(|mut r| r.remove(0)))
        .collect::<Result<Vec<_>>>()?;
    let body: String = reports
        .iter()
        .zip(values)
        .map(|(r, &v)| {
            let tags = Map::from_iter([
                ("axis".to_string(), json!(axis.to_string())),
                ("value".to_string(), json!(v)),
            ]);
            r.to_jsonl(&tags)
        })
        .collect();
    persist(&base, &body)?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferCell {
    pub surrogate: Construction,
    pub victim: Construction,
    pub report: ExperimentReport,
}

/// Every (surrogate, victim) pair over `constructions`, row-major by
/// surrogate.
pub fn transfer_matrix(cfg: &ExperimentConfig, constructions: &[Construction]) -> Result<Vec<TransferCell>> {
    if constructions.is_empty() {
        return Err(Error::Config("transfer needs at least one construction".into()));
    }
    let mut base = cfg.clone();
    let dataset = base.prepare()?;
    let mut cells = Vec::with_capacity(constructions.len().pow(2));
    for &surrogate in constructions {
        for &victim in constructions {
            let c = ExperimentConfig { surrogate, victim, ..base.clone() };
            let report = run_prepared(&dataset, &c, &[c.attack])?.remove(0);
            cells.push(TransferCell { surrogate, victim, report });
        }
    }
    let body: String = cells
        .iter()
        .map(|cell| {
            let tags = Map::from_iter([
                ("surrogate".to_string(), json!(cell.surrogate.to_string())),
                ("victim".to_string(), json!(cell.victim.to_string())),
            ]);
            cell.report.to_jsonl(&tags)
        })
        .collect();
    persist(&base, &body)?;
    Ok(cells)
}

/// Removes every `wall_time_ms` field from a JSONL report.
pub fn strip_wall_time(jsonl: &str) -> String {
    jsonl
        .lines()
        .map(|line| {
            let mut v: Value = serde_json::from_str(line).expect("report lines are JSON");
            if let Value::Object(m) = &mut v {
                m.remove("wall_time_ms");
            }
            v.to_string() + "\n"
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_strings() {
        assert_eq!("knn:10".parse::<Construction>().unwrap(), Construction::Knn { k: 10 });
        assert_eq!("eps:0.5".parse::<Construction>().unwrap(), Construction::Epsilon { eps: 0.5 });
        assert_eq!(Construction::Epsilon { eps: 0.5 }.to_string(), "eps:0.5");
        for bad in ["knn", "knn:x", "ball:3", "eps:"] {
            assert!(bad.parse::<Construction>().unwrap_err().is_config());
        }
        let json = serde_json::to_string(&Construction::Knn { k: 3 }).unwrap();
        assert_eq!(json, "\"knn:3\"");
        assert_eq!(serde_json::from_str::<Construction>(&json).unwrap(), Construction::Knn { k: 3 });
    }

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sweep_axis_updates() {
        let cfg = ExperimentConfig::default();
        let k = apply_axis(&cfg, SweepAxis::K, 5.0).unwrap();
        assert_eq!((k.surrogate, k.victim), (Construction::Knn { k: 5 }, Construction::Knn { k: 5 }));
        assert!(apply_axis(&cfg, SweepAxis::K, 2.5).is_err());
        assert_eq!(apply_axis(&cfg, SweepAxis::Mu, 0.0).unwrap().attack_config.momentum_decay, 0.0);
        assert_eq!(apply_axis(&cfg, SweepAxis::Lambda, 0.1).unwrap().attack_config.budget_factor, 0.1);
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            dataset: "data/cora".into(),
            victim: Construction::Epsilon { eps: 0.25 },
            ..ExperimentConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), cfg);
    }
}
