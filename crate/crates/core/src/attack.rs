//! Feature-poisoning attacks: momentum-gradient selection (MGHGA), its
//! plain-gradient special case (FGA), degree-constrained variants, and the
//! random and node-degree baselines.
//!
//! Each gradient iteration recomputes `∂L/∂X` at the current perturbed
//! features with the surrogate's parameters frozen, folds it into the
//! momentum `F ← μF + ∂L/∂X`, and modifies the untouched eligible cell with
//! the largest `|F|`. Every cell is modified at most once and the loop stops
//! after `Δ = ⌊λ|V|⌋` selections.

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::Array2;
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgnn::{feature_grad_factor, LabelData, ModelParams, SeededRng};
use crate::hypergraph::{FeatureMatrix, Hypergraph, NormalizedOperator};

/// Default row fraction for the `-D` variants.
pub const DEFAULT_TOP_FRACTION: f64 = 0.01;

/// Absorbs representation error in products such as `0.05 * 40` before
/// flooring or ceiling them to counts.
const COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Discrete,
    Continuous,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Discrete => "discrete",
            FeatureMode::Continuous => "continuous",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(FeatureMode::Discrete),
            "continuous" => Ok(FeatureMode::Continuous),
            other => Err(Error::Config(format!("unknown feature mode `{other}`"))),
        }
    }
}

/// Step direction used by the continuous update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignConvention {
    /// `sign(x) = 1` if `x > 0`, else `0`: features only ever increase.
    #[default]
    Binary,
    /// `sign(x) ∈ {-1, 0, 1}`.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// `λ` in `Δ = ⌊λ|V|⌋`.
    pub budget_factor: f64,
    /// `μ`
    pub momentum_decay: f64,
    /// `η`; `None` means the clean feature mean.
    pub eta: Option<f64>,
    pub feature_mode: FeatureMode,
    /// Row fraction for the `-D` variants; [`DEFAULT_TOP_FRACTION`] if unset.
    pub degree_top_fraction: Option<f64>,
    pub sign_convention: SignConvention,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            budget_factor: 0.05,
            momentum_decay: 0.8,
            eta: None,
            feature_mode: FeatureMode::Discrete,
            degree_top_fraction: None,
            sign_convention: SignConvention::Binary,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_factor > 0.0 && self.budget_factor.is_finite()) {
            return Err(Error::Config(format!(
                "budget factor must be positive, got {}",
                self.budget_factor
            )));
        }
        if !(self.momentum_decay >= 0.0 && self.momentum_decay.is_finite()) {
            return Err(Error::Config(format!(
                "momentum decay must be non-negative, got {}",
                self.momentum_decay
            )));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::Config(format!("eta must be positive, got {eta}")));
            }
        }
        if let Some(f) = self.degree_top_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!(
                    "degree top fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    /// `Δ = ⌊λ|V|⌋`; a budget of zero is a configuration error.
    pub fn budget(&self, n_nodes: usize) -> Result<usize> {
        self.validate()?;
        let budget = (self.budget_factor * n_nodes as f64 + COUNT_SLACK).floor() as usize;
        if budget == 0 {
            return Err(Error::Config(format!(
                "budget factor {} gives a zero budget on {n_nodes} nodes",
                self.budget_factor
            )));
        }
        Ok(budget)
    }
}

/// Attack families, named as on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Random,
    Nda,
    Fga,
    FgaD,
    Mghga,
    MghgaD,
}

impl AttackKind {
    pub const ALL: [AttackKind; 7] = [
        AttackKind::None,
        AttackKind::Random,
        AttackKind::Nda,
        AttackKind::Fga,
        AttackKind::FgaD,
        AttackKind::Mghga,
        AttackKind::MghgaD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Random => "random",
            AttackKind::Nda => "nda",
            AttackKind::Fga => "fga",
            AttackKind::FgaD => "fga_d",
            AttackKind::Mghga => "mghga",
            AttackKind::MghgaD => "mghga_d",
        }
    }

    /// Whether the attack reads gradients from a trained surrogate.
    pub fn needs_surrogate(self) -> bool {
        matches!(
            self,
            AttackKind::Fga | AttackKind::FgaD | AttackKind::Mghga | AttackKind::MghgaD | AttackKind::Nda
        )
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown attack `{s}`")))
    }
}

/// A trained surrogate: the hypergraph it was built on, its operator and
/// its frozen parameters.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub hypergraph: Hypergraph,
    pub operator: NormalizedOperator,
    pub params: ModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellChange {
    pub node: usize,
    pub feature: usize,
    pub old: f64,
    pub new: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub perturbed: FeatureMatrix,
    /// Selected cells in selection order. For continuous attacks `new` is
    /// the value after the final clipping.
    pub modified_cells: Vec<CellChange>,
    pub modifications_used: usize,
    pub budget: usize,
    /// Set when the eligible cells ran out before the budget did.
    pub exhausted: bool,
}

impl AttackResult {
    fn unmodified(x: &FeatureMatrix, budget: usize) -> Self {
        Self {
            perturbed: x.clone(),
            modified_cells: Vec::new(),
            modifications_used: 0,
            budget,
            exhausted: false,
        }
    }

    /// Number of cells whose value differs from `clean`.
    pub fn changed_cells(&self, clean: &FeatureMatrix) -> usize {
        count_changed(clean, &self.perturbed)
    }
}

pub fn count_changed(clean: &FeatureMatrix, perturbed: &FeatureMatrix) -> usize {
    clean
        .values()
        .iter()
        .zip(perturbed.values().iter())
        .filter(|(a, b)| a != b)
        .count()
}

/// Momentum matrix, selection mask and history of a gradient attack.
#[derive(Debug, Clone)]
pub struct AttackState {
    momentum: Array2<f64>,
    touched: Array2<bool>,
    eligible: Array2<bool>,
    eligible_rows: Vec<bool>,
    remaining: usize,
    iteration: usize,
}

impl AttackState {
    /// Cells are eligible when their row is, and, in discrete mode, when
    /// they hold a binary value.
    pub fn new(x: &FeatureMatrix, eligible_rows: Vec<bool>, mode: FeatureMode) -> Result<Self> {
        if eligible_rows.len() != x.n_nodes() {
            return Err(Error::Dimension(format!(
                "{} row flags for {} nodes",
                eligible_rows.len(),
                x.n_nodes()
            )));
        }
        let eligible = Array2::from_shape_fn(x.values().raw_dim(), |(i, j)| {
            let v = x.values()[[i, j]];
            eligible_rows[i] && (mode == FeatureMode::Continuous || v == 0.0 || v == 1.0)
        });
        let remaining = eligible.iter().filter(|&&e| e).count();
        Ok(Self {
            momentum: Array2::zeros(x.values().raw_dim()),
            touched: Array2::from_elem(x.values().raw_dim(), false),
            eligible,
            eligible_rows,
            remaining,
            iteration: 0,
        })
    }

    pub fn momentum(&self) -> &Array2<f64> {
        &self.momentum
    }

    pub fn eligibility(&self) -> &Array2<bool> {
        &self.eligible
    }

    pub fn eligible_rows(&self) -> &[bool] {
        &self.eligible_rows
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_touched(&self, node: usize, feature: usize) -> bool {
        self.touched[[node, feature]]
    }

    /// Marks a cell as modified; a second touch of the same cell fails.
    pub fn touch(&mut self, node: usize, feature: usize) -> Result<()> {
        if self.touched[[node, feature]] {
            return Err(Error::AlreadyTouched { node, feature });
        }
        self.touched[[node, feature]] = true;
        if self.eligible[[node, feature]] {
            self.eligible[[node, feature]] = false;
            self.remaining -= 1;
        }
        Ok(())
    }
}

/// `μ · F_prev + grad`
pub fn momentum_update(prev: &Array2<f64>, grad: &Array2<f64>, mu: f64) -> Result<Array2<f64>> {
    if prev.dim() != grad.dim() {
        return Err(Error::Dimension(format!(
            "momentum is {:?} but gradient is {:?}",
            prev.dim(),
            grad.dim()
        )));
    }
    let mut out = grad.clone();
    out.zip_mut_with(prev, |g, &p| *g += mu * p);
    Ok(out)
}

/// Eligible cell with the largest `|F|`; ties go to the smallest `(i, j)`.
pub fn select_feature(f: &Array2<f64>, eligibility: &Array2<bool>) -> Result<(usize, usize)> {
    if f.dim() != eligibility.dim() {
        return Err(Error::Dimension(format!(
            "scores are {:?} but eligibility is {:?}",
            f.dim(),
            eligibility.dim()
        )));
    }
    let scores = f.as_standard_layout();
    let mask = eligibility.as_standard_layout();
    let scores = scores.as_slice().expect("standard layout");
    let mask = mask.as_slice().expect("standard layout");
    let mut best: Option<(usize, f64)> = None;
    for (k, (&v, &ok)) in scores.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, b)| v.abs() > b) {
            best = Some((k, v.abs()));
        }
    }
    let ncols = f.ncols().max(1);
    best.map(|(k, _)| (k / ncols, k % ncols))
        .ok_or(Error::SelectionExhausted)
}

/// Flips a binary cell.
pub fn modify_discrete(x: &mut Array2<f64>, node: usize, feature: usize) -> Result<CellChange> {
    let old = x[[node, feature]];
    let new = match old {
        v if v == 0.0 => 1.0,
        v if v == 1.0 => 0.0,
        value => return Err(Error::ModeMismatch { node, feature, value }),
    };
    x[[node, feature]] = new;
    Ok(CellChange { node, feature, old, new })
}

/// `1` for strictly positive input, `0` otherwise.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn signed_step(x: f64, convention: SignConvention) -> f64 {
    match convention {
        SignConvention::Binary => sign(x),
        SignConvention::Symmetric => {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
    }
}

/// `X[i][j] += η · sign(F[i][j])`
pub fn modify_continuous(
    x: &mut Array2<f64>,
    node: usize,
    feature: usize,
    eta: f64,
    score: f64,
    convention: SignConvention,
) -> CellChange {
    let old = x[[node, feature]];
    let new = old + eta * signed_step(score, convention);
    x[[node, feature]] = new;
    CellChange { node, feature, old, new }
}

/// Clamps every entry into `[min, max]`.
pub fn clip_features(x: &mut Array2<f64>, min: f64, max: f64) {
    x.mapv_inplace(|v| v.clamp(min, max));
}

fn all_rows(n: usize) -> Vec<bool> {
    vec![true; n]
}

/// Rows of the `⌈fraction · |V|⌉` highest-degree nodes (ties by index).
pub fn top_degree_rows(hypergraph: &Hypergraph, fraction: f64) -> Result<Vec<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!(
            "degree top fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = hypergraph.n_nodes();
    let count = ((fraction * n as f64 - COUNT_SLACK).ceil() as usize).clamp(1, n);
    let mut rows = vec![false; n];
    for v in hypergraph.nodes_by_degree().into_iter().take(count) {
        rows[v] = true;
    }
    Ok(rows)
}

/// Whole degree levels, highest first, until they hold at least `budget`
/// modifiable cells.
fn max_degree_rows(x: &FeatureMatrix, hypergraph: &Hypergraph, budget: usize, mode: FeatureMode) -> Vec<bool> {
    let n = x.n_nodes();
    let degrees = hypergraph.node_degrees();
    let order = hypergraph.nodes_by_degree();
    let mut rows = vec![false; n];
    let mut cells = 0usize;
    let mut k = 0;
    while k < n && cells < budget {
        let level = degrees[order[k]];
        while k < n && degrees[order[k]] == level {
            let v = order[k];
            rows[v] = true;
            cells += x
                .values()
                .row(v)
                .iter()
                .filter(|&&value| mode == FeatureMode::Continuous || value == 0.0 || value == 1.0)
                .count();
            k += 1;
        }
    }
    rows
}

fn gradient_attack(
    x: &FeatureMatrix,
    labels: &LabelData,
    surrogate: &Surrogate,
    cfg: &AttackConfig,
    momentum_decay: f64,
    eligible_rows: Vec<bool>,
) -> Result<AttackResult> {
    let budget = cfg.budget(x.n_nodes())?;
    let eta = cfg.eta.unwrap_or_else(|| x.mean());
    let (lo, hi) = (x.min(), x.max());
    let mut current = x.clone();
    let mut state = AttackState::new(x, eligible_rows, cfg.feature_mode)?;
    let mut cells = Vec::with_capacity(budget);

    while cells.len() < budget && state.remaining() > 0 {
        let q = feature_grad_factor(&surrogate.operator, &current, &surrogate.params, labels)?;
        // F ← μF + QΘ1ᵀ in one product
        general_mat_mul(1.0, &q, &surrogate.params.theta1.t(), momentum_decay, &mut state.momentum);
        let (i, j) = select_feature(&state.momentum, &state.eligible)?;
        state.touch(i, j)?;
        let change = match cfg.feature_mode {
            FeatureMode::Discrete => modify_discrete(current.values_mut(), i, j)?,
            FeatureMode::Continuous => modify_continuous(
                current.values_mut(),
                i,
                j,
                eta,
                state.momentum[[i, j]],
                cfg.sign_convention,
            ),
        };
        cells.push(change);
        state.iteration += 1;
    }

    if cfg.feature_mode == FeatureMode::Continuous {
        clip_features(current.values_mut(), lo, hi);
        for c in &mut cells {
            c.new = current.values()[[c.node, c.feature]];
        }
    }
    Ok(AttackResult {
        exhausted: cells.len() < budget,
        modifications_used: cells.len(),
        perturbed: current,
        modified_cells: cells,
        budget,
    })
}

/// Momentum-gradient attack with `μ = cfg.momentum_decay`.
pub fn mghga_attack(
    x: &FeatureMatrix,
    labels: &LabelData,
    surrogate: &Surrogate,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    gradient_attack(x, labels, surrogate, cfg, cfg.momentum_decay, all_rows(x.n_nodes()))
}

/// Plain gradient attack: MGHGA with `μ = 0`.
pub fn fga_attack(
    x: &FeatureMatrix,
    labels: &LabelData,
    surrogate: &Surrogate,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    gradient_attack(x, labels, surrogate, cfg, 0.0, all_rows(x.n_nodes()))
}

/// MGHGA restricted to the top-degree rows of the surrogate hypergraph.
pub fn mghga_d_attack(
    x: &FeatureMatrix,
    labels: &LabelData,
    surrogate: &Surrogate,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let rows = top_degree_rows(
        &surrogate.hypergraph,
        cfg.degree_top_fraction.unwrap_or(DEFAULT_TOP_FRACTION),
    )?;
    gradient_attack(x, labels, surrogate, cfg, cfg.momentum_decay, rows)
}

/// FGA restricted to the top-degree rows of the surrogate hypergraph.
pub fn fga_d_attack(
    x: &FeatureMatrix,
    labels: &LabelData,
    surrogate: &Surrogate,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let rows = top_degree_rows(
        &surrogate.hypergraph,
        cfg.degree_top_fraction.unwrap_or(DEFAULT_TOP_FRACTION),
    )?;
    gradient_attack(x, labels, surrogate, cfg, 0.0, rows)
}

fn random_cells(
    x: &FeatureMatrix,
    cfg: &AttackConfig,
    eligible_rows: &[bool],
) -> Result<AttackResult> {
    let budget = cfg.budget(x.n_nodes())?;
    let d = x.n_features();
    let candidates: Vec<usize> = x
        .values()
        .indexed_iter()
        .filter(|((i, _), &v)| {
            eligible_rows[*i] && (cfg.feature_mode == FeatureMode::Continuous || v == 0.0 || v == 1.0)
        })
        .map(|((i, j), _)| i * d + j)
        .collect();

    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let amount = budget.min(candidates.len());
    let picks = rand::seq::index::sample(&mut rng, candidates.len(), amount);
    let range = Uniform::new_inclusive(x.min(), x.max()).expect("finite feature range");

    let mut current = x.clone();
    let mut cells = Vec::with_capacity(amount);
    for p in picks.iter() {
        let flat = candidates[p];
        let (i, j) = (flat / d, flat % d);
        let change = match cfg.feature_mode {
            FeatureMode::Discrete => modify_discrete(current.values_mut(), i, j)?,
            FeatureMode::Continuous => {
                let values = current.values_mut();
                let old = values[[i, j]];
                let new = range.sample(&mut rng);
                values[[i, j]] = new;
                CellChange { node: i, feature: j, old, new }
            }
        };
        cells.push(change);
    }
    Ok(AttackResult {
        exhausted: cells.len() < budget,
        modifications_used: cells.len(),
        perturbed: current,
        modified_cells: cells,
        budget,
    })
}

/// `Δ` distinct uniformly random cells. Discrete cells are flipped;
/// continuous cells are redrawn uniformly from the clean value range.
pub fn random_attack(x: &FeatureMatrix, cfg: &AttackConfig) -> Result<AttackResult> {
    random_cells(x, cfg, &all_rows(x.n_nodes()))
}

/// Random modifications restricted to the highest-degree nodes.
///
/// Degree levels are admitted whole, from the highest down, until they
/// contain at least `Δ` modifiable cells; cells are then drawn as in
/// [`random_attack`].
pub fn nda_attack(x: &FeatureMatrix, hypergraph: &Hypergraph, cfg: &AttackConfig) -> Result<AttackResult> {
    if hypergraph.n_nodes() != x.n_nodes() {
        return Err(Error::Dimension(format!(
            "hypergraph has {} nodes but features have {}",
            hypergraph.n_nodes(),
            x.n_nodes()
        )));
    }
    let budget = cfg.budget(x.n_nodes())?;
    let rows = max_degree_rows(x, hypergraph, budget, cfg.feature_mode);
    random_cells(x, cfg, &rows)
}

/// Dispatches on `kind`. `surrogate` may be `None` only for attacks that do
/// not need one.
pub fn run_attack(
    kind: AttackKind,
    x: &FeatureMatrix,
    labels: &LabelData,
    surrogate: Option<&Surrogate>,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let need = || {
        surrogate.ok_or_else(|| Error::InvalidInput(format!("attack `{kind}` needs a surrogate")))
    };
    match kind {
        AttackKind::None => Ok(AttackResult::unmodified(x, cfg.budget(x.n_nodes())?)),
        AttackKind::Random => random_attack(x, cfg),
        AttackKind::Nda => nda_attack(x, &need()?.hypergraph, cfg),
        AttackKind::Fga => fga_attack(x, labels, need()?, cfg),
        AttackKind::FgaD => fga_d_attack(x, labels, need()?, cfg),
        AttackKind::Mghga => mghga_attack(x, labels, need()?, cfg),
        AttackKind::MghgaD => mghga_d_attack(x, labels, need()?, cfg),
    }
}
