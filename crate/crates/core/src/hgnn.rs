//! Two-layer hypergraph neural network
//! `Z = softmax(Ĥ ReLU(Ĥ X Θ1) Θ2)` with hand-derived gradients.
//!
//! Gradients are exact reverse-mode derivatives of the summed cross-entropy
//! over the training nodes. With `G2 = Z - onehot(Y)` on training rows (zero
//! elsewhere):
//!
//! ```text
//! P   = Ĥ G2              dΘ2 = Hᵀ P
//! G1  = (P Θ2ᵀ) ⊙ mask ⊙ [A1 > 0]
//! Q   = Ĥ G1              dΘ1 = Xᵀ Q        dX = Q Θ1ᵀ
//! ```
//!
//! where `A1 = Ĥ X Θ1`, `H` is the (dropped-out) hidden activation and `mask`
//! the dropout scaling. `Ĥ` is symmetric so `Ĥᵀ = Ĥ`.

use ndarray::{Array2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{FeatureMatrix, NormalizedOperator};
use crate::sparse::CsrMatrix;

/// Deterministic generator used for every seeded draw in the crate.
pub type SeededRng = ChaCha8Rng;

const LOG_CLAMP: f64 = 1e-12;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Feature matrices sparser than this are multiplied through CSR.
const SPARSE_FEATURE_DENSITY: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta1: Array2<f64>,
    pub theta2: Array2<f64>,
}

impl ModelParams {
    pub fn new(theta1: Array2<f64>, theta2: Array2<f64>) -> Result<Self> {
        let p = Self { theta1, theta2 };
        p.validate()?;
        Ok(p)
    }

    /// Glorot-uniform initialization, `Θ1` drawn before `Θ2`.
    pub fn glorot(n_features: usize, hidden_dim: usize, n_classes: usize, rng: &mut SeededRng) -> Self {
        Self {
            theta1: glorot_uniform(n_features, hidden_dim, rng),
            theta2: glorot_uniform(hidden_dim, n_classes, rng),
        }
    }

    pub fn n_features(&self) -> usize {
        self.theta1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.theta1.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.theta2.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta1.ncols() != self.theta2.nrows() {
            return Err(Error::Dimension(format!(
                "theta1 is {:?} but theta2 is {:?}",
                self.theta1.dim(),
                self.theta2.dim()
            )));
        }
        if self.hidden_dim() < 1 || self.n_classes() < 2 || self.n_features() < 1 {
            return Err(Error::InvalidInput(format!(
                "need d >= 1, h >= 1 and c >= 2, got d={} h={} c={}",
                self.n_features(),
                self.hidden_dim(),
                self.n_classes()
            )));
        }
        if self.theta1.iter().chain(self.theta2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("model parameters must be finite".into()));
        }
        Ok(())
    }
}

fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            learning_rate: 0.001,
            hidden_dim: 64,
            dropout_rate: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        self.validate_optimizer()
    }

    fn validate_optimizer(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.hidden_dim < 1 {
            return Err(Error::Config("hidden_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// Node labels plus the training and test node masks.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelData {
    labels: Vec<usize>,
    n_classes: usize,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Train,
    Test,
}

impl LabelData {
    pub fn new(
        labels: Vec<usize>,
        n_classes: usize,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = labels.len();
        if train_mask.len() != n || test_mask.len() != n {
            return Err(Error::Dimension(format!(
                "{n} labels but masks of length {} and {}",
                train_mask.len(),
                test_mask.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 classes, got {n_classes}")));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        if train_mask.iter().zip(&test_mask).any(|(a, b)| *a && *b) {
            return Err(Error::InvalidInput("train and test masks overlap".into()));
        }
        if !train_mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("train mask is empty".into()));
        }
        if !test_mask.iter().any(|&m| m) {
            return Err(Error::InvalidInput("test mask is empty".into()));
        }
        Ok(Self {
            labels,
            n_classes,
            train_mask,
            test_mask,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn mask(&self, subset: Subset) -> &[bool] {
        match subset {
            Subset::Train => &self.train_mask,
            Subset::Test => &self.test_mask,
        }
    }
}

/// Dropout on the hidden activation, drawing from the caller's generator.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut SeededRng,
}

enum Inputs<'a> {
    Dense(&'a Array2<f64>),
    Sparse(CsrMatrix),
}

impl<'a> Inputs<'a> {
    fn new(x: &'a FeatureMatrix) -> Self {
        if x.density() < SPARSE_FEATURE_DENSITY {
            Inputs::Sparse(CsrMatrix::from_dense(x.values()))
        } else {
            Inputs::Dense(x.values())
        }
    }

    /// `X · rhs`
    fn mul(&self, rhs: &Array2<f64>) -> Array2<f64> {
        match self {
            Inputs::Dense(x) => x.dot(rhs),
            Inputs::Sparse(x) => x.mul_dense(rhs),
        }
    }

    /// `Xᵀ · rhs`
    fn t_mul(&self, rhs: &Array2<f64>) -> Array2<f64> {
        match self {
            Inputs::Dense(x) => x.t().dot(rhs),
            Inputs::Sparse(x) => x.t_mul_dense(rhs),
        }
    }
}

struct ForwardCache {
    pre_hidden: Array2<f64>,
    hidden: Array2<f64>,
    dropout_scale: Option<Array2<f64>>,
    probs: Array2<f64>,
}

fn check_shapes(op: &NormalizedOperator, x: &FeatureMatrix, params: &ModelParams) -> Result<()> {
    if op.n_nodes() != x.n_nodes() {
        return Err(Error::Dimension(format!(
            "operator covers {} nodes but features have {} rows",
            op.n_nodes(),
            x.n_nodes()
        )));
    }
    if params.n_features() != x.n_features() {
        return Err(Error::Dimension(format!(
            "theta1 expects {} features but X has {}",
            params.n_features(),
            x.n_features()
        )));
    }
    params.validate()
}

fn check_labels(x: &FeatureMatrix, params: &ModelParams, labels: &LabelData) -> Result<()> {
    if labels.n_nodes() != x.n_nodes() {
        return Err(Error::Dimension(format!(
            "{} labels for {} nodes",
            labels.n_nodes(),
            x.n_nodes()
        )));
    }
    if labels.n_classes() != params.n_classes() {
        return Err(Error::Dimension(format!(
            "labels have {} classes but the model outputs {}",
            labels.n_classes(),
            params.n_classes()
        )));
    }
    Ok(())
}

fn softmax_rows(mut logits: Array2<f64>) -> Array2<f64> {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    logits
}

fn forward_pass(
    op: &NormalizedOperator,
    inputs: &Inputs<'_>,
    params: &ModelParams,
    dropout: Option<Dropout<'_>>,
) -> ForwardCache {
    let pre_hidden = op.apply(&inputs.mul(&params.theta1));
    let mut hidden = pre_hidden.mapv(|v| v.max(0.0));
    let dropout_scale = match dropout {
        Some(Dropout { rate, rng }) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let scale = Array2::from_shape_simple_fn(hidden.raw_dim(), || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            });
            hidden *= &scale;
            Some(scale)
        }
        _ => None,
    };
    let logits = op.apply(&hidden.dot(&params.theta2));
    ForwardCache {
        pre_hidden,
        hidden,
        dropout_scale,
        probs: softmax_rows(logits),
    }
}

/// Class probabilities for every node. Pass `dropout` only while training.
pub fn forward(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    params: &ModelParams,
    dropout: Option<Dropout<'_>>,
) -> Result<Array2<f64>> {
    check_shapes(op, x, params)?;
    Ok(forward_pass(op, &Inputs::new(x), params, dropout).probs)
}

/// `-Σ_{u ∈ train} ln Z[u, Y[u]]`, with the log argument clamped at 1e-12.
pub fn loss(probs: &Array2<f64>, labels: &LabelData) -> Result<f64> {
    if probs.nrows() != labels.n_nodes() {
        return Err(Error::Dimension(format!(
            "{} probability rows for {} labels",
            probs.nrows(),
            labels.n_nodes()
        )));
    }
    if probs.ncols() != labels.n_classes() {
        return Err(Error::Dimension(format!(
            "{} probability columns for {} classes",
            probs.ncols(),
            labels.n_classes()
        )));
    }
    if !labels.train_mask().iter().any(|&m| m) {
        return Err(Error::InvalidInput("train mask is empty".into()));
    }
    Ok(labels
        .labels()
        .iter()
        .zip(labels.train_mask())
        .enumerate()
        .filter(|(_, (_, &train))| train)
        .map(|(u, (&y, _))| -probs[[u, y]].max(LOG_CLAMP).ln())
        .sum())
}

/// Row-wise argmax; ties go to the smallest class index.
pub fn predict(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Fraction of nodes in `subset` whose prediction matches the label.
pub fn accuracy(preds: &[usize], labels: &LabelData, subset: Subset) -> Result<f64> {
    if preds.len() != labels.n_nodes() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.n_nodes()
        )));
    }
    let mask = labels.mask(subset);
    let (mut hits, mut total) = (0usize, 0usize);
    for ((&p, &y), &m) in preds.iter().zip(labels.labels()).zip(mask) {
        if m {
            total += 1;
            hits += usize::from(p == y);
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput(format!("{subset:?} mask is empty")));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub loss: f64,
    pub theta1: Array2<f64>,
    pub theta2: Array2<f64>,
}

struct Backward {
    theta1: Array2<f64>,
    theta2: Array2<f64>,
    q: Array2<f64>,
}

fn backward_pass(
    op: &NormalizedOperator,
    inputs: &Inputs<'_>,
    params: &ModelParams,
    cache: &ForwardCache,
    labels: &LabelData,
) -> Backward {
    let mut g2 = Array2::zeros(cache.probs.raw_dim());
    for (u, (&y, &train)) in labels.labels().iter().zip(labels.train_mask()).enumerate() {
        if train {
            let mut row = g2.row_mut(u);
            row.assign(&cache.probs.row(u));
            row[y] -= 1.0;
        }
    }
    let p = op.apply(&g2);
    let d_theta2 = cache.hidden.t().dot(&p);

    let mut g1 = p.dot(&params.theta2.t());
    if let Some(scale) = &cache.dropout_scale {
        g1 *= scale;
    }
    Zip::from(&mut g1)
        .and(&cache.pre_hidden)
        .for_each(|g, &a| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
    let q = op.apply(&g1);
    let d_theta1 = inputs.t_mul(&q);
    Backward {
        theta1: d_theta1,
        theta2: d_theta2,
        q,
    }
}

/// Gradient of the training loss with respect to `Θ1` and `Θ2`, dropout off.
pub fn grad_params(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    params: &ModelParams,
    labels: &LabelData,
) -> Result<ParamGrads> {
    check_shapes(op, x, params)?;
    check_labels(x, params, labels)?;
    let inputs = Inputs::new(x);
    let cache = forward_pass(op, &inputs, params, None);
    let loss = loss(&cache.probs, labels)?;
    let b = backward_pass(op, &inputs, params, &cache, labels);
    Ok(ParamGrads {
        loss,
        theta1: b.theta1,
        theta2: b.theta2,
    })
}

/// `F[i][j] = ∂L/∂X[i][j]` for the training loss, dropout off.
pub fn grad_features(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    params: &ModelParams,
    labels: &LabelData,
) -> Result<Array2<f64>> {
    let q = feature_grad_factor(op, x, params, labels)?;
    Ok(q.dot(&params.theta1.t()))
}

/// `Q` such that `∂L/∂X = Q Θ1ᵀ`.
pub(crate) fn feature_grad_factor(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    params: &ModelParams,
    labels: &LabelData,
) -> Result<Array2<f64>> {
    check_shapes(op, x, params)?;
    check_labels(x, params, labels)?;
    let inputs = Inputs::new(x);
    let cache = forward_pass(op, &inputs, params, None);
    Ok(backward_pass(op, &inputs, params, &cache, labels).q)
}

struct Adam {
    lr: f64,
    step: i32,
    m: [Array2<f64>; 2],
    v: [Array2<f64>; 2],
}

impl Adam {
    fn new(lr: f64, params: &ModelParams) -> Self {
        let z1 = Array2::zeros(params.theta1.raw_dim());
        let z2 = Array2::zeros(params.theta2.raw_dim());
        Self {
            lr,
            step: 0,
            m: [z1.clone(), z2.clone()],
            v: [z1, z2],
        }
    }

    fn update(&mut self, params: &mut ModelParams, grads: [&Array2<f64>; 2]) {
        self.step += 1;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.step);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.step);
        let lr = self.lr;
        let targets = [&mut params.theta1, &mut params.theta2];
        for (((theta, g), m), v) in targets.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(theta).and(g).and(m).and(v).for_each(|t, &g, m, v| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *t -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            });
        }
    }
}

/// Trained parameters plus the per-epoch training loss (dropout on).
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_trace: Vec<f64>,
}

/// Full-batch Adam on the training loss. `epochs = 0` returns the
/// initialization.
pub fn train(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    labels: &LabelData,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    train_traced(op, x, labels, cfg).map(|o| o.params)
}

pub fn train_traced(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    labels: &LabelData,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate_optimizer()?;
    let mut rng = SeededRng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::glorot(x.n_features(), cfg.hidden_dim, labels.n_classes(), &mut rng);
    check_shapes(op, x, &params)?;
    check_labels(x, &params, labels)?;

    let inputs = Inputs::new(x);
    let mut adam = Adam::new(cfg.learning_rate, &params);
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let dropout = Dropout {
            rate: cfg.dropout_rate,
            rng: &mut rng,
        };
        let cache = forward_pass(op, &inputs, &params, Some(dropout));
        let value = loss(&cache.probs, labels)?;
        if !value.is_finite() {
            return Err(Error::Divergence { epoch, loss: value });
        }
        let grads = backward_pass(op, &inputs, &params, &cache, labels);
        if grads.theta1.iter().chain(grads.theta2.iter()).any(|g| !g.is_finite()) {
            return Err(Error::Divergence { epoch, loss: value });
        }
        adam.update(&mut params, [&grads.theta1, &grads.theta2]);
        loss_trace.push(value);
    }
    Ok(TrainOutcome { params, loss_trace })
}

/// Test-set accuracy of `params` on `(op, x)`.
pub fn evaluate(
    op: &NormalizedOperator,
    x: &FeatureMatrix,
    params: &ModelParams,
    labels: &LabelData,
    subset: Subset,
) -> Result<f64> {
    let probs = forward(op, x, params, None)?;
    accuracy(&predict(&probs), labels, subset)
}

/// Sum of each probability row; used by tests and sanity checks.
pub fn row_sums(probs: &Array2<f64>) -> Vec<f64> {
    probs.sum_axis(Axis(1)).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{build_knn_hypergraph, normalized_operator, Hypergraph};
    use ndarray::array;

    fn labels(y: Vec<usize>, c: usize, train: &[usize], test: &[usize]) -> LabelData {
        let n = y.len();
        let mut tr = vec![false; n];
        let mut te = vec![false; n];
        train.iter().for_each(|&i| tr[i] = true);
        test.iter().for_each(|&i| te[i] = true);
        LabelData::new(y, c, tr, te).unwrap()
    }

    fn ring_operator(n: usize) -> NormalizedOperator {
        let edges = (0..n).map(|v| vec![v, (v + 1) % n]).collect();
        normalized_operator(&Hypergraph::from_edges(n, edges, None).unwrap()).unwrap()
    }

    #[test]
    fn zero_theta2_gives_uniform_rows() {
        let op = ring_operator(4);
        let x = FeatureMatrix::new(array![[1.0, 2.0], [0.0, 1.0], [3.0, -1.0], [0.5, 0.5]]).unwrap();
        let params = ModelParams::new(array![[1.0, -1.0], [0.5, 2.0]], Array2::zeros((2, 3))).unwrap();
        let z = forward(&op, &x, &params, None).unwrap();
        assert!(z.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn single_node_row_sums_to_one() {
        let op = normalized_operator(&Hypergraph::from_edges(1, vec![vec![0]], None).unwrap()).unwrap();
        let x = FeatureMatrix::new(array![[0.3, -4.0, 2.0]]).unwrap();
        let mut rng = SeededRng::seed_from_u64(9);
        let params = ModelParams::glorot(3, 5, 4, &mut rng);
        let z = forward(&op, &x, &params, None).unwrap();
        assert!((row_sums(&z)[0] - 1.0).abs() < 1e-12);
        assert!(z.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn forward_rejects_mismatched_shapes() {
        let op = ring_operator(3);
        let x = FeatureMatrix::new(Array2::ones((4, 2))).unwrap();
        let params = ModelParams::new(Array2::ones((2, 2)), Array2::ones((2, 2))).unwrap();
        assert!(matches!(forward(&op, &x, &params, None), Err(Error::Dimension(_))));
        let x = FeatureMatrix::new(Array2::ones((3, 5))).unwrap();
        assert!(matches!(forward(&op, &x, &params, None), Err(Error::Dimension(_))));
    }

    #[test]
    fn dropout_zeroes_and_rescales() {
        let op = ring_operator(6);
        let x = FeatureMatrix::new(Array2::from_elem((6, 3), 1.0)).unwrap();
        let mut rng = SeededRng::seed_from_u64(1);
        let params = ModelParams::glorot(3, 32, 2, &mut rng);
        let inputs = Inputs::new(&x);
        let cache = forward_pass(&op, &inputs, &params, Some(Dropout { rate: 0.5, rng: &mut rng }));
        let scale = cache.dropout_scale.unwrap();
        assert!(scale.iter().all(|&s| s == 0.0 || s == 2.0));
        assert!(scale.iter().any(|&s| s == 0.0) && scale.iter().any(|&s| s == 2.0));
        let relu = cache.pre_hidden.mapv(|v| v.max(0.0));
        assert_eq!(cache.hidden, relu * &scale);
    }

    #[test]
    fn loss_examples() {
        let y = labels(vec![0, 1, 1], 2, &[0, 1], &[2]);
        let perfect = array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]];
        assert_eq!(loss(&perfect, &y).unwrap(), 0.0);

        let one = labels(vec![1, 0], 2, &[0], &[1]);
        let uniform = array![[0.5, 0.5], [0.5, 0.5]];
        assert!((loss(&uniform, &one).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        // A zero probability on the true class is clamped instead of -inf.
        let hard = array![[1.0, 0.0], [0.5, 0.5]];
        let l = loss(&hard, &one).unwrap();
        assert!((l - (-(1e-12f64).ln())).abs() < 1e-9);
    }

    #[test]
    fn predict_breaks_ties_low() {
        assert_eq!(predict(&array![[0.1, 0.7, 0.2], [0.5, 0.5, 0.0]]), vec![1, 0]);
        assert_eq!(predict(&array![[0.2, 0.4, 0.4]]), vec![1]);
    }

    #[test]
    fn accuracy_examples() {
        let y: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let data = labels(y.clone(), 3, &[0, 1], &(2..12).collect::<Vec<_>>());
        assert_eq!(accuracy(&y, &data, Subset::Test).unwrap(), 1.0);
        let shifted: Vec<usize> = y.iter().map(|v| (v + 1) % 3).collect();
        assert_eq!(accuracy(&shifted, &data, Subset::Test).unwrap(), 0.0);
        let mut half = y.clone();
        for v in half.iter_mut().skip(2).take(5) {
            *v = (*v + 1) % 3;
        }
        assert_eq!(accuracy(&half, &data, Subset::Test).unwrap(), 0.5);
        assert!(accuracy(&y[..3], &data, Subset::Test).is_err());
    }

    #[test]
    fn label_data_validation() {
        assert!(LabelData::new(vec![0, 1], 2, vec![true, false], vec![true, true]).is_err());
        assert!(LabelData::new(vec![0, 1], 2, vec![false, false], vec![true, true]).is_err());
        assert!(LabelData::new(vec![0, 1], 2, vec![true, false], vec![false, false]).is_err());
        assert!(LabelData::new(vec![0, 2], 2, vec![true, false], vec![false, true]).is_err());
        assert!(LabelData::new(vec![0, 1], 2, vec![true, false], vec![false, true]).is_ok());
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let op = ring_operator(4);
        let x = FeatureMatrix::new(Array2::ones((4, 3))).unwrap();
        let y = labels(vec![0, 1, 0, 1], 2, &[0, 1], &[2, 3]);
        let cfg = TrainConfig {
            epochs: 0,
            hidden_dim: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let trained = train(&op, &x, &y, &cfg).unwrap();
        let mut rng = SeededRng::seed_from_u64(11);
        assert_eq!(trained, ModelParams::glorot(3, 5, 2, &mut rng));
    }

    #[test]
    fn training_is_deterministic() {
        let op = ring_operator(8);
        let x = FeatureMatrix::new(Array2::from_shape_fn((8, 3), |(i, j)| ((i * 3 + j) % 5) as f64)).unwrap();
        let y = labels(vec![0, 1, 0, 1, 0, 1, 0, 1], 2, &[0, 1, 2, 3], &[4, 5, 6, 7]);
        let cfg = TrainConfig {
            epochs: 20,
            hidden_dim: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let a = train_traced(&op, &x, &y, &cfg).unwrap();
        let b = train_traced(&op, &x, &y, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn separable_clusters_fit() {
        // Two well-separated clusters in the plane.
        let mut rng = SeededRng::seed_from_u64(5);
        let noise = Uniform::new(-0.5, 0.5).unwrap();
        let x = Array2::from_shape_fn((20, 2), |(i, _)| {
            let centre = if i < 10 { -3.0 } else { 3.0 };
            centre + noise.sample(&mut rng)
        });
        let x = FeatureMatrix::new(x).unwrap();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let train_idx: Vec<usize> = (0..20).step_by(2).collect();
        let test_idx: Vec<usize> = (1..20).step_by(2).collect();
        let data = labels(y, 2, &train_idx, &test_idx);
        let op = normalized_operator(&build_knn_hypergraph(&x, 3).unwrap()).unwrap();
        let params = train(&op, &x, &data, &TrainConfig::default()).unwrap();
        assert!(evaluate(&op, &x, &params, &data, Subset::Train).unwrap() >= 0.95);
    }

    #[test]
    fn inactive_hidden_units_have_zero_gradient() {
        let op = ring_operator(5);
        let x = FeatureMatrix::new(Array2::from_shape_fn((5, 2), |(i, j)| 1.0 + (i + j) as f64)).unwrap();
        // Column 1 of theta1 is strictly negative on positive inputs, so the
        // second hidden unit never fires.
        let params = ModelParams::new(
            array![[0.4, -1.0], [0.2, -0.5]],
            array![[0.3, -0.3], [0.0, 0.0]],
        )
        .unwrap();
        let y = labels(vec![0, 1, 0, 1, 0], 2, &[0, 1, 2], &[3, 4]);
        let g = grad_params(&op, &x, &params, &y).unwrap();
        assert!(g.theta2.row(1).iter().all(|&v| v == 0.0));
        assert!(g.theta1.column(1).iter().all(|&v| v == 0.0));
        assert!(g.theta2.row(0).iter().any(|&v| v != 0.0));
    }
}
