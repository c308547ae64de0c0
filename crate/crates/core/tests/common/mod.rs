//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use mghga::attack::{CellChange, FeatureMode};
use mghga::hgnn::{forward, loss, LabelData, ModelParams};
use mghga::hypergraph::{FeatureMatrix, Hypergraph, NormalizedOperator};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

pub fn random_features(rng: &mut ChaCha8Rng, n: usize, d: usize, mode: FeatureMode) -> FeatureMatrix {
    let values = match mode {
        FeatureMode::Discrete => Array2::from_shape_simple_fn((n, d), || f64::from(rng.random_bool(0.4) as u8)),
        FeatureMode::Continuous => Array2::from_shape_simple_fn((n, d), || rng.random_range(0.0..1.0)),
    };
    FeatureMatrix::new(values).unwrap()
}

/// Labels with a random disjoint split; every class index below `c` is valid.
pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, c: usize) -> LabelData {
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let mut train = vec![false; n];
    let mut test = vec![false; n];
    for v in 0..n {
        if v % 2 == 0 {
            train[v] = true;
        } else {
            test[v] = true;
        }
    }
    LabelData::new(labels, c, train, test).unwrap()
}

pub fn random_params(rng: &mut ChaCha8Rng, d: usize, h: usize, c: usize) -> ModelParams {
    ModelParams::new(random_matrix(rng, d, h, 1.0), random_matrix(rng, h, c, 1.0)).unwrap()
}

/// Double loop over `sqrt(Σ (a - b)²)`.
pub fn oracle_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..x.ncols() {
                let diff = x[[i, k]] - x[[j, k]];
                acc += diff * diff;
            }
            out[[i, j]] = acc.sqrt();
        }
    }
    out
}

/// Node `v` plus the first `k` others after sorting by `(distance, index)`.
pub fn oracle_knn_edges(x: &Array2<f64>, k: usize) -> Vec<Vec<usize>> {
    let dist = oracle_distances(x);
    (0..x.nrows())
        .map(|v| {
            let mut others: Vec<usize> = (0..x.nrows()).filter(|&u| u != v).collect();
            others.sort_by(|&a, &b| dist[[v, a]].total_cmp(&dist[[v, b]]).then(a.cmp(&b)));
            let mut edge: Vec<usize> = others.into_iter().take(k).collect();
            edge.push(v);
            edge.sort_unstable();
            edge
        })
        .collect()
}

/// `Dv^-1/2 · H · W · De^-1 · Hᵀ · Dv^-1/2` as five dense products.
pub fn oracle_operator(g: &Hypergraph) -> Array2<f64> {
    let h = g.incidence();
    let (n, m) = h.dim();
    let w = Array2::from_diag(g.edge_weights());
    let mut dv = Array2::zeros((n, n));
    for v in 0..n {
        let degree: f64 = (0..m).map(|e| g.edge_weights()[e] * h[[v, e]]).sum();
        dv[[v, v]] = 1.0 / degree.sqrt();
    }
    let mut de = Array2::zeros((m, m));
    for e in 0..m {
        let degree: f64 = (0..n).map(|v| h[[v, e]]).sum();
        de[[e, e]] = 1.0 / degree;
    }
    dv.dot(&h).dot(&w).dot(&de).dot(&h.t()).dot(&dv)
}

fn relu(m: &Array2<f64>) -> Array2<f64> {
    m.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

fn softmax(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (o, e) in row.iter_mut().zip(exps) {
            *o = e / total;
        }
    }
    out
}

/// Layer by layer with a dense operator.
pub fn oracle_forward(hop: &Array2<f64>, x: &Array2<f64>, p: &ModelParams) -> Array2<f64> {
    let a1 = hop.dot(&x.dot(&p.theta1));
    let a2 = hop.dot(&relu(&a1).dot(&p.theta2));
    softmax(&a2)
}

/// Reverse-mode gradient of the training loss with respect to `X`, written
/// directly against a dense operator.
pub fn oracle_grad_features(hop: &Array2<f64>, x: &Array2<f64>, p: &ModelParams, labels: &LabelData) -> Array2<f64> {
    let a1 = hop.dot(&x.dot(&p.theta1));
    let hidden = relu(&a1);
    let z = softmax(&hop.dot(&hidden.dot(&p.theta2)));
    let mut dlogits = Array2::zeros(z.raw_dim());
    for u in 0..z.nrows() {
        if labels.train_mask()[u] {
            for c in 0..z.ncols() {
                let target = if labels.labels()[u] == c { 1.0 } else { 0.0 };
                dlogits[[u, c]] = z[[u, c]] - target;
            }
        }
    }
    let dhidden = hop.t().dot(&dlogits).dot(&p.theta2.t());
    let da1 = Array2::from_shape_fn(a1.raw_dim(), |(i, j)| if a1[[i, j]] > 0.0 { dhidden[[i, j]] } else { 0.0 });
    hop.t().dot(&da1).dot(&p.theta1.t())
}

fn loss_at(op: &NormalizedOperator, x: &Array2<f64>, p: &ModelParams, labels: &LabelData) -> f64 {
    let probs = forward(op, &FeatureMatrix::new(x.clone()).unwrap(), p, None).unwrap();
    loss(&probs, labels).unwrap()
}

/// Central differences of the training loss with step `h`.
pub fn fd_grad_features(op: &NormalizedOperator, x: &Array2<f64>, p: &ModelParams, labels: &LabelData, h: f64) -> Array2<f64> {
    Array2::from_shape_fn(x.raw_dim(), |cell| {
        let mut up = x.clone();
        up[cell] += h;
        let mut down = x.clone();
        down[cell] -= h;
        (loss_at(op, &up, p, labels) - loss_at(op, &down, p, labels)) / (2.0 * h)
    })
}

pub fn fd_grad_params(op: &NormalizedOperator, x: &Array2<f64>, p: &ModelParams, labels: &LabelData, h: f64) -> (Array2<f64>, Array2<f64>) {
    let g1 = Array2::from_shape_fn(p.theta1.raw_dim(), |cell| {
        let mut up = p.clone();
        up.theta1[cell] += h;
        let mut down = p.clone();
        down.theta1[cell] -= h;
        (loss_at(op, x, &up, labels) - loss_at(op, x, &down, labels)) / (2.0 * h)
    });
    let g2 = Array2::from_shape_fn(p.theta2.raw_dim(), |cell| {
        let mut up = p.clone();
        up.theta2[cell] += h;
        let mut down = p.clone();
        down.theta2[cell] -= h;
        (loss_at(op, x, &up, labels) - loss_at(op, x, &down, labels)) / (2.0 * h)
    });
    (g1, g2)
}

/// `max |a - b| / max(max |b|, floor)`
pub fn max_rel_err(a: &Array2<f64>, b: &Array2<f64>, floor: f64) -> f64 {
    let scale = b.iter().fold(floor, |m, v| m.max(v.abs()));
    a.iter().zip(b.iter()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Straight-line replay of the momentum attack: at step `t` the momentum is
/// rebuilt as `Σ_s μ^(t-s) ∇(X_s)` from every earlier iterate, then the
/// largest eligible `|F|` (first in row-major order) is modified.
pub fn resimulate_attack(
    hop: &Array2<f64>,
    clean: &Array2<f64>,
    p: &ModelParams,
    labels: &LabelData,
    mu: f64,
    budget: usize,
    mode: FeatureMode,
    eta: f64,
    rows: &[bool],
) -> Vec<CellChange> {
    let (n, d) = clean.dim();
    let mut iterates = vec![clean.clone()];
    let mut log: Vec<CellChange> = Vec::new();
    for t in 0..budget {
        let mut f = Array2::<f64>::zeros((n, d));
        for (s, xs) in iterates.iter().enumerate() {
            let g = oracle_grad_features(hop, xs, p, labels);
            f = f + g * mu.powi((t - s) as i32);
        }
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            for j in 0..d {
                let v = clean[[i, j]];
                let eligible = rows[i]
                    && !log.iter().any(|c| c.node == i && c.feature == j)
                    && (mode == FeatureMode::Continuous || v == 0.0 || v == 1.0);
                if eligible && best.is_none_or(|(_, _, b)| f[[i, j]].abs() > b) {
                    best = Some((i, j, f[[i, j]].abs()));
                }
            }
        }
        let Some((i, j, _)) = best else { break };
        let mut next = iterates.last().unwrap().clone();
        let old = next[[i, j]];
        let new = match mode {
            FeatureMode::Discrete => 1.0 - old,
            FeatureMode::Continuous => old + if f[[i, j]] > 0.0 { eta } else { 0.0 },
        };
        next[[i, j]] = new;
        log.push(CellChange { node: i, feature: j, old, new });
        iterates.push(next);
    }
    if mode == FeatureMode::Continuous {
        let lo = clean.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = clean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for c in &mut log {
            c.new = c.new.clamp(lo, hi);
        }
    }
    log
}
