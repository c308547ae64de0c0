//! Distance-based hypergraph construction and the normalized propagation
//! operator `Dv^{-1/2} H W De^{-1} Hᵀ Dv^{-1/2}`.
//!
//! Both constructors create one hyperedge per node, centred on that node and
//! always containing it, so every node and hyperedge degree is at least one.

use std::sync::OnceLock;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Dense node-feature matrix (`|V| × d`) with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "feature ({i}, {j}) is not finite: {v}"
            )));
        }
        if values.is_standard_layout() {
            Ok(Self(values))
        } else {
            Ok(Self(values.as_standard_layout().into_owned()))
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    /// Callers must keep every entry finite.
    pub(crate) fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn n_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `sum(X) / (|V| d)`
    pub fn mean(&self) -> f64 {
        self.0.sum() / self.0.len() as f64
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Fraction of non-zero entries.
    pub fn density(&self) -> f64 {
        let nonzero = match self.0.as_slice_memory_order() {
            Some(s) => s.iter().filter(|&&v| v != 0.0).count(),
            None => self.0.iter().filter(|&&v| v != 0.0).count(),
        };
        nonzero as f64 / self.0.len() as f64
    }

    /// Keeps the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let d = self.n_features();
        let mut out = Array2::zeros((rows.len(), d));
        for (dst, &src) in rows.iter().enumerate() {
            if src >= self.n_nodes() {
                return Err(Error::InvalidInput(format!(
                    "row {src} out of range for {} nodes",
                    self.n_nodes()
                )));
            }
            out.row_mut(dst).assign(&self.0.row(src));
        }
        Self::new(out)
    }
}

/// Euclidean distance between every pair of rows.
///
/// Each squared distance accumulates `(a_k - b_k)^2` in ascending `k`.
/// Sparse inputs skip coordinates that are zero in both rows, which leaves
/// the sum bit-identical to the dense loop.
pub fn pairwise_distances(x: &FeatureMatrix) -> Array2<f64> {
    let n = x.n_nodes();
    let values = x.values();
    let mut out = Array2::zeros((n, n));

    if x.density() < 0.25 {
        let rows: Vec<Vec<(usize, f64)>> = values
            .rows()
            .into_iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &v)| v != 0.0)
                    .map(|(k, &v)| (k, v))
                    .collect()
            })
            .collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let d = sparse_sq_distance(&rows[i], &rows[j]).sqrt();
                out[[i, j]] = d;
                out[[j, i]] = d;
            }
        }
    } else {
        for i in 0..n {
            let a = values.row(i);
            for j in (i + 1)..n {
                let b = values.row(j);
                let mut acc = 0.0;
                for (p, q) in a.iter().zip(b.iter()) {
                    let diff = p - q;
                    acc += diff * diff;
                }
                let d = acc.sqrt();
                out[[i, j]] = d;
                out[[j, i]] = d;
            }
        }
    }
    out
}

fn sparse_sq_distance(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut p, mut q) = (0, 0);
    let mut acc = 0.0;
    while p < a.len() || q < b.len() {
        let diff = match (a.get(p), b.get(q)) {
            (Some(&(ka, va)), Some(&(kb, vb))) if ka == kb => {
                p += 1;
                q += 1;
                va - vb
            }
            (Some(&(ka, va)), Some(&(kb, _))) if ka < kb => {
                p += 1;
                va - 0.0
            }
            (Some(_), Some(&(_, vb))) => {
                q += 1;
                0.0 - vb
            }
            (Some(&(_, va)), None) => {
                p += 1;
                va - 0.0
            }
            (None, Some(&(_, vb))) => {
                q += 1;
                0.0 - vb
            }
            (None, None) => unreachable!(),
        };
        acc += diff * diff;
    }
    acc
}

/// Hypergraph over `n_nodes` nodes stored as per-hyperedge member lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    n_nodes: usize,
    /// Sorted, de-duplicated members of each hyperedge.
    edges: Vec<Vec<usize>>,
    edge_weights: Array1<f64>,
    node_degrees: Array1<f64>,
    edge_degrees: Array1<f64>,
}

impl Hypergraph {
    /// Hyperedges may be given in any member order; weights default to 1.
    pub fn from_edges(
        n_nodes: usize,
        edges: Vec<Vec<usize>>,
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let weights = weights.unwrap_or_else(|| vec![1.0; edges.len()]);
        if weights.len() != edges.len() {
            return Err(Error::Dimension(format!(
                "{} hyperedges but {} weights",
                edges.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "hyperedge weights must be positive, got {w}"
            )));
        }
        let mut node_degrees = Array1::zeros(n_nodes);
        let mut edge_degrees = Array1::zeros(edges.len());
        let mut sorted = Vec::with_capacity(edges.len());
        for (e, mut members) in edges.into_iter().enumerate() {
            members.sort_unstable();
            members.dedup();
            if let Some(&v) = members.iter().find(|&&v| v >= n_nodes) {
                return Err(Error::InvalidInput(format!(
                    "hyperedge {e} references node {v} but there are {n_nodes} nodes"
                )));
            }
            for &v in &members {
                node_degrees[v] += weights[e];
            }
            edge_degrees[e] = members.len() as f64;
            sorted.push(members);
        }
        Ok(Self {
            n_nodes,
            edges: sorted,
            edge_weights: Array1::from(weights),
            node_degrees,
            edge_degrees,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge_weights(&self) -> &Array1<f64> {
        &self.edge_weights
    }

    /// `Dv[v] = Σ_e W[e] H[v, e]`
    pub fn node_degrees(&self) -> &Array1<f64> {
        &self.node_degrees
    }

    /// `De[e] = Σ_v H[v, e]`
    pub fn edge_degrees(&self) -> &Array1<f64> {
        &self.edge_degrees
    }

    /// Dense binary incidence matrix `H` (`|V| × |E|`).
    pub fn incidence(&self) -> Array2<f64> {
        let mut h = Array2::zeros((self.n_nodes, self.edges.len()));
        for (e, members) in self.edges.iter().enumerate() {
            for &v in members {
                h[[v, e]] = 1.0;
            }
        }
        h
    }

    /// Node indices ordered by descending degree, ties by ascending index.
    pub fn nodes_by_degree(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.n_nodes).collect();
        order.sort_by(|&a, &b| {
            self.node_degrees[b]
                .total_cmp(&self.node_degrees[a])
                .then(a.cmp(&b))
        });
        order
    }
}

/// Hyperedge `e_v` = node `v` plus its `k` nearest other nodes by Euclidean
/// distance, ties broken by smaller node index.
pub fn build_knn_hypergraph(x: &FeatureMatrix, k: usize) -> Result<Hypergraph> {
    let n = x.n_nodes();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "k must satisfy 1 <= k < |V| = {n}, got {k}"
        )));
    }
    let dist = pairwise_distances(x);
    let edges = (0..n)
        .map(|v| {
            let row = dist.row(v);
            let by_distance =
                |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
            let mut others: Vec<usize> = (0..n).filter(|&u| u != v).collect();
            if k < others.len() {
                others.select_nth_unstable_by(k - 1, by_distance);
                others.truncate(k);
            }
            others.sort_by(by_distance);
            let mut members = Vec::with_capacity(k + 1);
            members.push(v);
            members.extend(others);
            members
        })
        .collect();
    Hypergraph::from_edges(n, edges, None)
}

/// Hyperedge `e_v` = every node within distance `epsilon` of `v`, plus `v`.
pub fn build_epsilon_hypergraph(x: &FeatureMatrix, epsilon: f64) -> Result<Hypergraph> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let n = x.n_nodes();
    let dist = pairwise_distances(x);
    let edges = (0..n)
        .map(|v| {
            (0..n)
                .filter(|&u| u == v || dist[[v, u]] <= epsilon)
                .collect()
        })
        .collect();
    Hypergraph::from_edges(n, edges, None)
}

/// The normalized hypergraph convolution operator.
///
/// Stored in factored form `S Sᵀ` with `S = Dv^{-1/2} H (W De^{-1})^{1/2}`,
/// which keeps propagation linear in the number of incidences. The dense
/// `|V| × |V|` matrix is materialized on first request and cached.
#[derive(Debug, Clone)]
pub struct NormalizedOperator {
    factor: CsrMatrix,
    dense: OnceLock<Array2<f64>>,
}

pub fn normalized_operator(g: &Hypergraph) -> Result<NormalizedOperator> {
    if let Some(v) = g.node_degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateHypergraph(format!("node {v} has degree 0")));
    }
    if let Some(e) = g.edge_degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::DegenerateHypergraph(format!("hyperedge {e} is empty")));
    }
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); g.n_nodes];
    for (e, members) in g.edges.iter().enumerate() {
        let edge_scale = (g.edge_weights[e] / g.edge_degrees[e]).sqrt();
        for &v in members {
            rows[v].push((e, edge_scale / g.node_degrees[v].sqrt()));
        }
    }
    Ok(NormalizedOperator {
        factor: CsrMatrix::from_rows(g.n_edges(), &rows),
        dense: OnceLock::new(),
    })
}

impl NormalizedOperator {
    pub fn n_nodes(&self) -> usize {
        self.factor.n_rows()
    }

    /// `Ĥ · m`. The operator is symmetric, so this also serves as `Ĥᵀ · m`.
    pub fn apply(&self, m: &Array2<f64>) -> Array2<f64> {
        let projected = self.factor.t_mul_dense(m);
        self.factor.mul_dense(&projected)
    }

    /// Dense `Ĥ`, computed pairwise per hyperedge so that `Ĥ[u][w]` and
    /// `Ĥ[w][u]` are the same float.
    pub fn dense(&self) -> &Array2<f64> {
        self.dense.get_or_init(|| {
            let n = self.n_nodes();
            let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.factor.n_cols()];
            for v in 0..n {
                for (e, s) in self.factor.row(v) {
                    columns[e].push((v, s));
                }
            }
            let mut out = Array2::zeros((n, n));
            for members in &columns {
                for (a, &(u, su)) in members.iter().enumerate() {
                    out[[u, u]] += su * su;
                    for &(w, sw) in &members[a + 1..] {
                        let p = su * sw;
                        out[[u, w]] += p;
                        out[[w, u]] += p;
                    }
                }
            }
            out
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fm(v: Array2<f64>) -> FeatureMatrix {
        FeatureMatrix::new(v).unwrap()
    }

    #[test]
    fn feature_matrix_rejects_nan_and_empty() {
        assert!(FeatureMatrix::new(array![[1.0, f64::NAN]]).is_err());
        assert!(FeatureMatrix::new(array![[f64::INFINITY]]).is_err());
        assert!(FeatureMatrix::new(Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn distances_one_dimensional() {
        let d = pairwise_distances(&fm(array![[0.0], [3.0]]));
        assert_eq!(d, array![[0.0, 3.0], [3.0, 0.0]]);
    }

    #[test]
    fn distances_identical_rows_are_zero() {
        let d = pairwise_distances(&fm(array![[1.5, -2.0], [1.5, -2.0], [1.5, -2.0]]));
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_and_dense_distance_paths_agree_bitwise() {
        // 5% density triggers the sparse path; padding a dense column forces
        // the dense path on the same coordinates.
        let mut x = Array2::<f64>::zeros((6, 40));
        for (i, j, v) in [(0, 3, 1.0), (1, 3, 0.25), (1, 17, -2.5), (2, 39, 7.0), (4, 0, 1e-3)] {
            x[[i, j]] = v;
        }
        let sparse = pairwise_distances(&fm(x.clone()));
        let mut dense_x = Array2::<f64>::ones((6, 41));
        dense_x.slice_mut(ndarray::s![.., ..40]).assign(&x);
        let dense = pairwise_distances(&fm(dense_x));
        assert_eq!(sparse, dense);
    }

    #[test]
    fn knn_example_one_dimensional() {
        let g = build_knn_hypergraph(&fm(array![[0.0], [1.0], [3.0]]), 1).unwrap();
        assert_eq!(g.edges(), &[vec![0, 1], vec![0, 1], vec![1, 2]]);
        assert!(g.edge_degrees().iter().all(|&d| d == 2.0));
    }

    #[test]
    fn knn_two_nodes_is_all_ones() {
        let g = build_knn_hypergraph(&fm(array![[0.0], [5.0]]), 1).unwrap();
        assert_eq!(g.incidence(), Array2::<f64>::ones((2, 2)));
    }

    #[test]
    fn knn_ties_prefer_smaller_index() {
        // Nodes 0 and 2 are both at distance 1 from node 1.
        let g = build_knn_hypergraph(&fm(array![[0.0], [1.0], [2.0]]), 1).unwrap();
        assert_eq!(g.edges()[1], vec![0, 1]);
    }

    #[test]
    fn knn_rejects_bad_k() {
        let x = fm(array![[0.0], [1.0]]);
        assert!(matches!(build_knn_hypergraph(&x, 2), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_knn_hypergraph(&x, 0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn epsilon_example_one_dimensional() {
        let g = build_epsilon_hypergraph(&fm(array![[0.0], [0.3], [1.0]]), 0.5).unwrap();
        assert_eq!(g.edges(), &[vec![0, 1], vec![0, 1], vec![2]]);
    }

    #[test]
    fn epsilon_extremes() {
        let x = fm(array![[0.0], [2.0], [5.0]]);
        let tight = build_epsilon_hypergraph(&x, 0.1).unwrap();
        assert_eq!(tight.incidence(), Array2::<f64>::eye(3));
        let loose = build_epsilon_hypergraph(&x, 10.0).unwrap();
        assert_eq!(loose.incidence(), Array2::<f64>::ones((3, 3)));
        assert!(build_epsilon_hypergraph(&x, 0.0).is_err());
        assert!(build_epsilon_hypergraph(&x, -1.0).is_err());
    }

    #[test]
    fn operator_single_node_is_identity() {
        let g = Hypergraph::from_edges(1, vec![vec![0]], None).unwrap();
        assert_eq!(normalized_operator(&g).unwrap().dense(), &array![[1.0]]);
    }

    #[test]
    fn operator_two_nodes_one_edge() {
        let g = Hypergraph::from_edges(2, vec![vec![0, 1]], None).unwrap();
        let op = normalized_operator(&g).unwrap();
        assert!(op.dense().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        assert!(op.apply(&array![[2.0], [4.0]]).iter().all(|&v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn operator_rejects_isolated_node() {
        let g = Hypergraph::from_edges(3, vec![vec![0, 1]], None).unwrap();
        assert!(matches!(
            normalized_operator(&g),
            Err(Error::DegenerateHypergraph(_))
        ));
        let empty = Hypergraph::from_edges(1, vec![vec![0], vec![]], None).unwrap();
        assert!(normalized_operator(&empty).is_err());
    }

    #[test]
    fn degrees_honour_weights() {
        let g = Hypergraph::from_edges(3, vec![vec![0, 1], vec![1, 2]], Some(vec![2.0, 0.5]))
            .unwrap();
        assert_eq!(g.node_degrees(), &array![2.0, 2.5, 0.5]);
        assert_eq!(g.edge_degrees(), &array![2.0, 2.0]);
        assert_eq!(g.nodes_by_degree(), vec![1, 0, 2]);
    }
}
