use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Undirected graph in CSR form. Column indices are sorted within each row
/// and unique; the structure is immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    n: usize,
    row_offsets: Arc<[usize]>,
    col_indices: Arc<[usize]>,
    values: Arc<[f64]>,
    edge_rows: Arc<[usize]>,
    normalized: bool,
    self_loops: bool,
}

impl SparseGraph {
    /// Builds a symmetric, deduplicated unit-weight graph from an edge list.
    /// Self-loops in the input are dropped; one per node is added when
    /// `add_self_loops` is set.
    pub fn build(edges: &[(usize, usize)], n: usize, add_self_loops: bool) -> Result<Self> {
        let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                let bad = if a >= n { a } else { b };
                return Err(Error::Input(format!(
                    "edge ({a}, {b}) has endpoint {bad} outside [0, {n})"
                )));
            }
            if a != b {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        if add_self_loops {
            for (i, row) in adj.iter_mut().enumerate() {
                row.insert(i);
            }
        }
        Ok(Self::from_sets(&adj, add_self_loops))
    }

    fn from_sets(adj: &[BTreeSet<usize>], self_loops: bool) -> Self {
        let n = adj.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut rows = Vec::new();
        offsets.push(0);
        for (i, row) in adj.iter().enumerate() {
            for &j in row {
                cols.push(j);
                rows.push(i);
            }
            offsets.push(cols.len());
        }
        let values = vec![1.0; cols.len()];
        Self {
            n,
            row_offsets: offsets.into(),
            col_indices: cols.into(),
            values: values.into(),
            edge_rows: rows.into(),
            normalized: false,
            self_loops,
        }
    }

    /// Ring `0-1-…-(n-1)-0`.
    pub fn ring(n: usize, add_self_loops: bool) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::build(&edges, n, add_self_loops)
    }

    pub fn complete(n: usize, add_self_loops: bool) -> Result<Self> {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push((i, j));
            }
        }
        Self::build(&edges, n, add_self_loops)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries, including self-loops.
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn has_self_loops(&self) -> bool {
        self.self_loops
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row index of each stored entry, in CSR order.
    pub fn edge_rows(&self) -> &[usize] {
        &self.edge_rows
    }

    pub(crate) fn row_offsets_arc(&self) -> Arc<[usize]> {
        Arc::clone(&self.row_offsets)
    }

    pub(crate) fn col_indices_arc(&self) -> Arc<[usize]> {
        Arc::clone(&self.col_indices)
    }

    pub(crate) fn edge_rows_arc(&self) -> Arc<[usize]> {
        Arc::clone(&self.edge_rows)
    }

    /// Sorted neighbor list of `i` (includes `i` itself when self-loops are stored).
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Number of distinct neighbors other than `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).iter().filter(|&&j| j != i).count()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match self.neighbors(i).binary_search(&j) {
            Ok(k) => self.row_values(i)[k],
            Err(_) => 0.0,
        }
    }

    /// Undirected non-loop edges as `(i, j)` with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Number of undirected non-loop edges.
    pub fn edge_count(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).sum::<usize>() / 2
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (&j, &v) in self.neighbors(i).iter().zip(self.row_values(i)) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// Same structure with unit weights and no self-loops.
    pub fn without_self_loops(&self) -> Self {
        let adj: Vec<BTreeSet<usize>> = (0..self.n)
            .map(|i| self.neighbors(i).iter().copied().filter(|&j| j != i).collect())
            .collect();
        Self::from_sets(&adj, false)
    }

    /// Same structure with unit weights and one self-loop per node.
    pub fn with_self_loops(&self) -> Self {
        let adj: Vec<BTreeSet<usize>> = (0..self.n)
            .map(|i| {
                let mut s: BTreeSet<usize> = self.neighbors(i).iter().copied().collect();
                s.insert(i);
                s
            })
            .collect();
        Self::from_sets(&adj, true)
    }

    /// `D^{-1/2} A D^{-1/2}` with `d` the row sums of the stored adjacency
    /// (which already carries its self-loops).
    pub fn normalize_sym(&self) -> Result<Self> {
        let deg: Vec<f64> = (0..self.n).map(|i| self.row_values(i).iter().sum()).collect();
        if let Some(node) = deg.iter().position(|&d| d <= 0.0) {
            return Err(Error::DegreeZero { node });
        }
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (&j, &v) in self.neighbors(i).iter().zip(self.row_values(i)) {
                values.push(v / (deg[i] * deg[j]).sqrt());
            }
        }
        Ok(Self {
            values: values.into(),
            normalized: true,
            ..self.clone()
        })
    }

    /// Adds `k` distinct symmetric non-loop edges drawn uniformly from the
    /// absent node pairs. Existing edges and the self-loop flag are kept; the
    /// result carries unit weights, so normalize again if needed.
    pub fn perturb_edges(&self, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Ok(self.clone());
        }
        let n = self.n;
        let total_pairs = n * n.saturating_sub(1) / 2;
        let absent = total_pairs - self.edge_count();
        if k > absent {
            return Err(Error::Capacity {
                requested: k,
                available: absent,
            });
        }
        // Enumerate absent pairs in lexicographic order; sample k indices.
        let mut pairs = Vec::with_capacity(absent);
        for i in 0..n {
            for j in i + 1..n {
                if !self.has_edge(i, j) {
                    pairs.push((i, j));
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut chosen: Vec<usize> = sample(&mut rng, absent, k).into_vec();
        chosen.sort_unstable();
        let mut adj: Vec<BTreeSet<usize>> = (0..n)
            .map(|i| self.neighbors(i).iter().copied().collect())
            .collect();
        for idx in chosen {
            let (a, b) = pairs[idx];
            adj[a].insert(b);
            adj[b].insert(a);
        }
        Ok(Self::from_sets(&adj, self.self_loops))
    }

    /// `self · x` using the stored values.
    pub fn apply(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(self.n, d);
        for i in 0..self.n {
            for e in self.row_offsets[i]..self.row_offsets[i + 1] {
                let w = self.values[e];
                let src = x.row(self.col_indices[e]);
                for (o, s) in out.row_mut(i).iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · x` using the stored values.
    pub fn apply_transpose(&self, x: &Matrix) -> Matrix {
        let d = x.cols();
        let mut out = Matrix::zeros(self.n, d);
        for i in 0..self.n {
            let src = x.row(i);
            for e in self.row_offsets[i]..self.row_offsets[i + 1] {
                let w = self.values[e];
                let j = self.col_indices[e];
                for (o, s) in out.row_mut(j).iter_mut().zip(src) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// Graph Laplacian `D − A` of the stored weights, ignoring self-loops.
    pub fn laplacian(&self) -> Matrix {
        let mut l = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (&j, &v) in self.neighbors(i).iter().zip(self.row_values(i)) {
                if i != j {
                    l.set(i, j, l.get(i, j) - v);
                    l.set(i, i, l.get(i, i) + v);
                }
            }
        }
        l
    }

    /// Induced subgraph on `nodes` (relabelled by position in `nodes`).
    pub fn induced(&self, nodes: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.n];
        for (k, &v) in nodes.iter().enumerate() {
            index[v] = k;
        }
        let adj: Vec<BTreeSet<usize>> = nodes
            .iter()
            .map(|&v| {
                self.neighbors(v)
                    .iter()
                    .filter_map(|&u| (index[u] != usize::MAX).then_some(index[u]))
                    .collect()
            })
            .collect();
        Self::from_sets(&adj, self.self_loops)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_edge_with_self_loops() {
        let g = SparseGraph::build(&[(0, 1)], 2, true).unwrap();
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(1), &[0, 1]);
    }

    #[test]
    fn duplicates_collapse() {
        let g = SparseGraph::build(&[(0, 1), (1, 0), (0, 1)], 2, false).unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.edge_list(), vec![(0, 1)]);
    }

    #[test]
    fn ring_degrees() {
        let g = SparseGraph::ring(5, false).unwrap();
        assert!((0..5).all(|i| g.degree(i) == 2));
    }

    #[test]
    fn endpoint_out_of_range() {
        let err = SparseGraph::build(&[(0, 7)], 3, false).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn normalize_k2_and_k3() {
        let k2 = SparseGraph::complete(2, true).unwrap().normalize_sym().unwrap();
        assert!(k2.values().iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let k3 = SparseGraph::complete(3, true).unwrap().normalize_sym().unwrap();
        assert!(k3.values().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn normalize_star() {
        // Center 0 with leaves 1..=3: with self-loops d_0 = 4, d_leaf = 2.
        let g = SparseGraph::build(&[(0, 1), (0, 2), (0, 3)], 4, true)
            .unwrap()
            .normalize_sym()
            .unwrap();
        assert!((g.weight(0, 1) - 1.0 / 8f64.sqrt()).abs() < 1e-15);
        assert!((g.weight(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn normalized_row_sums_can_exceed_one() {
        // Star center: 1/4 + 3/sqrt(8). Only the spectrum is bounded by one.
        let g = SparseGraph::build(&[(0, 1), (0, 2), (0, 3)], 4, true)
            .unwrap()
            .normalize_sym()
            .unwrap();
        let s: f64 = g.row_values(0).iter().sum();
        assert!((s - (0.25 + 3.0 / 8f64.sqrt())).abs() < 1e-14);
        assert!(s > 1.0);
    }

    #[test]
    fn normalize_needs_degree() {
        let g = SparseGraph::build(&[(0, 1)], 3, false).unwrap();
        assert!(matches!(g.normalize_sym(), Err(Error::DegreeZero { node: 2 })));
    }

    #[test]
    fn perturb_noop_and_capacity() {
        let ring = SparseGraph::ring(6, true).unwrap();
        assert_eq!(ring.perturb_edges(0, 1).unwrap(), ring);
        let k2 = SparseGraph::complete(2, false).unwrap();
        assert!(matches!(
            k2.perturb_edges(1, 0),
            Err(Error::Capacity { requested: 1, available: 0 })
        ));
    }

    #[test]
    fn perturb_is_seeded() {
        let ring = SparseGraph::ring(10, false).unwrap();
        let a = ring.perturb_edges(3, 42).unwrap();
        let b = ring.perturb_edges(3, 42).unwrap();
        assert_eq!(a.edge_count(), 13);
        assert_eq!(a, b);
        for (i, j) in ring.edge_list() {
            assert!(a.has_edge(i, j));
        }
    }

    #[test]
    fn perturb_never_duplicates_or_loops() {
        let base = SparseGraph::ring(12, false).unwrap();
        for trial in 0..1000u64 {
            let k = (trial % 20) as usize;
            let g = base.perturb_edges(k, trial).unwrap();
            assert_eq!(g.edge_count(), 12 + k);
            for i in 0..g.n() {
                let nb = g.neighbors(i);
                assert!(!nb.contains(&i));
                assert!(nb.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    fn arb_edges() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
        (2usize..12).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..40)))
    }

    proptest! {
        #[test]
        fn normalized_is_symmetric_with_bounded_rows((n, edges) in arb_edges()) {
            let g = SparseGraph::build(&edges, n, true).unwrap().normalize_sym().unwrap();
            let d = g.to_dense();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                }
                let s: f64 = d.row(i).iter().sum();
                prop_assert!(s > 0.0, "row sum {}", s);
            }
            let m = nalgebra::DMatrix::from_row_slice(n, n, d.data());
            let eig = m.symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&l| l <= 1.0 + 1e-12 && l >= -1.0 - 1e-12));
        }
    }
}
