//! Sparse adjacency, dense feature matrices and the graph operators shared by
//! pooling and the GCN: weighted degree, the renormalised adjacency
//! `D̃^{-1/2}(A+I)D̃^{-1/2}`, and degree-normalised neighbour aggregation.
//!
//! Adjacency is stored row-wise with columns sorted ascending, so every
//! iteration (and hence every floating-point reduction) happens in `(i, j)`
//! order.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Weighted adjacency over `n` nodes.
///
/// Only strictly positive weights are stored. When the matrix is undirected
/// every stored `(i, j)` has a mirror `(j, i)` with the same weight.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    directed: bool,
    rows: Vec<Vec<(usize, f64)>>,
}

impl AdjacencyMatrix {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize, directed: bool) -> Self {
        Self {
            n,
            directed,
            rows: vec![Vec::new(); n],
        }
    }

    /// Builds an adjacency from `(i, j, w)` triplets.
    ///
    /// For undirected graphs each triplet sets both `(i, j)` and `(j, i)`.
    /// A later triplet for the same position overwrites an earlier one, and a
    /// zero weight removes the entry.
    pub fn from_triplets<I>(n: usize, directed: bool, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut map: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in triplets {
            if i >= n || j >= n {
                return Err(Error::Invalid(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Invalid(format!(
                    "edge ({i}, {j}) has weight {w}; weights must be finite and >= 0"
                )));
            }
            map.insert((i, j), w);
            if !directed {
                map.insert((j, i), w);
            }
        }
        let mut rows = vec![Vec::new(); n];
        for ((i, j), w) in map {
            if w > 0.0 {
                rows[i].push((j, w));
            }
        }
        Ok(Self { n, directed, rows })
    }

    /// Builds from a dense square matrix, keeping positive entries.
    pub fn from_dense(dense: ArrayView2<f64>, directed: bool) -> Result<Self> {
        if dense.nrows() != dense.ncols() {
            return Err(Error::Shape(format!(
                "adjacency must be square, got {}x{}",
                dense.nrows(),
                dense.ncols()
            )));
        }
        let n = dense.nrows();
        let mut rows = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                let w = dense[[i, j]];
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::Invalid(format!("entry ({i}, {j}) = {w}")));
                }
                if !directed && w != dense[[j, i]] {
                    return Err(Error::Invalid(format!(
                        "undirected adjacency is not symmetric at ({i}, {j})"
                    )));
                }
                if w > 0.0 {
                    rows[i].push((j, w));
                }
            }
        }
        Ok(Self { n, directed, rows })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Stored entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.rows[i];
        match row.binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => row[pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.get(i, j) > 0.0
    }

    /// Number of stored `(i, j)` entries.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Number of edges: unordered pairs (self-loops counted once) for
    /// undirected graphs, stored entries for directed ones.
    pub fn edge_count(&self) -> usize {
        if self.directed {
            self.nnz()
        } else {
            self.entries().filter(|&(i, j, _)| i <= j).count()
        }
    }

    /// All entries in `(i, j)` order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    /// Subgraph induced by `nodes`, renumbered `0..nodes.len()` in the given
    /// order. Edges leaving the node set are dropped.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Self> {
        let mut local = vec![usize::MAX; self.n];
        for (k, &v) in nodes.iter().enumerate() {
            if v >= self.n {
                return Err(Error::Invalid(format!(
                    "node {v} out of range for {} nodes",
                    self.n
                )));
            }
            if local[v] != usize::MAX {
                return Err(Error::Invalid(format!("node {v} listed twice")));
            }
            local[v] = k;
        }
        let mut rows = Vec::with_capacity(nodes.len());
        for &v in nodes {
            let mut row: Vec<(usize, f64)> = self.rows[v]
                .iter()
                .filter(|&&(j, _)| local[j] != usize::MAX)
                .map(|&(j, w)| (local[j], w))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            rows.push(row);
        }
        Ok(Self {
            n: nodes.len(),
            directed: self.directed,
            rows,
        })
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (i, j, w) in self.entries() {
            out[[i, j]] = w;
        }
        out
    }

    /// `self · h` for a dense `h` with `n` rows.
    pub fn matmul(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        if h.nrows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency has {} nodes but operand has {} rows",
                self.n,
                h.nrows()
            )));
        }
        let mut out = Array2::zeros((self.n, h.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut acc = out.row_mut(i);
            for &(j, w) in row {
                acc.scaled_add(w, &h.row(j));
            }
        }
        Ok(out)
    }

    /// `selfᵀ · h`, used when back-propagating through [`Self::matmul`].
    pub fn transpose_matmul(&self, h: ArrayView2<f64>) -> Result<Array2<f64>> {
        if h.nrows() != self.n {
            return Err(Error::Shape(format!(
                "adjacency has {} nodes but operand has {} rows",
                self.n,
                h.nrows()
            )));
        }
        let mut out = Array2::zeros((self.n, h.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let src = h.row(i);
            for &(j, w) in row {
                out.row_mut(j).scaled_add(w, &src);
            }
        }
        Ok(out)
    }
}

/// Dense `n × d` matrix of finite reals (node or subject features).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Array2<f64>);

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Invalid(format!(
                "feature ({i}, {j}) is not finite: {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        Self(Array2::zeros((n, d)))
    }

    /// Row count.
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Column count.
    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self(self.0.select(Axis(0), rows))
    }
}

/// Diagonal of the weighted degree matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeMatrix {
    pub diagonal: Vec<f64>,
}

/// Weighted out-degree of every node (row sums).
pub fn degree_matrix(adj: &AdjacencyMatrix) -> DegreeMatrix {
    DegreeMatrix {
        diagonal: adj
            .rows
            .iter()
            .map(|row| row.iter().map(|&(_, w)| w).sum())
            .collect(),
    }
}

/// `D̃^{-1/2} Ã D̃^{-1/2}` with `Ã = A + I` and `D̃` the degree matrix of `Ã`.
///
/// Expects an undirected adjacency; the result is symmetric with entries in
/// `[0, 1]`. Every node gets a self-loop, so degrees are strictly positive.
pub fn normalized_adjacency(adj: &AdjacencyMatrix) -> AdjacencyMatrix {
    let n = adj.n;
    let mut tilde: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for (i, row) in adj.rows.iter().enumerate() {
        let mut r = Vec::with_capacity(row.len() + 1);
        let mut has_self = false;
        for &(j, w) in row {
            if j == i {
                r.push((j, w + 1.0));
                has_self = true;
            } else {
                r.push((j, w));
            }
        }
        if !has_self {
            let pos = r.partition_point(|&(j, _)| j < i);
            r.insert(pos, (i, 1.0));
        }
        tilde.push(r);
    }
    let deg: Vec<f64> = tilde
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum())
        .collect();
    let rows = tilde
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .map(|(j, w)| (j, w / (deg[i] * deg[j]).sqrt()))
                .collect()
        })
        .collect();
    AdjacencyMatrix {
        n,
        directed: adj.directed,
        rows,
    }
}

/// `D⁻¹ A H`: degree-weighted mean of each node's neighbour features.
///
/// Rows with zero degree produce the zero vector.
pub fn neighbor_mean(adj: &AdjacencyMatrix, feats: &FeatureMatrix) -> Result<FeatureMatrix> {
    let mut out = adj.matmul(feats.view())?;
    let deg = degree_matrix(adj);
    for (mut row, &d) in out.axis_iter_mut(Axis(0)).zip(&deg.diagonal) {
        if d > 0.0 {
            row.mapv_inplace(|v| v / d);
        } else {
            row.fill(0.0);
        }
    }
    Ok(FeatureMatrix(out))
}
