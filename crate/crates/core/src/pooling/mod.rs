//! Unsupervised self-attention graph pooling.
//!
//! Each layer scores nodes by how poorly their neighbourhood explains them
//! (row-wise L1 norm of `(I − D⁻¹A)H`), keeps the top `⌈r·n⌉`, and then
//! re-predicts edges among the survivors: for every kept node the cosine
//! similarity plus current edge weight to each kept node within two hops is
//! projected onto the simplex with sparsemax. Nothing here is trained.

mod io;
mod sparsemax;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

pub use io::{SparseFeatureFile, MAGIC as SPARSE_FILE_MAGIC, VERSION as SPARSE_FILE_VERSION};
pub use sparsemax::{sparsemax, threshold as sparsemax_threshold};

use crate::error::{Error, Result};
use crate::graph::{neighbor_mean, AdjacencyMatrix, FeatureMatrix};
use crate::ingest::SubjectGraph;

/// Edge-prediction candidates are nodes within this many hops.
pub const CANDIDATE_HOPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolingConfig {
    /// Fraction of nodes kept per layer, in `(0, 1]`.
    pub ratio: f64,
    /// Number of pooling layers; each applies `ratio` with its own ceiling.
    pub layers: usize,
}

impl PoolingConfig {
    pub fn new(ratio: f64, layers: usize) -> Result<Self> {
        let cfg = Self { ratio, layers };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Invalid(format!(
                "pooling ratio must be in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.layers == 0 {
            return Err(Error::Invalid("pooling needs at least one layer".into()));
        }
        Ok(())
    }
}

impl Default for PoolingConfig {
    fn default() -> Self {
        Self {
            ratio: 0.05,
            layers: 1,
        }
    }
}

/// Scores and selections of one pooling layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// Information score of every node entering the layer.
    pub scores: Vec<f64>,
    /// Kept nodes, in the layer's own numbering.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolingResult {
    /// Kept nodes in the original numbering, strictly increasing.
    pub selected: Vec<usize>,
    /// Re-predicted (directed) adjacency over `selected`.
    pub pooled_adj: AdjacencyMatrix,
    /// Feature rows of `selected`.
    pub pooled_feats: FeatureMatrix,
    pub layer_trace: Vec<LayerTrace>,
}

impl PoolingResult {
    /// Pooled edges in the original numbering.
    pub fn edges_original(&self) -> Vec<(usize, usize, f64)> {
        self.pooled_adj
            .entries()
            .map(|(a, b, w)| (self.selected[a], self.selected[b], w))
            .collect()
    }
}

/// Flattened node features with only the selected node blocks present.
///
/// Block `i` covers positions `i·feat_dim .. (i+1)·feat_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureVector {
    pub n_nodes: usize,
    pub feat_dim: usize,
    /// `(position, value)` with strictly increasing positions.
    pub entries: Vec<(usize, f64)>,
}

impl SparseFeatureVector {
    pub fn total_len(&self) -> usize {
        self.n_nodes * self.feat_dim
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.total_len()];
        for &(p, v) in &self.entries {
            out[p] = v;
        }
        out
    }

    /// Nodes with at least one stored entry, ascending.
    pub fn nodes(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for &(p, _) in &self.entries {
            let node = p / self.feat_dim;
            if out.last() != Some(&node) {
                out.push(node);
            }
        }
        out
    }
}

/// Number of nodes kept from `n` at ratio `r`: `⌈r·n⌉`, at least 1.
///
/// Products that land within floating-point noise of an integer are treated
/// as that integer, so `0.1 × 110` keeps 11 rather than 12.
pub fn pooled_size(n: usize, ratio: f64) -> usize {
    if n == 0 {
        return 0;
    }
    let x = ratio * n as f64;
    let nearest = x.round();
    let k = if (x - nearest).abs() <= 1e-9 * x.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (k as usize).clamp(1, n)
}

/// Per-node information score `‖(I − D⁻¹A)H‖₁` (row-wise).
pub fn information_score(adj: &AdjacencyMatrix, feats: &FeatureMatrix) -> Result<Vec<f64>> {
    if adj.n() != feats.n() {
        return Err(Error::Shape(format!(
            "adjacency has {} nodes but features have {} rows",
            adj.n(),
            feats.n()
        )));
    }
    let mean = neighbor_mean(adj, feats)?;
    Ok(feats
        .view()
        .axis_iter(Axis(0))
        .zip(mean.view().axis_iter(Axis(0)))
        .map(|(x, m)| x.iter().zip(m.iter()).map(|(a, b)| (a - b).abs()).sum())
        .collect())
}

/// Indices of the `⌈r·n⌉` largest scores, ties to the lower index, returned
/// in ascending order.
pub fn select_top_k(scores: &[f64], ratio: f64) -> Vec<usize> {
    let k = pooled_size(scores.len(), ratio);
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

fn cosine(feats: &FeatureMatrix, norms: &[f64], p: usize, q: usize) -> f64 {
    if norms[p] == 0.0 || norms[q] == 0.0 {
        return 0.0;
    }
    feats.row(p).dot(&feats.row(q)) / (norms[p] * norms[q])
}

fn row_norms(feats: &FeatureMatrix) -> Vec<f64> {
    feats
        .view()
        .axis_iter(Axis(0))
        .map(|r| r.dot(&r).sqrt())
        .collect()
}

/// Similarity between nodes `p` and `q`: cosine of their feature rows plus
/// the current edge weight `A(p, q)`. A zero feature row contributes a
/// cosine of 0.
pub fn edge_similarity(feats: &FeatureMatrix, adj: &AdjacencyMatrix, p: usize, q: usize) -> f64 {
    let norm = |i: usize| feats.row(i).dot(&feats.row(i)).sqrt();
    let (np, nq) = (norm(p), norm(q));
    let cos = if np == 0.0 || nq == 0.0 {
        0.0
    } else {
        feats.row(p).dot(&feats.row(q)) / (np * nq)
    };
    cos + adj.get(p, q)
}

/// Re-predicts edges among `selected` (ascending, in `adj` numbering).
///
/// Row `a` of the result is the sparsemax of the similarities from
/// `selected[a]` to every selected node within two hops of it, itself
/// included; the self weight is dropped afterwards. The result is directed
/// and indexed by position in `selected`.
pub fn predict_edges(
    feats: &FeatureMatrix,
    adj: &AdjacencyMatrix,
    selected: &[usize],
) -> Result<AdjacencyMatrix> {
    let n = adj.n();
    if feats.n() != n {
        return Err(Error::Shape(format!(
            "adjacency has {n} nodes but features have {} rows",
            feats.n()
        )));
    }
    if selected.is_empty() {
        return Err(Error::Invalid("edge prediction needs a selected node".into()));
    }
    if selected.windows(2).any(|w| w[0] >= w[1]) || selected[selected.len() - 1] >= n {
        return Err(Error::Invalid(
            "selected indices must be strictly increasing and in range".into(),
        ));
    }
    let norms = row_norms(feats);
    let mut reach = vec![false; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut triplets = Vec::new();
    let mut cand: Vec<usize> = Vec::with_capacity(selected.len());
    let mut z: Vec<f64> = Vec::with_capacity(selected.len());

    for (a, &p) in selected.iter().enumerate() {
        let mut mark = |v: usize, reach: &mut Vec<bool>| {
            if !reach[v] {
                reach[v] = true;
                touched.push(v);
            }
        };
        mark(p, &mut reach);
        for &(j, _) in adj.row(p) {
            mark(j, &mut reach);
            for &(k, _) in adj.row(j) {
                mark(k, &mut reach);
            }
        }

        cand.clear();
        z.clear();
        for (b, &q) in selected.iter().enumerate() {
            if reach[q] {
                cand.push(b);
                z.push(cosine(feats, &norms, p, q) + adj.get(p, q));
            }
        }
        let weights = sparsemax(&z);
        for (&b, &w) in cand.iter().zip(&weights) {
            if b != a && w > 0.0 {
                triplets.push((a, b, w));
            }
        }

        for v in touched.drain(..) {
            reach[v] = false;
        }
    }
    AdjacencyMatrix::from_triplets(selected.len(), true, triplets)
}

/// Runs `cfg.layers` rounds of score → select → re-predict edges.
pub fn pool(
    adj: &AdjacencyMatrix,
    feats: &FeatureMatrix,
    cfg: &PoolingConfig,
) -> Result<PoolingResult> {
    cfg.validate()?;
    if adj.n() != feats.n() {
        return Err(Error::Shape(format!(
            "adjacency has {} nodes but features have {} rows",
            adj.n(),
            feats.n()
        )));
    }
    if adj.n() == 0 {
        return Err(Error::Invalid("cannot pool an empty graph".into()));
    }
    let mut cur_adj = adj.clone();
    let mut cur_feats = feats.clone();
    let mut original: Vec<usize> = (0..adj.n()).collect();
    let mut trace = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        let scores = information_score(&cur_adj, &cur_feats)?;
        let selected = select_top_k(&scores, cfg.ratio);
        let next_adj = predict_edges(&cur_feats, &cur_adj, &selected)?;
        cur_feats = cur_feats.select_rows(&selected);
        original = selected.iter().map(|&i| original[i]).collect();
        cur_adj = next_adj;
        trace.push(LayerTrace { scores, selected });
    }
    Ok(PoolingResult {
        selected: original,
        pooled_adj: cur_adj,
        pooled_feats: cur_feats,
        layer_trace: trace,
    })
}

/// Pools one subject's brain graph.
pub fn pool_graph(g: &SubjectGraph, cfg: &PoolingConfig) -> Result<PoolingResult> {
    pool(&g.adj, &g.feats, cfg)
}

/// Lays the pooled features out at their original node slots.
pub fn sparse_flatten(
    res: &PoolingResult,
    n_nodes: usize,
    feat_dim: usize,
) -> Result<SparseFeatureVector> {
    if res.pooled_feats.d() != feat_dim {
        return Err(Error::Shape(format!(
            "pooled features have {} columns, expected {feat_dim}",
            res.pooled_feats.d()
        )));
    }
    let mut entries = Vec::with_capacity(res.selected.len() * feat_dim);
    for (slot, &node) in res.selected.iter().enumerate() {
        if node >= n_nodes {
            return Err(Error::Invalid(format!(
                "selected node {node} out of range for {n_nodes} nodes"
            )));
        }
        let row = res.pooled_feats.row(slot);
        entries.extend(row.iter().enumerate().map(|(d, &v)| (node * feat_dim + d, v)));
    }
    Ok(SparseFeatureVector {
        n_nodes,
        feat_dim,
        entries,
    })
}
