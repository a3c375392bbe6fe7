//! Seeded fixtures shared by the kernel benchmarks.

use ndarray::Array2;
use sagcn_core::graph::{normalized_adjacency, AdjacencyMatrix, FeatureMatrix};
use sagcn_core::ingest::{synth_cohort, SynthConfig};
use sagcn_core::nn::SparseRows;
use sagcn_core::{RngStream, SubjectGraph};

/// One synthetic subject at full atlas size.
pub fn subject(n_timepoints: usize) -> SubjectGraph {
    let cfg = SynthConfig {
        n_subjects: 4,
        n_timepoints,
        class_gap: 3.0,
        seed: 11,
    };
    synth_cohort(&cfg).expect("synthetic cohort").graphs.swap_remove(1)
}

pub fn random_vector(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed);
    (0..len).map(|_| rng.normal()).collect()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = RngStream::new(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.normal())
}

/// Renormalized adjacency of an Erdős–Rényi graph with mean degree `degree`.
pub fn random_graph(n: usize, degree: f64, seed: u64) -> AdjacencyMatrix {
    let mut rng = RngStream::new(seed);
    let p = (degree / n as f64).min(1.0);
    let mut t = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.uniform() < p {
                t.push((i, j, 1.0));
            }
        }
    }
    let adj = AdjacencyMatrix::from_triplets(n, false, t).expect("valid triplets");
    normalized_adjacency(&adj)
}

/// Rows shaped like pooled feature vectors: `kept` nodes of `n_nodes`, each
/// contributing `feat_dim` values.
pub fn pooled_rows(rows: usize, n_nodes: usize, kept: usize, feat_dim: usize, seed: u64) -> SparseRows {
    let mut rng = RngStream::new(seed);
    let mut dense = Array2::zeros((rows, n_nodes * feat_dim));
    for r in 0..rows {
        let mut nodes: Vec<usize> = (0..n_nodes).collect();
        rng.shuffle(&mut nodes);
        for &node in &nodes[..kept] {
            for k in 0..feat_dim {
                dense[[r, node * feat_dim + k]] = rng.normal();
            }
        }
    }
    SparseRows::from_dense(&dense)
}

pub fn features(rows: usize, cols: usize, seed: u64) -> FeatureMatrix {
    FeatureMatrix::new(random_matrix(rows, cols, seed)).expect("finite features")
}
