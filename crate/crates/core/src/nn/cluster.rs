//! Cluster-GCN: train on node-induced subgraphs of the population graph.

use ndarray::Array2;

use super::adam::AdamConfig;
use super::gcn::{gcn_backward, gcn_forward, masked_bce, Gcn};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, AdjacencyMatrix};
use crate::population::PopulationGraph;
use crate::rng::RngStream;

/// Splits the nodes of a graph into disjoint clusters covering every node.
pub trait Partitioner {
    fn partition(
        &self,
        adj: &AdjacencyMatrix,
        n_clusters: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Vec<usize>>>;
}

/// Shuffles the nodes and deals them into clusters whose sizes differ by at
/// most one. Ignores the edges.
#[derive(Debug, Clone, Copy, Default)]
pub struct BalancedRandomPartitioner;

impl Partitioner for BalancedRandomPartitioner {
    fn partition(
        &self,
        adj: &AdjacencyMatrix,
        n_clusters: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<Vec<usize>>> {
        let n = adj.n();
        if n_clusters == 0 || n_clusters > n.max(1) {
            return Err(Error::Invalid(format!(
                "cannot split {n} nodes into {n_clusters} clusters"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        if n_clusters > 1 {
            rng.shuffle(&mut order);
        }
        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
        for (k, node) in order.into_iter().enumerate() {
            clusters[k % n_clusters].push(node);
        }
        for c in &mut clusters {
            c.sort_unstable();
        }
        Ok(clusters)
    }
}

/// Partitions `pg` with [`BalancedRandomPartitioner`] seeded by `seed`.
pub fn cluster_partition(pg: &PopulationGraph, n_clusters: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut rng = RngStream::new(seed).derive("partition", 0);
    BalancedRandomPartitioner.partition(&pg.adjacency, n_clusters, &mut rng)
}

/// A cluster with its renormalised induced adjacency and features.
#[derive(Debug, Clone)]
pub struct ClusterBatch {
    pub nodes: Vec<usize>,
    pub a_hat: AdjacencyMatrix,
    pub features: Array2<f64>,
}

impl ClusterBatch {
    pub fn new(pg: &PopulationGraph, nodes: &[usize]) -> Result<Self> {
        let sub = pg.adjacency.induced_subgraph(nodes)?;
        Ok(Self {
            nodes: nodes.to_vec(),
            a_hat: normalized_adjacency(&sub),
            features: pg.features.select_rows(nodes).into_inner(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// Parameters moved; mean loss over the batch's loss nodes.
    Updated { loss: f64, n_loss_nodes: usize },
    /// The batch had no loss nodes; nothing changed.
    Skipped,
}

/// One Adam step on a cluster. Loss is the mean BCE over batch nodes with
/// `loss_mask` set (indexed by global node id).
pub fn cluster_gcn_step(
    model: &mut Gcn,
    pg: &PopulationGraph,
    batch: &ClusterBatch,
    loss_mask: &[bool],
    adam: &AdamConfig,
    dropout_rng: &mut RngStream,
) -> Result<StepOutcome> {
    let labels: Vec<u8> = batch.nodes.iter().map(|&i| pg.labels[i]).collect();
    let mask: Vec<bool> = batch.nodes.iter().map(|&i| loss_mask[i]).collect();
    step_on(model, &batch.a_hat, &batch.features, &labels, &mask, adam, dropout_rng)
}

/// One Adam step on the whole graph.
pub fn full_batch_step(
    model: &mut Gcn,
    a_hat: &AdjacencyMatrix,
    pg: &PopulationGraph,
    loss_mask: &[bool],
    adam: &AdamConfig,
    dropout_rng: &mut RngStream,
) -> Result<StepOutcome> {
    step_on(model, a_hat, pg.features.as_array(), &pg.labels, loss_mask, adam, dropout_rng)
}

fn step_on(
    model: &mut Gcn,
    a_hat: &AdjacencyMatrix,
    x: &Array2<f64>,
    labels: &[u8],
    mask: &[bool],
    adam: &AdamConfig,
    dropout_rng: &mut RngStream,
) -> Result<StepOutcome> {
    if mask.iter().all(|&m| !m) {
        return Ok(StepOutcome::Skipped);
    }
    let out = gcn_forward(model, a_hat, x.view(), Some(dropout_rng))?;
    let n_loss_nodes = mask.iter().filter(|&&m| m).count();
    let (loss, dl) = masked_bce(&out.logits, labels, mask)?.expect("mask checked non-empty");
    let grads = gcn_backward(model, a_hat, &out.cache, &dl)?;
    model.apply_gradients(&grads.params, adam)?;
    Ok(StepOutcome::Updated { loss, n_loss_nodes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_cover() {
        let adj = AdjacencyMatrix::empty(23, false);
        let mut rng = RngStream::new(4);
        let parts = BalancedRandomPartitioner.partition(&adj, 5, &mut rng).unwrap();
        let mut all: Vec<usize> = parts.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert!(BalancedRandomPartitioner.partition(&adj, 0, &mut rng).is_err());
        assert!(BalancedRandomPartitioner.partition(&adj, 24, &mut rng).is_err());
    }

    #[test]
    fn single_cluster_is_identity() {
        let adj = AdjacencyMatrix::empty(6, false);
        let mut rng = RngStream::new(4);
        let parts = BalancedRandomPartitioner.partition(&adj, 1, &mut rng).unwrap();
        assert_eq!(parts, vec![(0..6).collect::<Vec<_>>()]);
    }
}
