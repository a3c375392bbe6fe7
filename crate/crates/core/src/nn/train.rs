//! Training loops: fixed epoch budget, optionally keeping the parameters from
//! the epoch with the best validation accuracy.

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::cluster::{cluster_gcn_step, full_batch_step, BalancedRandomPartitioner, ClusterBatch, Partitioner, StepOutcome};
use super::gcn::{Gcn, GcnConfig};
use super::mlp::{mlp_backward, mlp_forward, softmax_bce, Mlp, MlpConfig};
use super::sparse::SparseRows;
use crate::error::{Error, Result};
use crate::graph::normalized_adjacency;
use crate::population::PopulationGraph;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EarlyStop {
    /// Return the parameters after the last epoch.
    FixedBudget,
    /// Return the parameters from the epoch with the highest validation
    /// accuracy (first one on ties). The GCN holds out `val_fraction` of its
    /// training nodes; the MLP uses the validation split it is given.
    BestValidation { val_fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// MLP minibatch size; 0 means one full-split step per epoch.
    pub batch_size: usize,
    /// GCN cluster count; `None` trains full-batch on the whole graph.
    pub clusters: Option<usize>,
    pub early_stop: EarlyStop,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            epochs: 200,
            batch_size: 32,
            clusters: Some(1),
            early_stop: EarlyStop::BestValidation { val_fraction: 0.1 },
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.clusters == Some(0) {
            return Err(Error::Invalid("cluster count must be >= 1".into()));
        }
        if let EarlyStop::BestValidation { val_fraction } = self.early_stop {
            if !(0.0..1.0).contains(&val_fraction) {
                return Err(Error::Invalid(format!(
                    "validation fraction must be in [0, 1), got {val_fraction}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub skipped_batches: usize,
}

/// Hard labels: 1 iff `p > 0.5`.
pub fn threshold_labels(proba: &[f64]) -> Vec<u8> {
    proba.iter().map(|&p| u8::from(p > 0.5)).collect()
}

pub fn accuracy(pred: &[u8], truth: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

struct Best<M> {
    model: Option<M>,
    epoch: usize,
    acc: Option<f64>,
}

impl<M: Clone> Best<M> {
    fn offer(&mut self, epoch: usize, acc: f64, model: &M) {
        if self.acc.is_none_or(|b| acc > b) {
            self.acc = Some(acc);
            self.epoch = epoch;
            self.model = Some(model.clone());
        }
    }
}

pub fn train_mlp(
    cfg: &MlpConfig,
    tc: &TrainConfig,
    x: &SparseRows,
    y: &[u8],
    val: Option<(&SparseRows, &[u8])>,
) -> Result<TrainOutcome<Mlp>> {
    tc.validate()?;
    if x.nrows() != y.len() || x.nrows() == 0 {
        return Err(Error::Shape(format!(
            "{} training rows but {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let adam = tc.adam();
    let mut model = Mlp::new(cfg.clone())?;
    let root = RngStream::new(tc.seed);
    let mut order_rng = root.derive("batch-order", 0);
    let mut drop_rng = root.derive("dropout", 0);
    let n = x.nrows();
    let bs = if tc.batch_size == 0 { n } else { tc.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let track = matches!(tc.early_stop, EarlyStop::BestValidation { .. }) && val.is_some();
    let mut best = Best {
        model: None,
        epoch: tc.epochs,
        acc: None,
    };
    let mut losses = Vec::with_capacity(tc.epochs);
    for epoch in 1..=tc.epochs {
        if bs < n {
            order_rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for chunk in order.chunks(bs) {
            let xb = x.select(chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| y[i]).collect();
            let out = mlp_forward(&model, &xb, Some(&mut drop_rng))?;
            let (loss, dl) = softmax_bce(&out.logits, &yb)?;
            let grads = mlp_backward(&model, &out.cache, &dl, false)?;
            model.apply_gradients(&grads.params, &adam)?;
            total += loss * chunk.len() as f64;
        }
        losses.push(total / n as f64);
        if track {
            let (xv, yv) = val.expect("checked");
            let acc = accuracy(&threshold_labels(&model.predict_proba(xv)?), yv);
            best.offer(epoch, acc, &model);
        }
    }
    Ok(TrainOutcome {
        model: best.model.unwrap_or(model),
        best_epoch: best.epoch,
        best_val_accuracy: best.acc,
        losses,
        skipped_batches: 0,
    })
}

/// Trains a GCN on the train mask of `pg` with the default partitioner.
pub fn train_gcn(cfg: &GcnConfig, tc: &TrainConfig, pg: &PopulationGraph) -> Result<TrainOutcome<Gcn>> {
    train_gcn_with(cfg, tc, pg, &BalancedRandomPartitioner)
}

pub fn train_gcn_with(
    cfg: &GcnConfig,
    tc: &TrainConfig,
    pg: &PopulationGraph,
    partitioner: &dyn Partitioner,
) -> Result<TrainOutcome<Gcn>> {
    tc.validate()?;
    if pg.train.is_empty() {
        return Err(Error::Invalid("population graph has no training nodes".into()));
    }
    let adam = tc.adam();
    let root = RngStream::new(tc.seed);
    let mut order_rng = root.derive("batch-order", 0);
    let mut drop_rng = root.derive("dropout", 0);

    let mut fit = pg.train.clone();
    let mut val = Vec::new();
    if let EarlyStop::BestValidation { val_fraction } = tc.early_stop {
        let n_val = ((val_fraction * fit.len() as f64).ceil() as usize).min(fit.len() - 1);
        if n_val > 0 {
            root.derive("validation", 0).shuffle(&mut fit);
            val = fit.split_off(fit.len() - n_val);
            fit.sort_unstable();
            val.sort_unstable();
        }
    }
    let mut loss_mask = vec![false; pg.n()];
    for &i in &fit {
        loss_mask[i] = true;
    }
    let val_labels: Vec<u8> = val.iter().map(|&i| pg.labels[i]).collect();

    let a_full = normalized_adjacency(&pg.adjacency);
    let batches = match tc.clusters {
        None => Vec::new(),
        Some(b) => {
            let mut prng = root.derive("partition", 0);
            partitioner
                .partition(&pg.adjacency, b, &mut prng)?
                .iter()
                .map(|nodes| ClusterBatch::new(pg, nodes))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let mut model = Gcn::new(cfg.clone())?;
    let mut best = Best {
        model: None,
        epoch: tc.epochs,
        acc: None,
    };
    let mut losses = Vec::with_capacity(tc.epochs);
    let mut skipped = 0;
    let mut order: Vec<usize> = (0..batches.len()).collect();
    for epoch in 1..=tc.epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut record = |o: StepOutcome| match o {
            StepOutcome::Updated { loss, n_loss_nodes } => {
                total += loss * n_loss_nodes as f64;
                count += n_loss_nodes;
            }
            StepOutcome::Skipped => skipped += 1,
        };
        if batches.is_empty() {
            record(full_batch_step(&mut model, &a_full, pg, &loss_mask, &adam, &mut drop_rng)?);
        } else {
            order_rng.shuffle(&mut order);
            for &b in &order {
                record(cluster_gcn_step(&mut model, pg, &batches[b], &loss_mask, &adam, &mut drop_rng)?);
            }
        }
        losses.push(if count > 0 { total / count as f64 } else { f64::NAN });
        if !val.is_empty() {
            let p = model.predict_proba(&a_full, pg.features.view())?;
            let pv: Vec<f64> = val.iter().map(|&i| p[i]).collect();
            best.offer(epoch, accuracy(&threshold_labels(&pv), &val_labels), &model);
        }
    }
    Ok(TrainOutcome {
        model: best.model.unwrap_or(model),
        best_epoch: best.epoch,
        best_val_accuracy: best.acc,
        losses,
        skipped_batches: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{AdjacencyMatrix, FeatureMatrix};
    use ndarray::Array2;

    fn blobs(n: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<u8>) {
        let mut rng = RngStream::new(seed);
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let x = Array2::from_shape_fn((n, d), |(i, j)| {
            let shift = if j < 2 { 2.0 * f64::from(y[i]) - 1.0 } else { 0.0 };
            1.5 * shift + 0.5 * rng.normal()
        });
        (x, y)
    }

    #[test]
    fn threshold_is_strict() {
        assert_eq!(threshold_labels(&[0.5, 0.5000001, 0.2]), vec![0, 1, 0]);
    }

    #[test]
    fn mlp_learns_separable_blobs() {
        let (x, y) = blobs(40, 6, 1);
        let xs = SparseRows::from_dense(&x);
        let cfg = MlpConfig {
            hidden: vec![16, 8],
            ..MlpConfig::new(6)
        };
        let tc = TrainConfig {
            lr: 0.01,
            epochs: 40,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = train_mlp(&cfg, &tc, &xs, &y, Some((&xs, &y))).unwrap();
        assert!(out.best_val_accuracy.unwrap() >= 0.95);
        assert!(out.losses.last().unwrap() < &out.losses[0]);
        let again = train_mlp(&cfg, &tc, &xs, &y, Some((&xs, &y))).unwrap();
        assert_eq!(out.model.params, again.model.params);
    }

    #[test]
    fn gcn_learns_on_disconnected_graph() {
        let (x, y) = blobs(30, 4, 2);
        let adj = AdjacencyMatrix::empty(30, false);
        let pg = PopulationGraph::new(
            adj,
            FeatureMatrix::new(x).unwrap(),
            y,
            (0..20).collect(),
            (20..30).collect(),
        )
        .unwrap();
        let tc = TrainConfig {
            lr: 0.02,
            epochs: 60,
            clusters: Some(3),
            ..TrainConfig::default()
        };
        let cfg = GcnConfig {
            hidden: vec![8, 8],
            ..GcnConfig::new(4)
        };
        let out = train_gcn(&cfg, &tc, &pg).unwrap();
        let p = out.model.predict_proba(&normalized_adjacency(&pg.adjacency), pg.features.view()).unwrap();
        let test_pred: Vec<u8> = threshold_labels(&p[20..]);
        assert!(accuracy(&test_pred, &pg.labels[20..]) >= 0.9);
    }

    #[test]
    fn rejects_bad_config() {
        let tc = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
        let tc = TrainConfig {
            clusters: Some(0),
            ..TrainConfig::default()
        };
        assert!(tc.validate().is_err());
    }
}
