#![allow(dead_code)]

use sagcn_core::eval::{pool_cohort, PipelineConfig, PooledCohort};
use sagcn_core::ingest::{synth_cohort, SynthConfig};
use sagcn_core::nn::EarlyStop;
use sagcn_core::Result;

/// Synthesizes and pools a cohort; returns it with its subject ids.
pub fn pooled_synth(n_subjects: usize, n_timepoints: usize, gap: f64, seed: u64) -> (PooledCohort, Vec<String>) {
    let synth = synth_cohort(&SynthConfig {
        n_subjects,
        n_timepoints,
        class_gap: gap,
        seed,
    })
    .expect("synthetic cohort");
    let cfg = PipelineConfig::default().pooling;
    let vectors = pool_cohort(&synth.graphs, &cfg)
        .into_iter()
        .map(|r| r.map(|(_, v)| v))
        .collect::<Result<Vec<_>>>()
        .expect("pooling");
    let ids = synth.phenotypes.iter().map(|p| p.subject_id.clone()).collect();
    let labels = synth.labels();
    (
        PooledCohort::new(vectors, labels, synth.phenotypes).expect("cohort"),
        ids,
    )
}

/// The end-to-end configuration fixed before any tuning: 10 outer folds,
/// one repeat, 3 inner folds for model selection.
pub fn reference_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.folds.outer_k = 10;
    cfg.folds.outer_repeats = 1;
    cfg.folds.inner_k = 3;
    cfg.folds.inner_repeats = 1;
    cfg.folds.seed = 0;
    cfg.mlp.train.lr = 1e-3;
    cfg.mlp.train.epochs = 10;
    cfg.mlp.train.batch_size = 32;
    cfg.mlp.train.early_stop = EarlyStop::BestValidation { val_fraction: 0.1 };
    cfg.gcn.train.lr = 1e-2;
    cfg.gcn.train.epochs = 100;
    cfg.gcn.train.clusters = Some(1);
    cfg
}

/// A cheaper variant for tests that only need the machinery to run.
pub fn quick_config() -> PipelineConfig {
    let mut cfg = reference_config();
    cfg.folds.outer_k = 3;
    cfg.folds.inner_k = 2;
    cfg.mlp.train.epochs = 2;
    cfg.gcn.train.epochs = 5;
    cfg.lr.epochs = 20;
    cfg
}
