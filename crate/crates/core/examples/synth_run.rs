//! Runs every head on a synthetic cohort and prints per-stage accuracy.
//!
//! `cargo run --release -p sagcn-core --example synth_run -- [gap] [subjects]`

use std::time::Instant;

use sagcn_core::eval::{pool_cohort, run_pipeline, PipelineConfig, PooledCohort};
use sagcn_core::ingest::{synth_cohort, SynthConfig};

fn main() -> sagcn_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let gap: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3.0);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let started = Instant::now();
    let cohort = synth_cohort(&SynthConfig {
        n_subjects: n,
        class_gap: gap,
        ..SynthConfig::default()
    })?;

    // one outer repeat and a light inner search keep this under a minute
    let mut cfg = PipelineConfig::default();
    cfg.folds.outer_repeats = 1;
    cfg.folds.inner_k = 3;
    cfg.folds.inner_repeats = 1;
    cfg.mlp.train.lr = 1e-3;
    cfg.mlp.train.epochs = 10;
    cfg.gcn.train.lr = 1e-2;
    cfg.gcn.train.epochs = 100;

    let vectors = pool_cohort(&cohort.graphs, &cfg.pooling)
        .into_iter()
        .map(|r| r.map(|(_, v)| v))
        .collect::<sagcn_core::Result<Vec<_>>>()?;
    let ids: Vec<String> = cohort.phenotypes.iter().map(|p| p.subject_id.clone()).collect();
    let pooled = PooledCohort::new(vectors, cohort.labels(), cohort.phenotypes)?;
    let out = run_pipeline(&pooled, &ids, &cfg, 1, None)?;
    for s in &out.report.stages {
        let acc = s.over_folds.accuracy.map_or(f64::NAN, |a| a.mean);
        let auc = s.over_folds.auc.map_or(f64::NAN, |a| a.mean);
        println!("{:<4} accuracy {acc:6.2}%  auc {auc:.3}", s.stage);
    }
    println!("{n} subjects, gap {gap}, {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
