//! Nested cross-validation over a pooled cohort.
//!
//! Per outer fold: train one MLP per inner split, keep the one with the best
//! validation accuracy, embed every subject with it, then fit a logistic
//! regression head and a population-graph GCN on the outer training subjects
//! and score all three on the held-out subjects. The GCN sees every subject
//! as a node; only training nodes enter its loss.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::{FoldPlan, OuterFold};
use super::metrics::{FoldMetrics, MetricsReport, Prediction, StageReport, METRICS_SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::graph::{normalized_adjacency, AdjacencyMatrix, FeatureMatrix};
use crate::ingest::SubjectGraph;
use crate::nn::{
    train_gcn, train_logreg, train_mlp, AdamConfig, Gcn, GcnConfig, LogReg, Mlp, MlpConfig,
    SparseRows, Standardizer, TrainConfig,
};
use crate::pooling::{pool_graph, sparse_flatten, PoolingConfig, PoolingResult, SparseFeatureVector};
use crate::population::{build_population_graph, PhenotypeRecord, PhenotypeSchema, PopulationGraph, DEFAULT_THRESHOLD};
use crate::rng::{derive_seed, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Mlp,
    Lr,
    Gcn,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Mlp, Stage::Lr, Stage::Gcn];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mlp => "mlp",
            Stage::Lr => "lr",
            Stage::Gcn => "gcn",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlp" => Ok(Stage::Mlp),
            "lr" | "logreg" => Ok(Stage::Lr),
            "gcn" => Ok(Stage::Gcn),
            other => Err(Error::Invalid(format!("unknown stage `{other}` (mlp, lr, gcn)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train: TrainConfig,
}

impl Default for MlpSettings {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128],
            dropout: 0.01,
            train: TrainConfig {
                epochs: 100,
                clusters: None,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnSettings {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub train: TrainConfig,
}

impl Default for GcnSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            dropout: 0.01,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSettings {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
}

impl Default for LrSettings {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 0.0,
            epochs: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSettings {
    pub threshold: f64,
    pub include_handedness: bool,
}

impl Default for PopulationSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            include_handedness: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub pooling: PoolingConfig,
    pub folds: FoldPlan,
    pub population: PopulationSettings,
    pub mlp: MlpSettings,
    pub gcn: GcnSettings,
    pub lr: LrSettings,
    pub stages: Vec<Stage>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pooling: PoolingConfig::default(),
            folds: FoldPlan::default(),
            population: PopulationSettings::default(),
            mlp: MlpSettings::default(),
            gcn: GcnSettings::default(),
            lr: LrSettings::default(),
            stages: Stage::ALL.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.pooling.validate()?;
        self.folds.validate()?;
        self.mlp.train.validate()?;
        self.gcn.train.validate()?;
        AdamConfig {
            lr: self.lr.lr,
            weight_decay: self.lr.weight_decay,
            ..AdamConfig::default()
        }
        .validate()?;
        if self.stages.is_empty() {
            return Err(Error::Invalid("no stages selected".into()));
        }
        Ok(())
    }

    fn runs(&self, s: Stage) -> bool {
        self.stages.contains(&s)
    }
}

/// Pooled features plus everything the heads need, aligned by index.
#[derive(Debug, Clone)]
pub struct PooledCohort {
    pub vectors: Vec<SparseFeatureVector>,
    pub labels: Vec<u8>,
    pub phenotypes: Vec<PhenotypeRecord>,
}

impl PooledCohort {
    pub fn new(
        vectors: Vec<SparseFeatureVector>,
        labels: Vec<u8>,
        phenotypes: Vec<PhenotypeRecord>,
    ) -> Result<Self> {
        if vectors.len() != labels.len() || labels.len() != phenotypes.len() {
            return Err(Error::Shape(format!(
                "{} pooled vectors, {} labels, {} phenotype rows",
                vectors.len(),
                labels.len(),
                phenotypes.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Invalid("labels must be 0 or 1".into()));
        }
        Ok(Self {
            vectors,
            labels,
            phenotypes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Pools every subject in parallel; output order follows `graphs`.
pub fn pool_cohort(
    graphs: &[SubjectGraph],
    cfg: &PoolingConfig,
) -> Vec<Result<(PoolingResult, SparseFeatureVector)>> {
    graphs
        .par_iter()
        .map(|g| {
            let res = pool_graph(g, cfg)?;
            let v = sparse_flatten(&res, g.n_nodes(), g.n_timepoints())?;
            Ok((res, v))
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `jobs` worker threads (at least one).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trained models of one outer fold, handed to an optional sink.
pub struct FoldArtifacts {
    pub repeat: usize,
    pub fold: usize,
    pub mlp: Mlp,
    pub standardizer: Standardizer,
    pub lr: Option<LogReg>,
    pub gcn: Option<Gcn>,
}

/// Per-fold training facts that are not metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldTraining {
    pub repeat: usize,
    pub fold: usize,
    pub mlp_inner_val_accuracy: f64,
    pub mlp_best_epoch: usize,
    pub gcn_best_epoch: Option<usize>,
    pub gcn_skipped_batches: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: MetricsReport,
    pub predictions: Vec<Prediction>,
    pub training: Vec<FoldTraining>,
}

struct FoldResult {
    outer: OuterFold,
    probs: Vec<(Stage, Vec<f64>)>,
    training: FoldTraining,
}

pub type FoldSink<'a> = &'a (dyn Fn(FoldArtifacts) -> Result<()> + Sync);

/// Runs the whole nested cross-validation. `jobs` bounds the worker threads;
/// results do not depend on it.
pub fn run_pipeline(
    cohort: &PooledCohort,
    ids: &[String],
    cfg: &PipelineConfig,
    jobs: usize,
    sink: Option<FoldSink<'_>>,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    if ids.len() != cohort.len() {
        return Err(Error::Shape("subject ids and cohort differ in length".into()));
    }
    if cohort.len() < cfg.folds.outer_k {
        return Err(Error::Invalid(format!(
            "{} subjects cannot fill {} outer folds",
            cohort.len(),
            cfg.folds.outer_k
        )));
    }
    let x = SparseRows::from_vectors(&cohort.vectors)?;
    let schema = PhenotypeSchema::from_cohort(&cohort.phenotypes, cfg.population.include_handedness)?;
    let pop_adj = build_population_graph(&cohort.phenotypes, &schema, cfg.population.threshold)?;
    let outer = cfg.folds.outer_folds(cohort.len())?;

    let results: Vec<Result<FoldResult>> = with_jobs(jobs, || {
        outer
            .par_iter()
            .map(|o| run_fold(o, &x, &cohort.labels, &pop_adj, cfg, sink))
            .collect()
    })?;
    let results: Vec<FoldResult> = results.into_iter().collect::<Result<_>>()?;

    let mut stages = Vec::new();
    let mut predictions = Vec::new();
    for stage in Stage::ALL.into_iter().filter(|s| cfg.runs(*s)) {
        let mut folds = Vec::with_capacity(results.len());
        for r in &results {
            let probs = &r.probs.iter().find(|(s, _)| *s == stage).expect("stage ran").1;
            let truth: Vec<u8> = r.outer.test.iter().map(|&i| cohort.labels[i]).collect();
            folds.push(FoldMetrics::compute(r.outer.repeat, r.outer.fold, probs, &truth)?);
            for (&i, &p) in r.outer.test.iter().zip(probs) {
                predictions.push(Prediction {
                    stage: stage.name().into(),
                    repeat: r.outer.repeat,
                    fold: r.outer.fold,
                    subject_id: ids[i].clone(),
                    label: cohort.labels[i],
                    probability: p,
                });
            }
        }
        stages.push(StageReport::new(stage.name(), folds));
    }
    let run = serde_json::json!({
        "n_subjects": cohort.len(),
        "input_dim": x.ncols(),
        "population_edges": pop_adj.edge_count(),
        "rng": RngStream::ALGORITHM,
        "config": cfg,
    });
    Ok(PipelineOutput {
        report: MetricsReport {
            schema_version: METRICS_SCHEMA_VERSION,
            stages,
            run,
        },
        predictions,
        training: results.into_iter().map(|r| r.training).collect(),
    })
}

fn pick(labels: &[u8], idx: &[usize]) -> Vec<u8> {
    idx.iter().map(|&i| labels[i]).collect()
}

fn both_classes(y: &[u8]) -> bool {
    y.contains(&0) && y.contains(&1)
}

fn rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(ndarray::Axis(0), idx)
}

fn run_fold(
    outer: &OuterFold,
    x: &SparseRows,
    labels: &[u8],
    pop_adj: &AdjacencyMatrix,
    cfg: &PipelineConfig,
    sink: Option<FoldSink<'_>>,
) -> Result<FoldResult> {
    let plan = &cfg.folds;
    let seed = plan.seed;
    let ord = outer.ordinal(plan);
    let y_train = pick(labels, &outer.train);
    if !both_classes(&y_train) {
        return Err(Error::SingleClass(format!(
            "repeat {} fold {}: training split holds a single class; try another seed",
            outer.repeat, outer.fold
        )));
    }

    let inner = plan.inner_folds(outer)?;
    let n_inner = inner.len() as u64;
    let mut best: Option<(f64, usize, Mlp)> = None;
    for (k, f) in inner.iter().enumerate() {
        let y_tr = pick(labels, &f.train);
        if !both_classes(&y_tr) {
            return Err(Error::SingleClass(format!(
                "repeat {} fold {} inner split {k}: training split holds a single class",
                outer.repeat, outer.fold
            )));
        }
        let y_val = pick(labels, &f.val);
        let x_tr = x.select(&f.train);
        let x_val = x.select(&f.val);
        let slot = ord * n_inner + k as u64;
        let mcfg = MlpConfig {
            input_dim: x.ncols(),
            hidden: cfg.mlp.hidden.clone(),
            dropout: cfg.mlp.dropout,
            seed: derive_seed(seed, "mlp-init", slot),
        };
        let tc = TrainConfig {
            seed: derive_seed(seed, "mlp-train", slot),
            ..cfg.mlp.train.clone()
        };
        let out = train_mlp(&mcfg, &tc, &x_tr, &y_tr, Some((&x_val, &y_val)))?;
        let acc = match out.best_val_accuracy {
            Some(a) => a,
            None => crate::nn::accuracy(
                &crate::nn::threshold_labels(&out.model.predict_proba(&x_val)?),
                &y_val,
            ),
        };
        if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
            best = Some((acc, out.best_epoch, out.model));
        }
    }
    let (inner_acc, mlp_epoch, mlp) = best.expect("at least two inner folds");

    let mut probs = Vec::new();
    if cfg.runs(Stage::Mlp) {
        probs.push((Stage::Mlp, mlp.predict_proba(&x.select(&outer.test))?));
    }
    let emb = mlp.embed(x)?;
    let standardizer = Standardizer::fit(rows(&emb, &outer.train).view())?;
    let z = standardizer.transform(emb.view())?;

    let mut lr_model = None;
    if cfg.runs(Stage::Lr) {
        let adam = AdamConfig {
            lr: cfg.lr.lr,
            weight_decay: cfg.lr.weight_decay,
            ..AdamConfig::default()
        };
        let m = train_logreg(rows(&z, &outer.train).view(), &y_train, cfg.lr.epochs, &adam)?;
        probs.push((Stage::Lr, m.predict_proba(rows(&z, &outer.test).view())?));
        lr_model = Some(m);
    }

    let mut gcn_model = None;
    let (mut gcn_epoch, mut gcn_skipped) = (None, None);
    if cfg.runs(Stage::Gcn) {
        let pg = PopulationGraph::new(
            pop_adj.clone(),
            FeatureMatrix::new(z)?,
            labels.to_vec(),
            outer.train.clone(),
            outer.test.clone(),
        )?;
        let gcfg = GcnConfig {
            input_dim: pg.features.d(),
            hidden: cfg.gcn.hidden.clone(),
            dropout: cfg.gcn.dropout,
            seed: derive_seed(seed, "gcn-init", ord),
        };
        let tc = TrainConfig {
            seed: derive_seed(seed, "gcn-train", ord),
            ..cfg.gcn.train.clone()
        };
        let out = train_gcn(&gcfg, &tc, &pg)?;
        let p = out.model.predict_proba(&normalized_adjacency(&pg.adjacency), pg.features.view())?;
        probs.push((Stage::Gcn, outer.test.iter().map(|&i| p[i]).collect()));
        gcn_epoch = Some(out.best_epoch);
        gcn_skipped = Some(out.skipped_batches);
        gcn_model = Some(out.model);
    }

    if let Some(sink) = sink {
        sink(FoldArtifacts {
            repeat: outer.repeat,
            fold: outer.fold,
            mlp,
            standardizer,
            lr: lr_model,
            gcn: gcn_model,
        })?;
    }
    Ok(FoldResult {
        outer: outer.clone(),
        probs,
        training: FoldTraining {
            repeat: outer.repeat,
            fold: outer.fold,
            mlp_inner_val_accuracy: inner_acc,
            mlp_best_epoch: mlp_epoch,
            gcn_best_epoch: gcn_epoch,
            gcn_skipped_batches: gcn_skipped,
        },
    })
}
