use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use rayon::prelude::*;
use sagcn_core::eval::{
    run_pipeline, selection_frequencies, with_jobs, write_predictions_csv, write_roc_csv, FoldArtifacts,
    FoldMetrics, MetricsReport, PipelineOutput, PooledCohort, Prediction, SelectionRecord, Stage,
    StageReport, METRICS_SCHEMA_VERSION,
};
use sagcn_core::ingest::{synth_cohort, write_synth_cohort, CohortManifest, SynthConfig};
use sagcn_core::nn::{load_checkpoint, save_checkpoint, Mlp, SparseRows};
use sagcn_core::pooling::{pool_graph, sparse_flatten, SparseFeatureFile, SparseFeatureVector};
use sagcn_core::population::PhenotypeRecord;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{EmbedExportArgs, EvaluateArgs, FrequenciesArgs, PoolArgs, SynthArgs, TrainArgs};

pub const SUMMARY_FILE: &str = "pooling_summary.json";
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Bad flags, bad config or a refused overwrite; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(ce) = cause.downcast_ref::<sagcn_core::Error>() {
            if ce.is_numeric() {
                return 3;
            }
        }
    }
    2
}

fn usage(e: sagcn_core::Error) -> anyhow::Error {
    UsageError(e.to_string()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CheckpointPolicy {
    None,
    First,
    All,
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = std::fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(UsageError(format!(
                "{} exists and is not empty (use --force to write into it)",
                dir.display()
            ))
            .into());
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        n_subjects: a.subjects,
        n_timepoints: a.timepoints,
        class_gap: a.gap,
        seed: a.seed,
    };
    let cohort = synth_cohort(&cfg).map_err(usage)?;
    prepare_out_dir(&a.out, a.force)?;
    let manifest = write_synth_cohort(&cohort, &a.out)?;
    info!("wrote {} subjects", cohort.graphs.len());
    println!("{}", manifest.display());
    Ok(())
}

/// One line of the pooling summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub subject_id: String,
    /// Feature file, relative to the pooled directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default)]
    pub selected: Vec<usize>,
    /// Directed pooled edges in original node numbering.
    #[serde(default)]
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingSummary {
    pub schema_version: u32,
    pub ratio: f64,
    pub layers: usize,
    pub n_nodes: usize,
    pub feat_dim: usize,
    pub subjects: Vec<SummaryEntry>,
}

impl PoolingSummary {
    fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {} (run `pool` first)", path.display()))?;
        let s: PoolingSummary =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if s.schema_version != SUMMARY_SCHEMA_VERSION {
            bail!("{}: unsupported summary schema {}", path.display(), s.schema_version);
        }
        Ok(s)
    }
}

pub fn pool(a: PoolArgs) -> Result<()> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if let Some(m) = a.manifest {
        rc.manifest = Some(m);
    }
    // The pooling output is what later commands read as `pooled`.
    if let Some(o) = a.out {
        rc.pooled = Some(o);
    }
    if let Some(r) = a.ratio {
        rc.pooling.ratio = r;
    }
    if let Some(l) = a.layers {
        rc.pooling.layers = l;
    }
    if let Some(j) = a.jobs {
        rc.jobs = Some(j);
    }
    rc.pooling.validate().map_err(usage)?;
    let manifest = CohortManifest::load(rc.manifest()?)?;
    let out = rc
        .pooled
        .clone()
        .ok_or_else(|| UsageError("no output directory given (--out or `pooled` in config)".into()))?;
    prepare_out_dir(&out, a.force)?;
    let feat_dir = out.join("features");
    std::fs::create_dir_all(&feat_dir).with_context(|| format!("creating {}", feat_dir.display()))?;

    let cfg = rc.pooling;
    let entries: Vec<(SummaryEntry, Option<(usize, usize)>)> = with_jobs(rc.jobs(), || {
        let graphs = manifest.load_graphs(&HashMap::new());
        graphs
            .into_par_iter()
            .zip(manifest.subjects.par_iter())
            .map(|(g, m)| {
                let id = m.subject_id.clone();
                let run = || -> Result<(SummaryEntry, (usize, usize))> {
                    let g = g?;
                    let res = pool_graph(&g, &cfg)?;
                    let vector = sparse_flatten(&res, g.n_nodes(), g.n_timepoints())?;
                    let rel = format!("features/{id}.sgpv");
                    let file = SparseFeatureFile {
                        subject_id: id.clone(),
                        ratio: cfg.ratio,
                        vector,
                    };
                    file.save(&out.join(&rel))?;
                    if a.csv {
                        file.save_csv(&out.join(format!("features/{id}.csv")))?;
                    }
                    Ok((
                        SummaryEntry {
                            subject_id: id.clone(),
                            file: Some(rel),
                            selected: res.selected.clone(),
                            edges: res.edges_original().into_iter().map(|(p, q, _)| (p, q)).collect(),
                            error: None,
                        },
                        (g.n_nodes(), g.n_timepoints()),
                    ))
                };
                match run() {
                    Ok((e, dims)) => (e, Some(dims)),
                    Err(e) => (
                        SummaryEntry {
                            subject_id: id,
                            file: None,
                            selected: Vec::new(),
                            edges: Vec::new(),
                            error: Some(format!("{e:#}")),
                        },
                        None,
                    ),
                }
            })
            .collect()
    })?;
    let (n_nodes, feat_dim) = entries.iter().find_map(|(_, d)| *d).unwrap_or((0, 0));
    let failed: Vec<&SummaryEntry> = entries.iter().map(|(e, _)| e).filter(|e| e.error.is_some()).collect();
    for e in &failed {
        warn!("{}: {}", e.subject_id, e.error.as_deref().unwrap_or_default());
    }
    let n_failed = failed.len();
    let summary = PoolingSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        ratio: cfg.ratio,
        layers: cfg.layers,
        n_nodes,
        feat_dim,
        subjects: entries.into_iter().map(|(e, _)| e).collect(),
    };
    let path = out.join(SUMMARY_FILE);
    write_json(&path, &summary)?;
    println!("{}", path.display());
    if n_failed > 0 {
        bail!("{n_failed} of {} subjects failed; see {}", summary.subjects.len(), path.display());
    }
    Ok(())
}

struct LoadedCohort {
    ids: Vec<String>,
    vectors: Vec<SparseFeatureVector>,
    phenotypes: Vec<PhenotypeRecord>,
}

fn load_pooled(manifest: &Path, pooled: &Path) -> Result<LoadedCohort> {
    let manifest = CohortManifest::load(manifest)?;
    let phenotypes = manifest.load_phenotypes()?;
    let summary = PoolingSummary::load(pooled)?;
    let by_id: HashMap<&str, &SummaryEntry> =
        summary.subjects.iter().map(|e| (e.subject_id.as_str(), e)).collect();
    let mut ids = Vec::with_capacity(manifest.subjects.len());
    let mut vectors = Vec::with_capacity(manifest.subjects.len());
    for m in &manifest.subjects {
        let e = by_id
            .get(m.subject_id.as_str())
            .ok_or_else(|| anyhow!("subject {} missing from the pooling summary", m.subject_id))?;
        let file = match (&e.file, &e.error) {
            (Some(f), None) => f,
            (_, err) => bail!(
                "subject {} has no pooled features: {}",
                m.subject_id,
                err.as_deref().unwrap_or("no file")
            ),
        };
        let f = SparseFeatureFile::load(&pooled.join(file))?;
        ids.push(m.subject_id.clone());
        vectors.push(f.vector);
    }
    Ok(LoadedCohort {
        ids,
        vectors,
        phenotypes,
    })
}

fn labels_of(phenotypes: &[PhenotypeRecord]) -> Result<Vec<u8>> {
    phenotypes
        .iter()
        .map(|p| {
            p.dx.map(|l| l.as_u8())
                .ok_or_else(|| anyhow!("subject {} has no diagnosis label", p.subject_id))
        })
        .collect()
}

fn checkpoint_dir(run: &Path) -> PathBuf {
    run.join("checkpoints")
}

fn checkpoint_name(repeat: usize, fold: usize, head: &str) -> String {
    format!("r{repeat}_f{fold}_{head}.ckpt")
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if let Some(v) = a.manifest {
        rc.manifest = Some(v);
    }
    if let Some(v) = a.pooled {
        rc.pooled = Some(v);
    }
    if let Some(v) = a.out {
        rc.out = Some(v);
    }
    if let Some(v) = a.jobs {
        rc.jobs = Some(v);
    }
    if let Some(heads) = &a.head {
        rc.stages = heads
            .iter()
            .map(|h| h.parse::<Stage>())
            .collect::<sagcn_core::Result<_>>()
            .map_err(usage)?;
    }
    if a.full_batch {
        rc.gcn.train.clusters = None;
    }
    if let Some(b) = a.clusters {
        rc.gcn.train.clusters = Some(b);
    }
    if let Some(s) = a.seed {
        rc.folds.seed = s;
    }
    let f = &mut rc.folds;
    f.outer_k = a.outer_k.unwrap_or(f.outer_k);
    f.outer_repeats = a.outer_repeats.unwrap_or(f.outer_repeats);
    f.inner_k = a.inner_k.unwrap_or(f.inner_k);
    f.inner_repeats = a.inner_repeats.unwrap_or(f.inner_repeats);
    if let Some(v) = a.mlp_lr {
        rc.mlp.train.lr = v;
    }
    if let Some(v) = a.mlp_epochs {
        rc.mlp.train.epochs = v;
    }
    if let Some(v) = a.gcn_lr {
        rc.gcn.train.lr = v;
    }
    if let Some(v) = a.gcn_epochs {
        rc.gcn.train.epochs = v;
    }
    if let Some(v) = a.weight_decay {
        rc.mlp.train.weight_decay = v;
        rc.gcn.train.weight_decay = v;
    }
    if let Some(v) = a.dropout {
        rc.mlp.dropout = v;
        rc.gcn.dropout = v;
    }
    let cfg = rc.pipeline();
    cfg.validate().map_err(usage)?;
    if !(0.0..1.0).contains(&rc.mlp.dropout) {
        return Err(UsageError(format!("dropout must be in [0, 1), got {}", rc.mlp.dropout)).into());
    }

    let cohort = load_pooled(rc.manifest()?, rc.pooled()?)?;
    let labels = labels_of(&cohort.phenotypes)?;
    let out = rc.out()?.to_path_buf();
    prepare_out_dir(&out, a.force)?;
    let ckpt_dir = checkpoint_dir(&out);
    if a.checkpoints != CheckpointPolicy::None {
        std::fs::create_dir_all(&ckpt_dir)?;
    }
    let policy = a.checkpoints;
    let run_meta = serde_json::json!({ "fold_seed": cfg.folds.seed });
    let sink = |art: FoldArtifacts| -> sagcn_core::Result<()> {
        let keep = match policy {
            CheckpointPolicy::None => false,
            CheckpointPolicy::First => art.repeat == 0 && art.fold == 0,
            CheckpointPolicy::All => true,
        };
        if !keep {
            return Ok(());
        }
        let (r, f) = (art.repeat, art.fold);
        save_checkpoint(&ckpt_dir.join(checkpoint_name(r, f, "mlp")), &art.mlp, run_meta.clone())?;
        if let Some(m) = &art.lr {
            save_checkpoint(&ckpt_dir.join(checkpoint_name(r, f, "lr")), m, run_meta.clone())?;
        }
        if let Some(m) = &art.gcn {
            save_checkpoint(&ckpt_dir.join(checkpoint_name(r, f, "gcn")), m, run_meta.clone())?;
        }
        let std_path = ckpt_dir.join(format!("r{r}_f{f}_standardizer.json"));
        let text = serde_json::to_string_pretty(&art.standardizer)? + "\n";
        std::fs::write(&std_path, text).map_err(|e| sagcn_core::Error::Io {
            path: std_path.clone(),
            source: e,
        })
    };
    let pc = PooledCohort::new(cohort.vectors, labels, cohort.phenotypes)?;
    info!(
        "{} subjects, {} outer folds × {} repeats, heads {:?}",
        pc.len(),
        cfg.folds.outer_k,
        cfg.folds.outer_repeats,
        cfg.stages
    );
    let started = std::time::SystemTime::now();
    let PipelineOutput {
        report,
        predictions,
        training,
    } = run_pipeline(&pc, &cohort.ids, &cfg, rc.jobs(), Some(&sink))?;

    report.save_json(&out.join("metrics.json"))?;
    report.write_confusion_csv(&out.join("confusion.csv"))?;
    write_roc_csv(&out.join("roc.csv"), &predictions)?;
    write_predictions_csv(&out.join("predictions.csv"), &predictions)?;
    write_json(&out.join("training.json"), &training)?;
    let unix = |t: std::time::SystemTime| {
        t.duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    };
    let meta = serde_json::json!({
        "tool": "sagcn",
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix": unix(started),
        "finished_unix": unix(std::time::SystemTime::now()),
        "settings": {
            "mlp": {"lr": cfg.mlp.train.lr, "weight_decay": cfg.mlp.train.weight_decay, "dropout": cfg.mlp.dropout, "epochs": cfg.mlp.train.epochs},
            "gcn": {"lr": cfg.gcn.train.lr, "weight_decay": cfg.gcn.train.weight_decay, "dropout": cfg.gcn.dropout, "epochs": cfg.gcn.train.epochs, "clusters": cfg.gcn.train.clusters},
            "pooling": cfg.pooling,
        },
        "seeds": {
            "fold_plan": cfg.folds.seed,
            "models": "derived from the fold-plan seed per fold and inner split",
        },
        "jobs": rc.jobs(),
        "config": rc,
    });
    write_json(&out.join("run.json"), &meta)?;
    print_report(&report);
    Ok(())
}

fn fmt_summary(s: &Option<sagcn_core::eval::Summary>, digits: usize) -> String {
    match s {
        Some(s) => format!("{:.*} ± {:.*}", digits, s.mean, digits, s.sd),
        None => "n/a".into(),
    }
}

fn print_report(report: &MetricsReport) {
    println!("stage  accuracy         sensitivity      specificity      auc");
    for s in &report.stages {
        let a = &s.over_folds;
        println!(
            "{:<6} {:<16} {:<16} {:<16} {}",
            s.stage,
            fmt_summary(&a.accuracy, 2),
            fmt_summary(&a.sensitivity, 2),
            fmt_summary(&a.specificity, 2),
            fmt_summary(&a.auc, 3)
        );
    }
}

type FoldColumns = (Vec<f64>, Vec<u8>);

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let path = a.run.join("predictions.csv");
    let mut rdr = csv::Reader::from_path(&path)
        .with_context(|| format!("reading {} (run `train` first)", path.display()))?;
    let preds: Vec<Prediction> = rdr
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))?;
    if preds.is_empty() {
        bail!("{} holds no predictions", path.display());
    }
    let mut stage_order: Vec<String> = Vec::new();
    // (stage, repeat, fold) -> (probabilities, labels)
    let mut groups: BTreeMap<(usize, usize, usize), FoldColumns> = BTreeMap::new();
    for p in &preds {
        let s = match stage_order.iter().position(|x| x == &p.stage) {
            Some(s) => s,
            None => {
                stage_order.push(p.stage.clone());
                stage_order.len() - 1
            }
        };
        let g = groups.entry((s, p.repeat, p.fold)).or_default();
        g.0.push(p.probability);
        g.1.push(p.label);
    }
    let mut stages = Vec::new();
    for (s, name) in stage_order.iter().enumerate() {
        let folds = groups
            .range((s, 0, 0)..(s + 1, 0, 0))
            .map(|(&(_, r, f), (probs, labels))| FoldMetrics::compute(r, f, probs, labels))
            .collect::<sagcn_core::Result<Vec<_>>>()?;
        stages.push(StageReport::new(name.clone(), folds));
    }
    let report = MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        stages,
        run: serde_json::json!({ "source": "predictions.csv", "n_predictions": preds.len() }),
    };
    let out = a.out.unwrap_or_else(|| a.run.join("evaluation.json"));
    report.save_json(&out)?;
    print_report(&report);
    println!("{}", out.display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GroupKey {
    Dx,
    Gender,
    Site,
}

const GROUP_KEYS: &str = "dx, gender, site";

fn parse_group_keys(s: &str) -> Result<Vec<GroupKey>> {
    let keys = s
        .split(',')
        .map(|k| match k.trim().to_ascii_lowercase().as_str() {
            "dx" => Ok(GroupKey::Dx),
            "gender" => Ok(GroupKey::Gender),
            "site" => Ok(GroupKey::Site),
            other => Err(anyhow::Error::from(UsageError(format!(
                "unknown group key `{other}`; valid keys: {GROUP_KEYS}"
            )))),
        })
        .collect::<Result<Vec<_>>>()?;
    if keys.is_empty() {
        return Err(UsageError(format!("no group keys; valid keys: {GROUP_KEYS}")).into());
    }
    Ok(keys)
}

fn group_name(p: &PhenotypeRecord, keys: &[GroupKey]) -> Result<String> {
    let parts = keys
        .iter()
        .map(|k| match k {
            GroupKey::Dx => p
                .dx
                .map(|l| l.to_string())
                .ok_or_else(|| anyhow!("subject {} has no diagnosis label", p.subject_id)),
            GroupKey::Gender => Ok(p.gender.to_string()),
            GroupKey::Site => Ok(p.site.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.join("_"))
}

pub fn frequencies(a: FrequenciesArgs) -> Result<()> {
    let keys = parse_group_keys(&a.group)?;
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if let Some(v) = a.manifest {
        rc.manifest = Some(v);
    }
    if let Some(v) = a.pooled {
        rc.pooled = Some(v);
    }
    if a.top == 0 {
        return Err(UsageError("--top must be at least 1".into()).into());
    }
    let manifest = CohortManifest::load(rc.manifest()?)?;
    let phenotypes = manifest.load_phenotypes()?;
    let summary = PoolingSummary::load(rc.pooled()?)?;
    let by_id: HashMap<&str, &SummaryEntry> =
        summary.subjects.iter().map(|e| (e.subject_id.as_str(), e)).collect();
    let mut groups: BTreeMap<String, Vec<SelectionRecord>> = BTreeMap::new();
    for (m, p) in manifest.subjects.iter().zip(&phenotypes) {
        let Some(e) = by_id.get(m.subject_id.as_str()).filter(|e| e.error.is_none()) else {
            bail!("subject {} has no pooling result", m.subject_id);
        };
        groups.entry(group_name(p, &keys)?).or_default().push(SelectionRecord {
            subject_id: m.subject_id.clone(),
            selected: e.selected.clone(),
            edges: e.edges.clone(),
        });
    }
    prepare_out_dir(&a.out, a.force)?;
    std::fs::create_dir_all(a.out.join("nodes"))?;
    std::fs::create_dir_all(a.out.join("edges"))?;
    for (name, recs) in &groups {
        let refs: Vec<&SelectionRecord> = recs.iter().collect();
        let table = selection_frequencies(name, &refs, summary.n_nodes, a.top)?;
        let np = a.out.join("nodes").join(format!("{name}.csv"));
        table.write_nodes_csv(&np)?;
        table.write_edges_csv(&a.out.join("edges").join(format!("{name}.csv")))?;
        println!("{}", np.display());
    }
    Ok(())
}

pub fn embed_export(a: EmbedExportArgs) -> Result<()> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if let Some(v) = a.manifest {
        rc.manifest = Some(v);
    }
    if let Some(v) = a.pooled {
        rc.pooled = Some(v);
    }
    let ckpt = checkpoint_dir(&a.run).join(checkpoint_name(a.repeat, a.fold, "mlp"));
    if !ckpt.is_file() {
        return Err(UsageError(format!(
            "no MLP checkpoint at {} (train with --checkpoints first|all)",
            ckpt.display()
        ))
        .into());
    }
    let mlp: Mlp = load_checkpoint(&ckpt)?;
    let cohort = load_pooled(rc.manifest()?, rc.pooled()?)?;
    let x = SparseRows::from_vectors(&cohort.vectors)?;
    let emb = mlp.embed(&x)?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let mut header: Vec<String> = ["subject_id", "dx", "age", "gender", "site", "handedness"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..emb.ncols()).map(|k| format!("e{k}")));
    w.write_record(&header)?;
    for (i, p) in cohort.phenotypes.iter().enumerate() {
        let mut row = vec![
            cohort.ids[i].clone(),
            p.dx.map(|l| l.to_string()).unwrap_or_default(),
            p.age.to_string(),
            p.gender.to_string(),
            p.site.clone(),
            p.handedness.clone().unwrap_or_default(),
        ];
        row.extend(emb.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    println!("{}", a.out.display());
    Ok(())
}
