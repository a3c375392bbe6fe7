//! Confusion counts, ROC/AUC and fold aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Binary confusion counts with ASD = 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::Shape("predictions and labels differ in length".into()));
        }
        let mut c = Confusion::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p, t) {
                (1, 1) => c.tp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => return Err(Error::Invalid(format!("labels must be 0 or 1, got ({p}, {t})"))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Percent; `None` for an empty matrix.
    pub fn accuracy(&self) -> Option<f64> {
        pct(self.tp + self.tn, self.total())
    }

    /// `TP/(TP+FN)` in percent; `None` without positives.
    pub fn sensitivity(&self) -> Option<f64> {
        pct(self.tp, self.tp + self.fn_)
    }

    /// `TN/(TN+FP)` in percent; `None` without negatives.
    pub fn specificity(&self) -> Option<f64> {
        pct(self.tn, self.tn + self.fp)
    }
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    (pos, labels.len() - pos)
}

/// Rank-based AUC with midranks for ties (Mann-Whitney U / (n₁n₀)).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let (n1, n0) = class_counts(labels);
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives keeps every quantity an integer
    let mut rank2_pos: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, midrank (i + j + 2)/2
        let mid2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank2_pos += mid2;
            }
        }
        i = j + 1;
    }
    let u2 = rank2_pos - (n1 * (n1 + 1)) as u64;
    Ok(u2 as f64 / (2 * n1 * n0) as f64)
}

/// ROC points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one per distinct
/// score threshold, descending.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let (n1, n0) = class_counts(labels);
    if n1 == 0 || n0 == 0 {
        return Err(Error::SingleClass("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / n0 as f64, tp as f64 / n1 as f64));
    }
    Ok(pts)
}

/// Mean and sample standard deviation (`n − 1`; 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    /// `None` if there are no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub repeat: usize,
    pub fold: usize,
    pub confusion: Confusion,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    /// `None` when the test fold holds a single class.
    pub auc: Option<f64>,
}

impl FoldMetrics {
    pub fn compute(repeat: usize, fold: usize, proba: &[f64], truth: &[u8]) -> Result<Self> {
        let pred: Vec<u8> = proba.iter().map(|&p| u8::from(p > 0.5)).collect();
        let confusion = Confusion::from_labels(&pred, truth)?;
        let auc = match roc_auc(proba, truth) {
            Ok(a) => Some(a),
            Err(Error::SingleClass(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            repeat,
            fold,
            confusion,
            accuracy: confusion.accuracy(),
            sensitivity: confusion.sensitivity(),
            specificity: confusion.specificity(),
            auc,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub accuracy: Option<Summary>,
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
    pub auc: Option<Summary>,
}

impl Aggregate {
    fn over<F: Fn(&FoldMetrics) -> Option<f64>>(groups: &[Vec<&FoldMetrics>], f: F) -> Option<Summary> {
        let values: Vec<f64> = groups
            .iter()
            .filter_map(|g| {
                let v: Vec<f64> = g.iter().filter_map(|m| f(m)).collect();
                Summary::of(&v).map(|s| s.mean)
            })
            .collect();
        Summary::of(&values)
    }

    fn from_groups(groups: &[Vec<&FoldMetrics>]) -> Self {
        Self {
            accuracy: Self::over(groups, |m| m.accuracy),
            sensitivity: Self::over(groups, |m| m.sensitivity),
            specificity: Self::over(groups, |m| m.specificity),
            auc: Self::over(groups, |m| m.auc),
        }
    }
}

/// Metrics of one classification head across all outer folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub folds: Vec<FoldMetrics>,
    /// Every fold counted once.
    pub over_folds: Aggregate,
    /// Mean and spread of the per-repeat means.
    pub over_repeats: Aggregate,
    /// Confusion summed over all folds.
    pub pooled_confusion: Confusion,
}

impl StageReport {
    pub fn new(stage: impl Into<String>, folds: Vec<FoldMetrics>) -> Self {
        let each: Vec<Vec<&FoldMetrics>> = folds.iter().map(|f| vec![f]).collect();
        let n_rep = folds.iter().map(|f| f.repeat + 1).max().unwrap_or(0);
        let by_rep: Vec<Vec<&FoldMetrics>> = (0..n_rep)
            .map(|r| folds.iter().filter(|f| f.repeat == r).collect())
            .collect();
        let mut pooled = Confusion::default();
        for f in &folds {
            pooled.tp += f.confusion.tp;
            pooled.tn += f.confusion.tn;
            pooled.fp += f.confusion.fp;
            pooled.fn_ += f.confusion.fn_;
        }
        Self {
            stage: stage.into(),
            over_folds: Aggregate::from_groups(&each),
            over_repeats: Aggregate::from_groups(&by_rep),
            pooled_confusion: pooled,
            folds,
        }
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        self.over_folds.accuracy.map(|s| s.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub stages: Vec<StageReport>,
    /// Settings and seeds of the run, echoed for audit.
    pub run: serde_json::Value,
}

impl MetricsReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let r: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        if r.schema_version != METRICS_SCHEMA_VERSION {
            return Err(Error::format(path, format!("unsupported schema {}", r.schema_version)));
        }
        Ok(r)
    }

    /// `# schema_version=1` then `stage,repeat,fold,tp,tn,fp,fn`.
    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!("# schema_version={METRICS_SCHEMA_VERSION}\nstage,repeat,fold,tp,tn,fp,fn\n");
        for s in &self.stages {
            for f in &s.folds {
                let c = f.confusion;
                out += &format!("{},{},{},{},{},{},{}\n", s.stage, f.repeat, f.fold, c.tp, c.tn, c.fp, c.fn_);
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub stage: String,
    pub repeat: usize,
    pub fold: usize,
    pub subject_id: String,
    pub label: u8,
    pub probability: f64,
}

/// `# schema_version=1` then `stage,repeat,fold,threshold,fpr,tpr`; one curve
/// per fold with both classes.
pub fn write_roc_csv(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut out = format!("# schema_version={METRICS_SCHEMA_VERSION}\nstage,repeat,fold,point,fpr,tpr\n");
    let mut keys: Vec<(&str, usize, usize)> = preds
        .iter()
        .map(|p| (p.stage.as_str(), p.repeat, p.fold))
        .collect();
    keys.dedup();
    for (stage, r, f) in keys {
        let sel: Vec<&Prediction> = preds
            .iter()
            .filter(|p| p.stage == stage && p.repeat == r && p.fold == f)
            .collect();
        let scores: Vec<f64> = sel.iter().map(|p| p.probability).collect();
        let labels: Vec<u8> = sel.iter().map(|p| p.label).collect();
        match roc_curve(&scores, &labels) {
            Ok(pts) => {
                for (k, (fpr, tpr)) in pts.into_iter().enumerate() {
                    out += &format!("{stage},{r},{f},{k},{fpr},{tpr}\n");
                }
            }
            Err(Error::SingleClass(_)) => {}
            Err(e) => return Err(e),
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_predictions_csv(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for p in preds {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
