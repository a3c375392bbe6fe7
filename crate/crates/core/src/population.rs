//! Subject-level population graph from phenotypes.
//!
//! Each subject's phenotype is vectorised as
//! `[min-max scaled age] ++ one-hot(gender) ++ one-hot(site)`, optionally
//! followed by one-hot handedness. Two subjects are linked when the absolute
//! cosine similarity of their vectors is strictly above the threshold.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, FeatureMatrix};
use crate::ingest::Label;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

impl FromStr for Gender {
    type Err = Error;

    /// Accepts `male`/`m`/`1` and `female`/`f`/`2` (ABIDE `SEX` coding).
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" | "1" => Ok(Gender::Male),
            "female" | "f" | "2" => Ok(Gender::Female),
            other => Err(Error::Invalid(format!("unknown gender `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeRecord {
    pub subject_id: String,
    /// Years, finite and positive.
    pub age: f64,
    pub gender: Gender,
    pub site: String,
    pub handedness: Option<String>,
    pub dx: Option<Label>,
}

impl PhenotypeRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.age.is_finite() && self.age > 0.0) {
            return Err(Error::Invalid(format!(
                "subject {}: age must be finite and positive, got {}",
                self.subject_id, self.age
            )));
        }
        if self.site.is_empty() {
            return Err(Error::Invalid(format!(
                "subject {}: site is missing",
                self.subject_id
            )));
        }
        Ok(())
    }
}

/// Cohort-level vocabulary and scaling used to vectorise phenotypes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhenotypeSchema {
    pub age_min: f64,
    pub age_max: f64,
    /// Sorted site names; one-hot order.
    pub sites: Vec<String>,
    /// Sorted handedness values, present only when handedness is encoded.
    pub handedness: Option<Vec<String>>,
}

impl PhenotypeSchema {
    pub fn from_cohort(records: &[PhenotypeRecord], include_handedness: bool) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Invalid("empty cohort".into()));
        }
        for r in records {
            r.validate()?;
        }
        let age_min = records.iter().map(|r| r.age).fold(f64::INFINITY, f64::min);
        let age_max = records.iter().map(|r| r.age).fold(f64::NEG_INFINITY, f64::max);
        let sites: BTreeSet<&str> = records.iter().map(|r| r.site.as_str()).collect();
        let handedness = include_handedness.then(|| {
            records
                .iter()
                .filter_map(|r| r.handedness.as_deref())
                .collect::<BTreeSet<&str>>()
                .into_iter()
                .map(String::from)
                .collect()
        });
        Ok(Self {
            age_min,
            age_max,
            sites: sites.into_iter().map(String::from).collect(),
            handedness,
        })
    }

    /// Length of an encoded vector.
    pub fn dim(&self) -> usize {
        1 + 2 + self.sites.len() + self.handedness.as_ref().map_or(0, Vec::len)
    }
}

/// Vectorises one phenotype record under `schema`.
pub fn encode_phenotype(rec: &PhenotypeRecord, schema: &PhenotypeSchema) -> Result<Vec<f64>> {
    rec.validate()?;
    let mut v = Vec::with_capacity(schema.dim());
    let span = schema.age_max - schema.age_min;
    v.push(if span > 0.0 {
        (rec.age - schema.age_min) / span
    } else {
        0.0
    });
    v.push(f64::from(rec.gender == Gender::Male));
    v.push(f64::from(rec.gender == Gender::Female));
    let site = schema
        .sites
        .iter()
        .position(|s| *s == rec.site)
        .ok_or_else(|| Error::UnknownSite(rec.site.clone()))?;
    v.extend((0..schema.sites.len()).map(|i| f64::from(i == site)));
    if let Some(vocab) = &schema.handedness {
        let h = rec.handedness.as_deref();
        v.extend(vocab.iter().map(|x| f64::from(Some(x.as_str()) == h)));
    }
    Ok(v)
}

/// `|Mu·Mv| / (‖Mu‖‖Mv‖)`; 0 when either vector is zero.
pub fn phenotype_similarity(mu: &[f64], mv: &[f64]) -> f64 {
    let dot: f64 = mu.iter().zip(mv).map(|(a, b)| a * b).sum();
    let nu: f64 = mu.iter().map(|a| a * a).sum();
    let nv: f64 = mv.iter().map(|a| a * a).sum();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv).sqrt()).abs().min(1.0)
}

/// Binary, undirected subject graph: `A(u, v) = 1` iff `Sim(u, v) > threshold`.
pub fn build_population_graph(
    records: &[PhenotypeRecord],
    schema: &PhenotypeSchema,
    threshold: f64,
) -> Result<AdjacencyMatrix> {
    if records.len() < 2 {
        return Err(Error::Invalid(
            "a population graph needs at least two subjects".into(),
        ));
    }
    let encoded = records
        .iter()
        .map(|r| encode_phenotype(r, schema))
        .collect::<Result<Vec<_>>>()?;
    let n = encoded.len();
    let mut triplets = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if phenotype_similarity(&encoded[u], &encoded[v]) > threshold {
                triplets.push((u, v, 1.0));
            }
        }
    }
    AdjacencyMatrix::from_triplets(n, false, triplets)
}

/// Population graph with node features, labels and one fold's masks.
#[derive(Debug, Clone)]
pub struct PopulationGraph {
    pub adjacency: AdjacencyMatrix,
    pub features: FeatureMatrix,
    /// 1 = ASD, 0 = control.
    pub labels: Vec<u8>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PopulationGraph {
    pub fn new(
        adjacency: AdjacencyMatrix,
        features: FeatureMatrix,
        labels: Vec<u8>,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        let n = adjacency.n();
        if adjacency.is_directed() {
            return Err(Error::Invalid("population graph must be undirected".into()));
        }
        if (0..n).any(|i| adjacency.contains(i, i)) {
            return Err(Error::Invalid("population graph has a self-loop".into()));
        }
        if features.n() != n || labels.len() != n {
            return Err(Error::Shape(format!(
                "{n} nodes, {} feature rows, {} labels",
                features.n(),
                labels.len()
            )));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::Invalid("labels must be 0 or 1".into()));
        }
        if train.iter().chain(&test).any(|&i| i >= n) {
            return Err(Error::Invalid("mask index out of range".into()));
        }
        Ok(Self {
            adjacency,
            features,
            labels,
            train,
            test,
        })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn train_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n()];
        for &i in &self.train {
            m[i] = true;
        }
        m
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PhenotypeRow {
    subject_id: String,
    age: f64,
    gender: String,
    site: String,
    #[serde(default)]
    handedness: Option<String>,
    #[serde(default)]
    dx_group: Option<String>,
}

/// Reads a phenotype CSV with columns
/// `subject_id,age,gender,site,handedness,dx_group` (header required;
/// handedness and dx_group may be blank).
pub fn read_phenotype_csv(path: &Path) -> Result<Vec<PhenotypeRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::format(path, format!("{other:?}")),
        })?;
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<PhenotypeRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            path: path.into(),
            row: line,
            col: 0,
            msg: e.to_string(),
        })?;
        let at = |msg: String| Error::Parse {
            path: path.into(),
            row: line,
            col: 0,
            msg,
        };
        let gender = row.gender.parse::<Gender>().map_err(|e| at(e.to_string()))?;
        let dx = match row.dx_group.as_deref().filter(|s| !s.is_empty()) {
            Some(s) => Some(s.parse::<Label>().map_err(|e| at(e.to_string()))?),
            None => None,
        };
        let rec = PhenotypeRecord {
            subject_id: row.subject_id,
            age: row.age,
            gender,
            site: row.site,
            handedness: row.handedness.filter(|s| !s.is_empty()),
            dx,
        };
        rec.validate().map_err(|e| at(e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_phenotype_csv(path: &Path, records: &[PhenotypeRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    for r in records {
        w.serialize(PhenotypeRow {
            subject_id: r.subject_id.clone(),
            age: r.age,
            gender: r.gender.to_string(),
            site: r.site.clone(),
            handedness: r.handedness.clone(),
            dx_group: r.dx.map(|l| l.to_string()),
        })?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
