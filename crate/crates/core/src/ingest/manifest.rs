//! JSON cohort manifest: which time-series file belongs to which subject,
//! where the phenotype table lives, and how tables are parsed.
//!
//! Relative paths resolve against the manifest's directory.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::timeseries::{prepare_timeseries, read_timeseries_rows, LoadOptions, TimeLengthPolicy};
use super::{build_brain_graph, Label, SubjectGraph};
use crate::error::{Error, Result};
use crate::population::{read_phenotype_csv, PhenotypeRecord};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const ATLAS_DEFAULT: &str = "ho110+global";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub subject_id: String,
    pub timeseries: PathBuf,
    /// Key into the phenotype table; defaults to `subject_id`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phenotype_row: Option<String>,
}

impl ManifestEntry {
    pub fn phenotype_key(&self) -> &str {
        self.phenotype_row.as_deref().unwrap_or(&self.subject_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub schema_version: u32,
    pub atlas: String,
    pub load: LoadOptions,
    pub phenotypes: PathBuf,
    pub subjects: Vec<ManifestEntry>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl CohortManifest {
    pub fn new(load: LoadOptions, phenotypes: PathBuf, subjects: Vec<ManifestEntry>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            atlas: ATLAS_DEFAULT.into(),
            load,
            phenotypes,
            subjects,
            base_dir: PathBuf::new(),
        }
    }

    /// Reads and validates a manifest: unique ids, every referenced file
    /// exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CohortManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, e.to_string()))?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported manifest schema {}", m.schema_version),
            ));
        }
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.subjects {
            if !seen.insert(e.subject_id.as_str()) {
                return Err(Error::Invalid(format!(
                    "subject {} listed twice in manifest",
                    e.subject_id
                )));
            }
            let p = self.resolve(&e.timeseries);
            if !p.is_file() {
                return Err(Error::Invalid(format!(
                    "subject {}: time series {} not found",
                    e.subject_id,
                    p.display()
                )));
            }
        }
        let ph = self.resolve(&self.phenotypes);
        if !ph.is_file() {
            return Err(Error::Invalid(format!(
                "phenotype table {} not found",
                ph.display()
            )));
        }
        Ok(())
    }

    /// Phenotype records aligned with `subjects`.
    pub fn load_phenotypes(&self) -> Result<Vec<PhenotypeRecord>> {
        let all = read_phenotype_csv(&self.resolve(&self.phenotypes))?;
        let by_id: HashMap<&str, &PhenotypeRecord> =
            all.iter().map(|r| (r.subject_id.as_str(), r)).collect();
        self.subjects
            .iter()
            .map(|e| {
                by_id
                    .get(e.phenotype_key())
                    .map(|r| (*r).clone())
                    .ok_or_else(|| {
                        Error::Invalid(format!(
                            "subject {}: no phenotype row `{}`",
                            e.subject_id,
                            e.phenotype_key()
                        ))
                    })
            })
            .collect()
    }

    /// Loads every subject's brain graph, one result per manifest entry.
    ///
    /// A [`TimeLengthPolicy::TruncateToMin`] policy is resolved against the
    /// shortest readable series. Subjects load in parallel; the output order
    /// follows the manifest.
    pub fn load_graphs(&self, labels: &HashMap<String, Label>) -> Vec<Result<SubjectGraph>> {
        let raws: Vec<(PathBuf, Result<ndarray::Array2<f64>>)> = self
            .subjects
            .par_iter()
            .map(|e| {
                let p = self.resolve(&e.timeseries);
                let raw = read_timeseries_rows(&p, &self.load);
                (p, raw)
            })
            .collect();
        let mut opts = self.load;
        if opts.policy == TimeLengthPolicy::TruncateToMin {
            let min_t = raws
                .iter()
                .filter_map(|(_, r)| r.as_ref().ok().map(|m| m.ncols()))
                .min()
                .unwrap_or(0);
            opts.policy = TimeLengthPolicy::Truncate(min_t);
        }
        raws.into_par_iter()
            .zip(self.subjects.par_iter())
            .map(|((path, raw), entry)| {
                let ts = prepare_timeseries(raw?, &opts, &path)?;
                build_brain_graph(
                    entry.subject_id.clone(),
                    &ts,
                    labels.get(&entry.subject_id).copied(),
                )
            })
            .collect()
    }
}
