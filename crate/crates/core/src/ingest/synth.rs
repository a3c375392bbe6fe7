//! Synthetic cohorts for desk-scale verification.
//!
//! Every ROI follows a subject-specific global signal plus independent noise.
//! In class-1 subjects a fixed set of signature ROIs additionally carries a
//! shared waveform scaled by `class_gap`, which raises their amplitude, couples
//! them to each other, and pulls them away from the global mean. With
//! `class_gap = 0` both classes come from the same distribution. Phenotypes
//! are drawn independently of the label.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::manifest::{CohortManifest, ManifestEntry};
use super::timeseries::{write_timeseries, zscore_rows, LoadOptions};
use super::{build_brain_graph, Label, SubjectGraph, N_ROIS};
use crate::error::{Error, Result};
use crate::graph::FeatureMatrix;
use crate::population::{write_phenotype_csv, Gender, PhenotypeRecord};
use crate::rng::RngStream;

/// ROIs that carry the class-1 waveform.
pub const SIGNATURE_ROIS: [usize; 8] = [3, 17, 29, 44, 58, 71, 86, 99];

const GLOBAL_COUPLING: f64 = 2.0;
const GLOBAL_AR: f64 = 0.7;
const SITES: [&str; 3] = ["SITE_A", "SITE_B", "SITE_C"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_subjects: usize,
    pub n_timepoints: usize,
    /// Signature amplitude in units of the per-ROI noise sd.
    pub class_gap: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 200,
            n_timepoints: 64,
            class_gap: 3.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    /// Raw `110 × T` series, before z-scoring.
    pub timeseries: Vec<FeatureMatrix>,
    /// Brain graphs built exactly as the ingestion path would build them.
    pub graphs: Vec<SubjectGraph>,
    pub phenotypes: Vec<PhenotypeRecord>,
}

impl SynthCohort {
    pub fn labels(&self) -> Vec<u8> {
        self.phenotypes
            .iter()
            .map(|p| p.dx.map_or(0, Label::as_u8))
            .collect()
    }
}

fn signature_waveform(t: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..t)
        .map(|k| {
            let x = k as f64;
            (2.0 * std::f64::consts::PI * x / 9.0).sin()
                + 0.5 * (2.0 * std::f64::consts::PI * x / 4.0 + 1.0).sin()
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / t as f64;
    let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64).sqrt();
    raw.iter().map(|v| (v - mean) / sd).collect()
}

pub fn synth_cohort(cfg: &SynthConfig) -> Result<SynthCohort> {
    if cfg.n_subjects < 4 {
        return Err(Error::Invalid(format!(
            "synthetic cohort needs at least 4 subjects, got {}",
            cfg.n_subjects
        )));
    }
    if !(cfg.class_gap >= 0.0 && cfg.class_gap.is_finite()) {
        return Err(Error::Invalid(format!(
            "class gap must be finite and >= 0, got {}",
            cfg.class_gap
        )));
    }
    if cfg.n_timepoints < 2 {
        return Err(Error::Invalid("need at least 2 time points".into()));
    }
    let root = RngStream::new(cfg.seed);
    let t = cfg.n_timepoints;
    let wave = signature_waveform(t);

    let mut labels: Vec<Label> = (0..cfg.n_subjects)
        .map(|i| if i % 2 == 0 { Label::Control } else { Label::Asd })
        .collect();
    root.derive("labels", 0).shuffle(&mut labels);

    let mut timeseries = Vec::with_capacity(cfg.n_subjects);
    let mut graphs = Vec::with_capacity(cfg.n_subjects);
    let mut phenotypes = Vec::with_capacity(cfg.n_subjects);
    for (s, &label) in labels.iter().enumerate() {
        let id = format!("SYN{:05}", s + 1);
        let mut rng = root.derive("subject", s as u64);

        let mut global = vec![0.0; t];
        let innov = (1.0 - GLOBAL_AR * GLOBAL_AR).sqrt();
        global[0] = rng.normal();
        for k in 1..t {
            global[k] = GLOBAL_AR * global[k - 1] + innov * rng.normal();
        }
        let amp = cfg.class_gap * rng.uniform_range(0.8, 1.2);
        let mut ts = Array2::zeros((N_ROIS, t));
        for i in 0..N_ROIS {
            let offset = rng.uniform_range(-5.0, 5.0);
            let scale = rng.uniform_range(0.5, 2.0);
            let signature = label == Label::Asd && SIGNATURE_ROIS.contains(&i);
            for k in 0..t {
                let mut v = GLOBAL_COUPLING * global[k] + rng.normal();
                if signature {
                    v += amp * wave[k];
                }
                ts[[i, k]] = offset + scale * v;
            }
        }
        let raw = FeatureMatrix::new(ts)?;
        let mut z = raw.as_array().clone();
        zscore_rows(&mut z);
        graphs.push(build_brain_graph(
            id.clone(),
            &FeatureMatrix::new(z)?,
            Some(label),
        )?);
        timeseries.push(raw);

        let mut prng = root.derive("phenotype", s as u64);
        let site = SITES[prng.below(SITES.len())].to_string();
        let gender = if prng.uniform() < 0.7 {
            Gender::Male
        } else {
            Gender::Female
        };
        let age = (prng.uniform_range(7.0, 58.0) * 100.0).round() / 100.0;
        let h = prng.uniform();
        let handedness = if h < 0.3 {
            None
        } else if h < 0.9 {
            Some("R".to_string())
        } else {
            Some("L".to_string())
        };
        phenotypes.push(PhenotypeRecord {
            subject_id: id,
            age,
            gender,
            site,
            handedness,
            dx: Some(label),
        });
    }
    Ok(SynthCohort {
        timeseries,
        graphs,
        phenotypes,
    })
}

/// Writes the cohort in the ingestion formats and returns the manifest path.
///
/// Layout: `timeseries/<id>.csv`, `phenotypes.csv`, `manifest.json`.
pub fn write_synth_cohort(cohort: &SynthCohort, dir: &Path) -> Result<PathBuf> {
    let ts_dir = dir.join("timeseries");
    std::fs::create_dir_all(&ts_dir).map_err(|e| Error::io(&ts_dir, e))?;
    let mut entries = Vec::with_capacity(cohort.phenotypes.len());
    for (rec, ts) in cohort.phenotypes.iter().zip(&cohort.timeseries) {
        let rel = PathBuf::from("timeseries").join(format!("{}.csv", rec.subject_id));
        write_timeseries(&dir.join(&rel), ts)?;
        entries.push(ManifestEntry {
            subject_id: rec.subject_id.clone(),
            timeseries: rel,
            phenotype_row: None,
        });
    }
    write_phenotype_csv(&dir.join("phenotypes.csv"), &cohort.phenotypes)?;
    let manifest = CohortManifest::new(LoadOptions::default(), "phenotypes.csv".into(), entries);
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
