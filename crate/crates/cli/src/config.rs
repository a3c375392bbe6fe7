//! TOML run configuration. Relative paths resolve against the file's
//! directory; command-line flags override file values.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sagcn_core::eval::{
    FoldPlan, GcnSettings, LrSettings, MlpSettings, PipelineConfig, PopulationSettings, Stage,
};
use sagcn_core::pooling::PoolingConfig;
use serde::{Deserialize, Serialize};

use crate::commands::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub pooled: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub pooling: PoolingConfig,
    pub folds: FoldPlan,
    pub population: PopulationSettings,
    pub mlp: MlpSettings,
    pub gcn: GcnSettings,
    pub lr: LrSettings,
    pub stages: Vec<Stage>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            manifest: None,
            pooled: None,
            out: None,
            jobs: None,
            pooling: p.pooling,
            folds: p.folds,
            population: p.population,
            mlp: p.mlp,
            gcn: p.gcn,
            lr: p.lr,
            stages: p.stages,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.pooled, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn manifest(&self) -> Result<&Path> {
        let p = self
            .manifest
            .as_deref()
            .ok_or_else(|| UsageError("no manifest given (--manifest or `manifest` in config)".into()))?;
        if !p.is_file() {
            return Err(UsageError(format!("manifest {} not found", p.display())).into());
        }
        Ok(p)
    }

    pub fn pooled(&self) -> Result<&Path> {
        let p = self
            .pooled
            .as_deref()
            .ok_or_else(|| UsageError("no pooled directory given (--pooled or `pooled` in config)".into()))?;
        if !p.is_dir() {
            return Err(UsageError(format!("pooled directory {} not found", p.display())).into());
        }
        Ok(p)
    }

    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError("no output directory given (--out or `out` in config)".into()).into())
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            pooling: self.pooling,
            folds: self.folds,
            population: self.population,
            mlp: self.mlp.clone(),
            gcn: self.gcn.clone(),
            lr: self.lr,
            stages: self.stages.clone(),
        }
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }
}
