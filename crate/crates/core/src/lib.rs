//! Graph pooling, population-graph GCNs and nested cross-validation for
//! classifying subjects from ROI time series.
//!
//! The pieces, bottom up:
//! - [`graph`]: sparse adjacency, feature matrices, normalisation.
//! - [`pooling`]: information-score node selection with sparsemax edge
//!   re-prediction.
//! - [`ingest`]: brain graphs from ROI tables, cohort manifests, synthetic
//!   cohorts.
//! - [`population`]: phenotype encoding and the subject similarity graph.
//! - [`nn`]: MLP, GCN, logistic regression, Adam, checkpoints.
//! - [`eval`]: fold plans, metrics, the end-to-end pipeline.

pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod nn;
pub mod pooling;
pub mod population;
pub mod rng;

pub use error::{Error, Result};
pub use eval::{run_pipeline, FoldPlan, MetricsReport, PipelineConfig, PooledCohort, Stage};
pub use graph::{AdjacencyMatrix, FeatureMatrix};
pub use ingest::{build_brain_graph, synth_cohort, Label, SubjectGraph, SynthConfig};
pub use pooling::{pool, PoolingConfig, PoolingResult, SparseFeatureVector};
pub use population::{PhenotypeRecord, PopulationGraph};
pub use rng::RngStream;
