//! Cross-validation, metrics and selection-frequency analysis.

pub mod cv;
pub mod frequency;
pub mod metrics;
pub mod pipeline;

pub use cv::{complement, kfold_split, FoldPlan, InnerFold, OuterFold};
pub use frequency::{
    selection_frequencies, EdgeFrequency, NodeFrequency, SelectionFrequencyTable, SelectionRecord,
    DEFAULT_TOP_M,
};
pub use metrics::{
    roc_auc, roc_curve, write_predictions_csv, write_roc_csv, Aggregate, Confusion, FoldMetrics,
    MetricsReport, Prediction, StageReport, Summary, METRICS_SCHEMA_VERSION,
};
pub use pipeline::{
    pool_cohort, run_pipeline, FoldArtifacts, FoldSink, FoldTraining, GcnSettings, LrSettings,
    MlpSettings, PipelineConfig, PipelineOutput, PooledCohort, PopulationSettings, Stage, with_jobs,
};
