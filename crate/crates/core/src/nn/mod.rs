//! Dense and graph neural networks trained with Adam.

pub mod adam;
pub mod checkpoint;
pub mod cluster;
pub mod dropout;
pub mod gcn;
pub mod logreg;
pub mod loss;
pub mod mlp;
pub mod model;
pub mod sparse;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cluster::{
    cluster_gcn_step, cluster_partition, full_batch_step, BalancedRandomPartitioner, ClusterBatch,
    Partitioner, StepOutcome,
};
pub use dropout::dropout_in_place;
pub use gcn::{gcn_backward, gcn_forward, gcn_layer, gcn_layer_backward, masked_bce, Gcn, GcnConfig};
pub use logreg::{train_logreg, LogReg, LogRegConfig, Standardizer};
pub use loss::{bce_backward, bce_loss, sigmoid, sigmoid_bce, BCE_EPS};
pub use mlp::{class1_proba, mlp_backward, mlp_forward, softmax_bce, Mlp, MlpConfig};
pub use model::ModelState;
pub use sparse::SparseRows;
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, sidecar_path, write_checkpoint, CheckpointMeta,
    Checkpointable, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use train::{
    accuracy, threshold_labels, train_gcn, train_gcn_with, train_mlp, EarlyStop, TrainConfig,
    TrainOutcome,
};
