//! Losses, oracle targets and the training loop.

mod config;
mod loss;
mod oracle;
mod trainer;

pub use config::TrainConfig;
pub use loss::{label_loss, segment_weight, segmentation_loss, total_loss};
pub use oracle::{build_dynamic_targets, build_static_targets, model_dynamic_targets, SegmentTarget};
pub use trainer::{document_loss, evaluate_model, train, EpochLog, LossNodes, OracleMode, TrainOutcome};
