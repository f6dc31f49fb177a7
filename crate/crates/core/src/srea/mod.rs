//! Self-re-labeling training: schedules, loss terms, pseudo-labels, cluster
//! initialization and the training loop.

pub mod kmeans;
pub mod loss;
pub mod relabel;
mod schedule;
mod train;

pub use schedule::{alpha_at, w_at, ScheduleParams};
pub use train::{predict_labels, train, Algorithm, EpochTrace, RunOutput, TrainConfig, TrainData, TrainError};
