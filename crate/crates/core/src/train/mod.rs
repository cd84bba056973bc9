//! Supervised training of the three residual networks.

pub mod adam;
pub mod backprop;
pub mod config;
pub mod dataset;
mod fit;
pub mod gradcheck;
pub mod loss;

pub use adam::{AdamConfig, AdamState};
pub use backprop::{backward, forward_train, update_running_stats, BatchStats, NetworkGrads, TrainPass};
pub use config::{lr_schedule, LossChoice, TrainConfig};
pub use dataset::{augment, build_dataset, make_example, Dataset, TrainingExample};
pub use fit::{evaluate_loss, trace_csv, train, train_from, EpochRecord, TrainOutcome};
pub use gradcheck::{gradient_check, GradCheck};
pub use loss::{loss_mse, loss_pnorm, Loss};
