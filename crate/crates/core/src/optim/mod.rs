//! First-order baselines, the SNGD training step, and an explicit
//! natural-gradient reference step.

mod config;
mod first_order;
mod sngd;
mod train;

pub use config::{OptimizerConfig, OptimizerKind, SngdConfig};
pub use first_order::{apply_step, ngd_reference_step, step_adam, step_sgd, OptimizerState};
pub use sngd::{refresh_all, refresh_due, sngd_train_step, SngdStep};
pub use train::{evaluate, first_order_train_step, train_epoch, EpochMetrics, Evaluation, Model};
