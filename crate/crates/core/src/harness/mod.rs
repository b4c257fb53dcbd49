//! Experiment orchestration: configuration, the common model interface,
//! metric tables, experiment drivers and the command-line front end.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod metrics;
pub mod model;

pub use config::{Experiment, ExperimentConfig};
pub use experiments::{
    benchmark_inference, eval_one_step, eval_rollouts, export_embeddings, kernel_profile_report, run,
    sweep_robustness, sweep_zero_shot,
};
pub use metrics::{Manifest, MetricsTable, RunMetrics};
pub use model::{train_model, FhrrModel, ModelKind, ModelTraining, TrainedModel, WorldModel};
