//! Experiment harness: training pipelines, robustness evaluation, graph
//! inspection and gradient checks.

pub mod attack;
pub mod classify;
pub mod config;
pub mod gradcheck;
pub mod inspect;
pub mod robustness;
pub mod run;
pub mod train;

pub use attack::fgsm_attack;
pub use classify::Classifier;
pub use config::{ExperimentConfig, ObjectiveKind, OptimSettings};
pub use gradcheck::{run_gradcheck, GradcheckReport, GradcheckSettings};
pub use inspect::{graph_inspect, InspectReport};
pub use robustness::{corruption_eval, fgsm_error, relative_mce, Corruption, CorruptionSuite, CorruptionTable};
pub use run::RunRecord;
pub use train::{train_from, train_network, EpochMetrics, Objective, TrainOutcome, TrainSpec};
