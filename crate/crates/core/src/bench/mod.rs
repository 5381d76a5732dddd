//! Parameter and FLOP accounting, scaling fits, the synthetic forecasting
//! harness, run reports and the command-line front end.

pub mod accounting;
pub mod cli;
pub mod data;
pub mod model;
pub mod report;
pub mod scaling;
pub mod train;

pub use accounting::{count_flops, count_params, FlopLedger, ModelConfig, ParamCounts, Variant};
pub use data::{generate_sine, SineDatasetSpec};
pub use scaling::fit_scaling_exponent;
pub use train::{train, TrainConfig, TrainingReport};
