//! Experiment runner: versioned configs, presets that regenerate the
//! figure data as long-format CSV, and a regression comparator.

pub mod compare;
pub mod config;
pub mod measure;
pub mod output;
pub mod presets;

pub use config::ExperimentConfig;
pub use output::Results;
