//! Experiment orchestration on top of `dinq`: TOML configs, seeded run
//! matrices, manifests, summary CSVs and SVG charts.

pub mod config;
pub mod error;
pub mod experiment;
pub mod svg;

pub use config::{EnvironmentEntry, ExperimentConfig, ExperimentSection};
pub use dinq::approximator::{load_checkpoint, save_checkpoint};
pub use error::{CliError, Result};
pub use experiment::{rerun_from_manifest, run_experiment, ExperimentManifest};
