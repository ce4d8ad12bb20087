//! Experiment harness: configuration, runs, verification, plots and manifests.

pub mod checks;
pub mod config;
pub mod csvfmt;
pub mod experiments;
pub mod manifest;
pub mod plot;
pub mod verify;

pub use checks::PropertyResult;
pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run, Report};
pub use manifest::{compare_outputs, RunManifest};
pub use plot::emit_plot;
