//! Configuration files, the reference experiments, CSV output and the
//! self-check suites.

pub mod config;
pub mod experiments;
pub mod output;
pub mod verify;

pub use config::{load_config, parse_config, write_config, ExperimentConfig, ExperimentKind, InitialData};
pub use experiments::{
    beta_sweep, localization_sweep, reproduce_figure, run_experiment, reference_initial_data, RunArtifacts,
    SweepEntry, SweepReport,
};
pub use output::write_files;
pub use verify::{verify, VerifyOptions, VerifyReport};
