//! Experiment runner for Fisher information sketching: scenario runs,
//! density export and multi-seed design comparison tables.

pub mod config;
pub mod experiment;
pub mod run;
pub mod tables;

pub use config::{ConfigError, ScenarioConfig};
pub use run::{emit_density, run_scenario, RunOutput};
pub use tables::{reproduce_tables, Tables, TablesOptions};

/// A numerical error from the model or samplers, as opposed to bad input.
#[derive(Debug, thiserror::Error)]
#[error("numerical failure: {0}")]
pub struct NumericalFailure(#[from] pub fimsketch_core::Error);

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical failures, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        2
    } else if err.chain().any(|e| e.is::<NumericalFailure>()) {
        3
    } else {
        1
    }
}
