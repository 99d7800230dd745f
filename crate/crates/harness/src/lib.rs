//! Scenario runner, threshold sweeps, presets and file output for
//! `chemoflux-core`.

pub mod config;
pub mod error;
pub mod initial;
pub mod presets;
pub mod scenario;
pub mod sweep;

pub use config::{load_config, parse_config, RunConfig};
pub use error::{HarnessError, Result};
pub use scenario::{run_scenario, write_outputs, ScenarioReport, ScenarioResult};
pub use sweep::{sweep, SweepReport, SweepSpec};

/// JSON schemas of the config and of the emitted reports.
pub mod schema {
    use schemars::schema_for;

    pub fn config() -> serde_json::Value {
        serde_json::to_value(schema_for!(crate::config::RunConfig)).expect("schema serializes")
    }

    pub fn report() -> serde_json::Value {
        serde_json::to_value(schema_for!(crate::scenario::ScenarioReport)).expect("schema serializes")
    }

    pub fn sweep() -> serde_json::Value {
        serde_json::to_value(schema_for!(crate::sweep::SweepReport)).expect("schema serializes")
    }
}
