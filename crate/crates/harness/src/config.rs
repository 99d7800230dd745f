//! Run configuration: the JSON document accepted by `chemoflux run`.

use std::path::{Path, PathBuf};

use chemoflux_core::diagnostics::RecordSettings;
use chemoflux_core::solver1d::{StepOptions, StopCriteria};
use chemoflux_core::ProblemSpec;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::initial::InitialData;

/// Environment variable overriding the output root of every run.
pub const OUT_ROOT_VAR: &str = "CHEMOFLUX_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Axial cells.
    pub n: usize,
    /// Geometric width ratio of neighbouring axial cells; 1 is uniform.
    #[serde(default = "one")]
    pub ratio: f64,
    /// Radial cells (cylinder only).
    #[serde(default = "default_nr")]
    pub nr: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; relative paths resolve against the output root.
    pub dir: Option<PathBuf>,
    pub write_timeseries: bool,
    pub write_snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, write_timeseries: true, write_snapshots: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: ProblemSpec,
    pub grid: GridConfig,
    /// Total mass of the initial data.
    pub mass: f64,
    pub initial: InitialData,
    #[serde(default)]
    pub step: StepOptions,
    #[serde(default)]
    pub stop: StopCriteria,
    #[serde(default)]
    pub record: RecordSettings,
    #[serde(default)]
    pub output: OutputConfig,
    /// Seed of the random perturbation families.
    #[serde(default)]
    pub seed: u64,
    /// Exponent `p` of the Lyapunov constants in the threshold report.
    #[serde(default = "two")]
    pub lyapunov_p: f64,
    /// Relative slack on the blow-up time bound check.
    #[serde(default = "default_slack")]
    pub tstar_slack: f64,
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

fn default_nr() -> usize {
    8
}

fn default_name() -> String {
    "run".into()
}

fn default_slack() -> f64 {
    0.1
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |key: &str, msg: String| Err(HarnessError::Invalid { key: key.into(), msg });
        self.problem.validate().map_err(|e| HarnessError::Invalid { key: "problem".into(), msg: e.to_string() })?;
        if self.grid.n < 2 {
            return invalid("grid.n", format!("need at least 2 cells, got {}", self.grid.n));
        }
        if !(self.grid.ratio.is_finite() && self.grid.ratio > 0.0) {
            return invalid("grid.ratio", format!("must be positive, got {}", self.grid.ratio));
        }
        if self.grid.nr == 0 {
            return invalid("grid.nr", "need at least 1 radial cell".into());
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return invalid("mass", format!("must be positive, got {}", self.mass));
        }
        self.initial.validate(self.problem.domain.length())?;
        self.step.validate().map_err(|e| HarnessError::Invalid { key: "step".into(), msg: e.to_string() })?;
        self.stop.validate().map_err(|e| HarnessError::Invalid { key: "stop".into(), msg: e.to_string() })?;
        if self.record.p_list.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return invalid("record.p_list", "every p must be finite and >= 1".into());
        }
        if !(self.lyapunov_p.is_finite() && self.lyapunov_p > 1.0) {
            return invalid("lyapunov_p", format!("must exceed 1, got {}", self.lyapunov_p));
        }
        if !(self.tstar_slack >= 0.0) {
            return invalid("tstar_slack", "must be >= 0".into());
        }
        Ok(())
    }

    /// Output directory after applying the `CHEMOFLUX_OUT` root override.
    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        if let Some(dir) = cli_override {
            return dir.to_path_buf();
        }
        let rel = self.output.dir.clone().unwrap_or_else(|| PathBuf::from(&self.name));
        match std::env::var_os(OUT_ROOT_VAR) {
            Some(root) if rel.is_relative() => PathBuf::from(root).join(rel),
            Some(root) => PathBuf::from(root).join(rel.file_name().unwrap_or(rel.as_os_str())),
            None if rel.is_relative() => PathBuf::from("runs").join(rel),
            None => rel,
        }
    }
}

/// Parses and validates a config from JSON text.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        HarnessError::Parse { key, msg: e.into_inner().to_string() }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io { path: path.to_path_buf(), source: e })?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "problem": {"nonlinearity": {"kind": "signed_power", "m": 1},
                    "domain": {"geometry": "interval", "length": 1}},
        "grid": {"n": 128},
        "mass": 0.5,
        "initial": {"family": "constant"}
    }"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.ratio, 1.0);
        assert_eq!(c.step, StepOptions::default());
        assert_eq!(c.stop, StopCriteria::default());
        assert_eq!(c.record.p_list, vec![2.0]);
        assert_eq!(c.name, "run");
    }

    #[test]
    fn negative_length_rejected() {
        let text = MINIMAL.replace("\"length\": 1", "\"length\": -1");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("length"), "{err}");
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"mass\": 0.5", "\"mass\": 0.5, \"viscosity\": 2");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("viscosity"), "{err}");
    }

    #[test]
    fn nested_unknown_key_is_named() {
        let text = MINIMAL.replace("\"n\": 128", "\"n\": 128, \"spacing\": 2");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("spacing"), "{err}");
        assert!(err.to_string().contains("grid"), "{err}");
    }

    #[test]
    fn round_trips_through_json() {
        let c = parse_config(MINIMAL).unwrap();
        let back = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }
}
