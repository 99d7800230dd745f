use std::path::{Path, PathBuf};

use chemoflux::presets::{self, PresetKind};
use chemoflux::sweep::{sweep, SweepParam, SweepSpec};
use chemoflux::{parse_config, run_scenario, schema};
use jsonschema::JSONSchema;
use serde_json::Value;

fn docs(file: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs").join(file)
}

fn shipped(file: &str) -> Value {
    let text = std::fs::read_to_string(docs(file)).unwrap_or_else(|e| panic!("{file}: {e}"));
    serde_json::from_str(&text).unwrap()
}

fn assert_valid(schema: &Value, instance: &Value) {
    let compiled = JSONSchema::compile(schema).expect("schema compiles");
    if let Err(errors) = compiled.validate(instance) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("instance violates schema: {msgs:?}");
    };
}

#[test]
fn shipped_schemas_are_current() {
    assert_eq!(shipped("config.schema.json"), schema::config(), "regenerate with `chemoflux schema config`");
    assert_eq!(shipped("report.schema.json"), schema::report(), "regenerate with `chemoflux schema report`");
    assert_eq!(shipped("sweep.schema.json"), schema::sweep(), "regenerate with `chemoflux schema sweep`");
}

#[test]
fn reports_validate_against_the_shipped_schema() {
    let report_schema = shipped("report.schema.json");
    let config_schema = shipped("config.schema.json");
    let configs = [
        r#"{"problem": {"nonlinearity": {"kind": "signed_power", "m": 1},
                        "domain": {"geometry": "interval", "length": 1}},
            "grid": {"n": 48}, "mass": 1.6, "initial": {"family": "concentration", "k": 3},
            "step": {"blowup_linf_threshold": 200}, "stop": {"t_end": 1}}"#,
        r#"{"problem": {"nonlinearity": {"kind": "negative_power", "m": 2},
                        "domain": {"geometry": "interval", "length": 2}},
            "grid": {"n": 40}, "mass": 1, "initial": {"family": "step", "split": 0.5, "ratio": 3},
            "stop": {"t_end": 20}}"#,
        r#"{"problem": {"nonlinearity": {"kind": "signed_power", "m": 1},
                        "domain": {"geometry": "cylinder", "length": 1, "radius": 0.5, "dim": 3}},
            "grid": {"n": 24, "nr": 4}, "mass": 0.4,
            "initial": {"family": "table", "x": [0, 1], "c": [2, 1]}, "stop": {"t_end": 0.1}}"#,
    ];
    for text in configs {
        let config = parse_config(text).unwrap();
        assert_valid(&config_schema, &serde_json::to_value(&config).unwrap());
        let result = run_scenario(&config).unwrap();
        assert_valid(&report_schema, &serde_json::to_value(&result.report).unwrap());
    }
}

#[test]
fn preset_configs_validate() {
    let config_schema = shipped("config.schema.json");
    for p in presets::presets() {
        if let PresetKind::Run { config, .. } = &p.kind {
            assert_valid(&config_schema, &serde_json::to_value(config).unwrap());
        }
    }
}

#[test]
fn sweep_reports_validate() {
    let config = parse_config(
        r#"{"problem": {"nonlinearity": {"kind": "signed_power", "m": 1},
                        "domain": {"geometry": "interval", "length": 1}},
            "grid": {"n": 32}, "mass": 1, "initial": {"family": "cosine", "amplitude": 0.2},
            "stop": {"t_end": 0.1}}"#,
    )
    .unwrap();
    let spec = SweepSpec { param: SweepParam::Mass, bracket: (0.5, 0.9), refinements: 1, iterations: 2 };
    let report = sweep(&config, &spec).unwrap();
    assert_valid(&shipped("sweep.schema.json"), &serde_json::to_value(&report).unwrap());
}
