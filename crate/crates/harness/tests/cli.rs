use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chemoflux"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("CHEMOFLUX_OUT").output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = r#"{
  "name": "small",
  "problem": {"nonlinearity": {"kind": "signed_power", "m": 1},
              "domain": {"geometry": "interval", "length": 1}},
  "grid": {"n": 64, "ratio": 1.01},
  "mass": 0.8,
  "initial": {"family": "noise", "amplitude": 0.3},
  "seed": 11,
  "stop": {"t_end": 0.2, "snapshot_times": [0.05, 0.1]},
  "record": {"p_list": [2, 3]}
}"#;

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let ts = std::fs::read_to_string(out.join("timeseries.csv")).unwrap();
    assert_eq!(ts.lines().next().unwrap(), "t,dt,mass,entropy,linf,lp_2,lp_3,phi,a,u,c_left,c_right");
    let snaps = std::fs::read_to_string(out.join("snapshots.csv")).unwrap();
    assert_eq!(snaps.lines().count(), 1 + 2 * 64);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["name"], "small");
    assert!(report["run"]["outcome"].is_string());
    assert!(report["thresholds"]["n0"].is_number());
}

#[test]
fn identical_configs_give_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    for dir in ["a", "b"] {
        let out = tmp.path().join(dir);
        let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for file in ["timeseries.csv", "snapshots.csv", "report.json"] {
        let a = std::fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between identical runs");
    }
}

#[test]
fn unknown_key_fails_with_its_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("\"mass\": 0.8", "\"mass\": 0.8, \"viscosity\": 1"));
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("viscosity"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn negative_length_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &SMALL.replace("\"length\": 1", "\"length\": -1"));
    let o = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("length"));
}

#[test]
fn missing_config_file_fails() {
    let o = run(&["run", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let root = tmp.path().join("root");
    let o = bin()
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("CHEMOFLUX_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(root.join("small").join("report.json").exists());
}

#[test]
fn example_configs_load() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            chemoflux::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

#[test]
fn steady_reports_the_common_norm() {
    let o = run(&["steady", "--m", "2", "--L", "1", "--mass", "0.5"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["result"]["kind"], "found");
    let norm = v["result"]["lm_norm"].as_f64().unwrap();
    assert!((norm - 0.5f64.sqrt()).abs() < 1e-8);
    let none = run(&["steady", "--m", "2", "--mass", "0.9"]);
    let v: serde_json::Value = serde_json::from_slice(&none.stdout).unwrap();
    assert_eq!(v["result"]["kind"], "no_solution");
}

#[test]
fn list_presets_names_every_preset() {
    let o = run(&["list-presets"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for p in chemoflux::presets::presets() {
        assert!(text.contains(p.name), "{}", p.name);
    }
}

#[test]
fn check_runs_a_preset() {
    let o = run(&["check", "--preset", "fit_selftest"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS]"));
    assert_eq!(run(&["check", "--preset", "no_such_preset"]).status.code(), Some(1));
}

#[test]
fn degenerate_sweep_reports_without_bisection() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--param", "M", "--bracket", "0.5,0.5",
        "--refine", "0", "--out", tmp.path().join("s").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["levels"][0]["bisected"], false);
    assert!(v["estimate"].is_null());
    assert!(tmp.path().join("s").join("sweep.json").exists());
}
