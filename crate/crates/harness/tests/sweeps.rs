use std::path::Path;

use chemoflux::sweep::{sweep, SweepParam, SweepSpec};
use chemoflux::{load_config, run_scenario};
use chemoflux_core::diagnostics::RunOutcome;

#[test]
fn quadratic_concentrated_data_blows_up_at_both_ends() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quadratic_sweep.json");
    let config = load_config(&path).unwrap();
    for mass in [0.05, 0.5] {
        let mut c = config.clone();
        c.mass = mass;
        let r = run_scenario(&c).unwrap();
        assert!(r.report.thresholds.blowup_condition_met, "M = {mass}: phi0 = {}", r.report.phi0);
        assert_eq!(r.report.run.outcome, RunOutcome::Blowup, "M = {mass}: {}", r.report.run.reason);
        assert!(r.report.run.reason.contains("threshold"), "{}", r.report.run.reason);
    }
    let spec = SweepSpec { param: SweepParam::Mass, bracket: (0.05, 0.5), refinements: 0, iterations: 8 };
    let report = sweep(&config, &spec).unwrap();
    let level = &report.levels[0];
    assert!(!level.bisected);
    assert_eq!(level.probes.len(), 2);
    assert!(level.probes.iter().all(|p| p.outcome == RunOutcome::Blowup));
    assert!(report.estimate.is_none());
}

#[test]
fn coarse_linear_sweep_brackets_a_threshold() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/critical_sweep.json");
    let mut config = load_config(&path).unwrap();
    config.grid.n = 64;
    let spec = SweepSpec { param: SweepParam::Mass, bracket: (0.8, 1.6), refinements: 1, iterations: 5 };
    let report = sweep(&config, &spec).unwrap();
    assert_eq!(report.levels.len(), 2);
    assert_eq!(report.levels[1].n, 128);
    for level in &report.levels {
        assert!(level.bisected && level.monotone);
        let (lo, hi) = (level.lower.unwrap(), level.upper.unwrap());
        assert!(hi - lo <= 0.8 / 32.0 + 1e-12);
        assert!(level.probes.windows(2).all(|w| w[0].value < w[1].value));
    }
    assert!(report.drift.is_some());
    assert!(report.uncertainty.unwrap() >= report.levels[1].half_width.unwrap());
}
