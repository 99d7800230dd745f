//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test --test acceptance`; pass criterion numbers to select,
//! e.g. `cargo test --test acceptance -- 3 7`.

use std::collections::BTreeMap;
use std::time::Instant;

use chemoflux::presets::{self, CheckReport, PresetKind, MASS_TOL, MIN_STEPS, PROFILE_TREND_TOL, RUN_BUDGET_S};
use chemoflux::scenario::ScenarioResult;
use chemoflux_core::diagnostics::RunOutcome;
use chemoflux_core::steady::{find_steady, mass_of_rate, SteadyOptions, SteadySearch, SteadyState1D};

type Runs = BTreeMap<&'static str, (CheckReport, ScenarioResult)>;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(checks: Vec<(bool, String)>) -> Verdict {
    let passed = checks.iter().all(|(ok, _)| *ok);
    let detail = checks
        .into_iter()
        .map(|(ok, msg)| if ok { msg } else { format!("FAILED {msg}") })
        .collect::<Vec<_>>()
        .join("; ");
    Verdict { passed, detail }
}

fn run_all_presets() -> Runs {
    let mut runs = Runs::new();
    for p in presets::presets() {
        if matches!(p.kind, PresetKind::Run { .. }) {
            let (report, result) = presets::check(&p).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            runs.insert(p.name, (report, result.expect("run preset returns its scenario")));
        }
    }
    runs
}

fn get<'a>(runs: &'a Runs, name: &str) -> &'a ScenarioResult {
    &runs.get(name).unwrap_or_else(|| panic!("missing preset {name}")).1
}

fn c1_mass(runs: &Runs) -> Verdict {
    let mut checks = Vec::new();
    for (name, (report, result)) in runs {
        let run = &result.report.run;
        checks.push((
            run.mass_drift <= MASS_TOL && run.steps >= MIN_STEPS && report.elapsed_s < RUN_BUDGET_S,
            format!("{name} {:.1e}/{}/{:.1}s", run.mass_drift, run.steps, report.elapsed_s),
        ));
    }
    verdict(checks)
}

fn c2_critical_mass() -> Verdict {
    let start = Instant::now();
    let report = match presets::critical_sweep() {
        Ok(r) => r,
        Err(e) => return verdict(vec![(false, format!("sweep error {e}"))]),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let (l0, l1) = (&report.levels[0], &report.levels[1]);
    let (lo, hi) = (l0.lower.unwrap_or(f64::NAN), l0.upper.unwrap_or(f64::NAN));
    let (e0, e1) = (l0.estimate.unwrap_or(f64::NAN), l1.estimate.unwrap_or(f64::NAN));
    verdict(vec![
        (lo >= 0.95 && hi <= 1.08, format!("N = {} bracket [{lo:.5}, {hi:.5}]", l0.n)),
        (
            (e1 - 1.0).abs() < (e0 - 1.0).abs(),
            format!("N = {} estimate {e1:.5} vs {e0:.5}", l1.n),
        ),
        (report.monotone, "monotone".into()),
        (elapsed < 300.0, format!("{elapsed:.0} s")),
    ])
}

fn c3_blowup_time(runs: &Runs) -> Verdict {
    let (report, r) = &runs["blowup_time_bound"];
    let run = &r.report.run;
    let (mass, phi0) = (r.report.config.mass, r.report.phi0);
    // m = 1, L = 1: T* <= phi0 / ((M - 1)(M - 2 phi0))
    let bound = phi0 / ((mass - 1.0) * (mass - 2.0 * phi0));
    let t = run.t_detect.unwrap_or(f64::INFINITY);
    verdict(vec![
        (run.outcome == RunOutcome::Blowup, format!("{:?}", run.outcome)),
        ((phi0 - 0.4).abs() < 1e-4 && (bound - 1.0 / 3.0).abs() < 1e-4, format!("phi0 {phi0:.6}, bound {bound:.6}")),
        (t <= (1.0 / 3.0) * 1.10, format!("T_detect {t:.6e}")),
        (report.elapsed_s < 60.0, format!("{:.1} s", report.elapsed_s)),
    ])
}

fn c4_moment(runs: &Runs) -> Verdict {
    let base = get(runs, "moment_identity").report.run.moment_residual.unwrap_or(f64::INFINITY);
    let (coarse, fine) = presets::moment_refinement(512).unwrap_or((f64::INFINITY, f64::INFINITY));
    verdict(vec![
        (base <= 1e-3 && coarse == base, format!("N = 512 residual {base:.3e}")),
        (fine <= 0.5 * coarse, format!("N = 1024 residual {fine:.3e} (ratio {:.3})", fine / coarse)),
    ])
}

fn c5_entropy(runs: &Runs) -> Verdict {
    let mut checks = Vec::new();
    for name in ["entropy_subcritical", "critical_below", "entropy_critical"] {
        let r = get(runs, name);
        let inc = r.report.run.max_entropy_increase.unwrap_or(f64::INFINITY);
        checks.push((inc <= 1e-8, format!("M = {} max increase {inc:.2e}", r.report.config.mass)));
    }
    verdict(checks)
}

/// Composite Simpson integral of `f` over `(0, 1)`.
fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

fn c6_steady() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 1..=3000 {
        let a = i as f64 * 1e-2;
        worst = worst.max((mass_of_rate(1.0, 1.0, a).unwrap() - 1.0).abs());
    }
    let n0 = 2f64.powf(-0.5);
    let (mut norm_err, mut quad_err, mut found, mut iff): (f64, f64, usize, bool) = (0.0, 0.0, 0, true);
    for k in 1..=20 {
        let mass = 1.5 * n0 * k as f64 / 20.0;
        let exists = match find_steady(2.0, 1.0, mass, &SteadyOptions::default()).unwrap() {
            SteadySearch::Found(ss) => {
                found += 1;
                norm_err = norm_err.max((ss.lm_norm - n0).abs());
                quad_err = quad_err.max(quadrature_check(&ss, mass, n0));
                true
            }
            _ => false,
        };
        iff &= exists == (mass < n0);
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(vec![
        (worst <= 1e-10, format!("max |M(a) - 1| {worst:.1e}")),
        (found > 0 && norm_err <= 1e-8, format!("{found} quadratic states, max | ||c||_2 - N0 | {norm_err:.1e}")),
        (quad_err <= 1e-6, format!("quadrature of profiles {quad_err:.1e}")),
        (iff, "existence iff M < N0 on 20 masses".into()),
        (elapsed < 5.0, format!("{elapsed:.2} s")),
    ])
}

/// Mass and `L^2` norm of the profile by quadrature, against the targets.
fn quadrature_check(ss: &SteadyState1D, mass: f64, n0: f64) -> f64 {
    let m = simpson(|x| ss.value(x), 20_000);
    let l2 = simpson(|x| ss.value(x).powi(2), 20_000).sqrt();
    ((m - mass).abs() / mass).max((l2 - n0).abs() / n0)
}

fn c7_profile(runs: &Runs) -> Verdict {
    let mut checks = Vec::new();
    for (name, (_, r)) in runs {
        let run = &r.report.run;
        if let Some(ratio) = run.xc_max_ratio.filter(|_| run.monotone_initial) {
            checks.push((ratio <= 1.0 + 1e-8, format!("{name} xc/M {ratio:.6}")));
        }
        if let Some(ratio) = run.x1c_max_ratio {
            checks.push((ratio <= 1.0 + 1e-6, format!("{name} x1c/M0 {ratio:.6}")));
        }
        if run.outcome == RunOutcome::Blowup {
            let growth = run.profile_sup_resolved_max / run.profile_sup_initial;
            checks.push((growth <= 1.0 + PROFILE_TREND_TOL, format!("{name} profile sup x{growth:.5}")));
        }
    }
    verdict(checks)
}

fn c8_rate(runs: &Runs) -> Verdict {
    let mut checks = Vec::new();
    for name in ["critical_above", "blowup_time_bound", "blowup_quadratic"] {
        let r = get(runs, name);
        let m = r.report.config.problem.nonlinearity.exponent();
        let beta = r.report.run.beta_fit.unwrap_or(f64::NAN);
        checks.push((beta >= 1.0 / (2.0 * m) - 0.1, format!("{name} (m = {m}) beta {beta:.4}")));
    }
    let (beta_err, tstar_err) = presets::fit_selftest().unwrap_or((f64::INFINITY, f64::INFINITY));
    checks.push((beta_err <= 1e-6 && tstar_err <= 1e-6, format!("synthetic fit error {beta_err:.1e}/{tstar_err:.1e}")));
    verdict(checks)
}

fn c9_global(runs: &Runs) -> Verdict {
    let mut checks = Vec::new();
    let sub = &get(runs, "subquadratic").report.run;
    checks.push((sub.outcome == RunOutcome::Bounded, format!("m = 0.5 {:?}", sub.outcome)));
    for name in ["repulsive_linear", "repulsive_quadratic", "small_data_quadratic"] {
        let run = &get(runs, name).report.run;
        let lambda = run.lambda_fit.unwrap_or(f64::NAN);
        checks.push((run.outcome == RunOutcome::Converged && lambda > 0.0, format!("{name} {:?} lambda {lambda:.3}", run.outcome)));
    }
    let small = get(runs, "small_data_quadratic");
    let norms: Vec<f64> = small.trajectory.records.iter().map(|r| r.lp_norms[0].1).collect();
    // m = p = 2 on a unit interval: K0 = 2, radius 2^(-1/2)
    let radius = 2f64.powf(-0.5);
    checks.push((norms[0] < radius, format!("||c0||_2 {:.4} < {radius:.4}", norms[0])));
    let rise = norms.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    checks.push((rise <= 1e-12, format!("||c||_2 largest rise {rise:.1e}")));
    verdict(checks)
}

fn c10_reduction() -> Verdict {
    let gap = presets::reduction_gap(1000).unwrap_or(f64::INFINITY);
    verdict(vec![(gap <= 1e-10, format!("max per-step gap {gap:.2e} over 1000 steps"))])
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |k: usize| selected.is_empty() || selected.contains(&k);
    let needs_runs = [1, 3, 4, 5, 7, 8, 9].iter().any(|&k| wanted(k));
    let runs = if needs_runs { run_all_presets() } else { Runs::new() };

    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        (1, "mass conservation", Box::new(|| c1_mass(&runs))),
        (2, "critical mass", Box::new(c2_critical_mass)),
        (3, "blow-up time bound", Box::new(|| c3_blowup_time(&runs))),
        (4, "moment identity", Box::new(|| c4_moment(&runs))),
        (5, "entropy monotonicity", Box::new(|| c5_entropy(&runs))),
        (6, "steady-state structure", Box::new(c6_steady)),
        (7, "profile bounds", Box::new(|| c7_profile(&runs))),
        (8, "rate exponent", Box::new(|| c8_rate(&runs))),
        (9, "global regimes", Box::new(|| c9_global(&runs))),
        (10, "dimensional reduction", Box::new(c10_reduction)),
    ];
    let mut failed = 0;
    for (k, label, check) in criteria {
        if !wanted(k) {
            continue;
        }
        let v = check();
        println!("[{}] criterion {k:>2} {label}: {}", if v.passed { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all selected acceptance criteria passed");
}
