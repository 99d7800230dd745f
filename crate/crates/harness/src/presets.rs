//! Named scenarios with pass/fail gates, run by `chemoflux check --preset`.

use std::time::Instant;

use chemoflux_core::diagnostics::{fit_blowup, RunOutcome};
use chemoflux_core::problem::Nonlinearity;
use chemoflux_core::solver1d::{Solver1d, StepOptions};
use chemoflux_core::solver_cyl::SolverCyl;
use chemoflux_core::steady::{find_steady, mass_at_zero_rate, mass_of_rate, SteadyOptions, SteadySearch};
use chemoflux_core::{Domain, GridCyl, ProblemSpec};
use serde::Serialize;

use crate::config::{GridConfig, OutputConfig, RunConfig};
use crate::error::{HarnessError, Result};
use crate::initial::InitialData;
use crate::scenario::{run_scenario, ScenarioResult};
use crate::sweep::{sweep, SweepParam, SweepReport, SweepSpec};

/// Mass drift allowed in every preset run.
pub const MASS_TOL: f64 = 1e-12;
/// Accepted steps every preset run must take.
pub const MIN_STEPS: u64 = 10_000;
/// Relative rise of `sup x^(1/m) c` over the resolved phase still read as flat.
pub const PROFILE_TREND_TOL: f64 = 0.01;
/// Wall-clock budget of one preset run, in seconds.
pub const RUN_BUDGET_S: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

fn gate(label: &str, passed: bool, detail: String) -> Gate {
    Gate { label: label.into(), passed, detail }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |v| format!("{v:.6e}"))
}

pub type RunGate = fn(&ScenarioResult) -> Vec<Gate>;

pub enum PresetKind {
    Run { config: Box<RunConfig>, gate: RunGate },
    Check(fn() -> Result<Vec<Gate>>),
}

pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    pub kind: PresetKind,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub preset: String,
    pub gates: Vec<Gate>,
    pub elapsed_s: f64,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.passed)
    }
}

fn interval(
    name: &str,
    f: Nonlinearity,
    n: usize,
    ratio: f64,
    mass: f64,
    initial: InitialData,
) -> RunConfig {
    RunConfig {
        name: name.into(),
        problem: ProblemSpec::new(f, Domain::Interval { length: 1.0 }),
        grid: GridConfig { n, ratio, nr: 1 },
        mass,
        initial,
        step: StepOptions::default(),
        stop: Default::default(),
        record: Default::default(),
        output: OutputConfig::default(),
        seed: 0,
        lyapunov_p: 2.0,
        tstar_slack: 0.1,
    }
}

fn power(m: f64) -> Nonlinearity {
    Nonlinearity::SignedPower { m }
}

fn concentration(k: f64) -> InitialData {
    InitialData::Concentration { k, radial_depth: 0.0 }
}

/// Mass, step count and runtime gates shared by every run preset.
fn run_gates(result: &ScenarioResult, elapsed_s: f64) -> Vec<Gate> {
    let run = &result.report.run;
    vec![
        gate("mass", run.mass_drift <= MASS_TOL, format!("drift {:.3e} over {} steps", run.mass_drift, run.steps)),
        gate("steps", run.steps >= MIN_STEPS, format!("{} accepted steps", run.steps)),
        gate("runtime", elapsed_s < RUN_BUDGET_S, format!("{elapsed_s:.2} s")),
    ]
}

fn outcome_is(result: &ScenarioResult, allowed: &[RunOutcome]) -> Gate {
    let run = &result.report.run;
    gate(
        "outcome",
        allowed.contains(&run.outcome),
        format!("{:?} at t = {:.6e} ({})", run.outcome, run.t_final, run.reason),
    )
}

fn entropy_gate(result: &ScenarioResult) -> Gate {
    let inc = result.report.run.max_entropy_increase;
    gate("entropy", inc.is_some_and(|v| v <= 1e-8), format!("largest per-step increase {}", opt(inc)))
}

fn decay_gate(result: &ScenarioResult) -> Gate {
    let lambda = result.report.run.lambda_fit;
    gate("decay rate", lambda.is_some_and(|l| l > 0.0), format!("lambda = {}", opt(lambda)))
}

fn xc_gate(result: &ScenarioResult) -> Gate {
    let r = result.report.run.xc_max_ratio;
    gate("x c bound", r.is_some_and(|r| r <= 1.0 + 1e-8), format!("max x c / M = {}", opt(r)))
}

fn beta_gate(result: &ScenarioResult) -> Gate {
    let m = result.report.config.problem.nonlinearity.exponent();
    let floor = 1.0 / (2.0 * m) - 0.1;
    let run = &result.report.run;
    gate(
        "rate exponent",
        run.beta_fit.is_some_and(|b| b >= floor),
        format!("beta = {} (floor {floor:.3}), T* fit {}", opt(run.beta_fit), opt(run.tstar_fit)),
    )
}

fn profile_gate(result: &ScenarioResult) -> Gate {
    let run = &result.report.run;
    let growth = run.profile_sup_resolved_max / run.profile_sup_initial;
    gate(
        "profile sup",
        growth <= 1.0 + PROFILE_TREND_TOL,
        format!(
            "resolved max / initial = {growth:.9} (resolved until t = {}, overall max {:.3e})",
            opt(run.t_unresolved),
            run.profile_sup_max
        ),
    )
}

fn tdetect_gate(result: &ScenarioResult) -> Gate {
    let run = &result.report.run;
    let bound = result.report.thresholds.tstar_upper_bound;
    gate(
        "blow-up time",
        run.tdetect_within_bound == Some(true),
        format!("T_detect = {} vs bound {} x 1.1", opt(run.t_detect), opt(bound)),
    )
}

fn gate_critical_below(r: &ScenarioResult) -> Vec<Gate> {
    vec![outcome_is(r, &[RunOutcome::Converged]), decay_gate(r), entropy_gate(r), xc_gate(r)]
}

fn gate_no_blowup_entropy(r: &ScenarioResult) -> Vec<Gate> {
    vec![outcome_is(r, &[RunOutcome::Converged, RunOutcome::Bounded]), entropy_gate(r), xc_gate(r)]
}

fn gate_blowup_linear(r: &ScenarioResult) -> Vec<Gate> {
    let half = r.report.run.half_moment_satisfied == Some(true);
    vec![
        outcome_is(r, &[RunOutcome::Blowup]),
        gate("phi(0) < M L / 2", half, format!("phi0 = {:.6}", r.report.phi0)),
        tdetect_gate(r),
        beta_gate(r),
        xc_gate(r),
        profile_gate(r),
    ]
}

fn gate_blowup_quadratic(r: &ScenarioResult) -> Vec<Gate> {
    vec![outcome_is(r, &[RunOutcome::Blowup]), beta_gate(r), xc_gate(r), profile_gate(r)]
}

fn gate_bounded(r: &ScenarioResult) -> Vec<Gate> {
    vec![outcome_is(r, &[RunOutcome::Converged, RunOutcome::Bounded])]
}

fn gate_converged(r: &ScenarioResult) -> Vec<Gate> {
    vec![outcome_is(r, &[RunOutcome::Converged]), decay_gate(r)]
}

fn gate_small_data(r: &ScenarioResult) -> Vec<Gate> {
    let norms: Vec<f64> = r
        .trajectory
        .records
        .iter()
        .filter_map(|rec| rec.lp_norms.iter().find(|(p, _)| *p == 2.0).map(|&(_, v)| v))
        .collect();
    let radius = r.report.thresholds.small_data_radius.unwrap_or(0.0);
    let max_rise = norms.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let mut gates = gate_converged(r);
    gates.push(gate(
        "small data",
        norms.first().is_some_and(|&n| n < radius),
        format!("||c0||_2 = {:.6} vs radius {radius:.6}", norms.first().copied().unwrap_or(f64::NAN)),
    ));
    gates.push(gate(
        "L2 monotone",
        norms.len() >= 2 && max_rise <= 1e-12,
        format!("largest rise of ||c||_2 between samples {max_rise:.3e} over {} samples", norms.len()),
    ));
    gates
}

fn gate_moment(r: &ScenarioResult) -> Vec<Gate> {
    let res = r.report.run.moment_residual;
    vec![gate("moment identity", res.is_some_and(|v| v <= 1e-3), format!("max residual {}", opt(res)))]
}

fn gate_cylinder(r: &ScenarioResult) -> Vec<Gate> {
    let run = &r.report.run;
    vec![
        outcome_is(r, &[RunOutcome::Blowup]),
        gate(
            "x1 c bound",
            run.x1c_max_ratio.is_some_and(|v| v <= 1.0 + 1e-6),
            format!("max x1 c / M0 = {}", opt(run.x1c_max_ratio)),
        ),
        gate(
            "marginal",
            run.marginal_max_increase.is_some_and(|v| v <= 1e-10),
            format!("largest per-step rise of max marginal / M0 = {}", opt(run.marginal_max_increase)),
        ),
        profile_gate(r),
    ]
}

fn critical_below() -> RunConfig {
    let mut c = interval("critical_below", power(1.0), 512, 1.0, 0.9, concentration(4.0));
    c.step.dt_max = 1e-3;
    c.stop.t_end = 50.0;
    c
}

fn blowup_linear(name: &str, mass: f64, k: f64) -> RunConfig {
    let mut c = interval(name, power(1.0), 512, 1.008, mass, concentration(k));
    c.step.dt_max = 1e-6;
    c.step.blowup_linf_threshold = 1e3;
    c.stop.t_end = 1.0;
    c
}

fn blowup_quadratic() -> RunConfig {
    let mut c = interval("blowup_quadratic", power(2.0), 1024, 1.008, 0.5, concentration(3.0));
    c.step.blowup_linf_threshold = 5e3;
    c.step.blowup_dt_scale = 1e3;
    c.stop.t_end = 1.0;
    c
}

fn subquadratic() -> RunConfig {
    let mut c = interval(
        "subquadratic",
        Nonlinearity::SublinearPower { m: 0.5 },
        256,
        1.0,
        50.0,
        concentration(10.0),
    );
    c.stop.t_end = 2.0;
    c
}

fn repulsive(name: &str, m: f64) -> RunConfig {
    let mut c = interval(name, Nonlinearity::NegativePower { m }, 512, 1.0, 2.0, concentration(4.0));
    c.step.dt_max = 4e-5;
    c.stop.t_end = 10.0;
    c
}

fn small_data_quadratic() -> RunConfig {
    let mut c = interval(
        "small_data_quadratic",
        power(2.0),
        512,
        1.0,
        0.5,
        InitialData::Cosine { amplitude: 0.4, mode: 1 },
    );
    c.step.dt_max = 2e-4;
    c.stop.t_end = 20.0;
    c.stop.sample_every = 1;
    c
}

fn entropy_run(name: &str, mass: f64) -> RunConfig {
    let mut c = interval(name, power(1.0), 512, 1.0, mass, concentration(4.0));
    c.step.dt_max = 1e-4;
    c.stop.t_end = 2.0;
    c
}

/// Moment-identity run; `n` cells with `dt_max = 20 h^2`.
pub fn moment_identity(n: usize) -> RunConfig {
    let mut c = interval(
        "moment_identity",
        power(1.0),
        n,
        1.0,
        0.5,
        InitialData::Cosine { amplitude: 0.2, mode: 1 },
    );
    c.step.dt_max = 20.0 / (n * n) as f64;
    c.stop.t_end = 1.0;
    c.record.moment_t_start = 0.1;
    c
}

fn cylinder_profile() -> RunConfig {
    let mut c = interval(
        "cylinder_profile",
        power(1.0),
        256,
        1.01,
        2.0,
        InitialData::Concentration { k: 1.25, radial_depth: 0.5 },
    );
    c.problem.domain = Domain::Cylinder { length: 1.0, radius: 0.5, dim: 3 };
    c.grid.nr = 12;
    c.step.dt_max = 1e-6;
    c.step.blowup_linf_threshold = 1e3;
    c.step.blowup_dt_scale = 1e3;
    c
}

/// Base config of the critical-mass sweep.
pub fn critical_sweep_config(n: usize) -> RunConfig {
    let mut c = interval("critical_sweep", power(1.0), n, 1.0, 1.0, concentration(4.0));
    c.step.blowup_linf_threshold = 20.0;
    c.stop.t_end = 10.0;
    c.output.write_snapshots = false;
    c
}

/// Critical-mass sweep: bracket `[0.8, 1.6]`, 8 bisections, `N = 512` then 1024.
pub fn critical_sweep() -> Result<SweepReport> {
    let spec = SweepSpec { param: SweepParam::Mass, bracket: (0.8, 1.6), refinements: 1, iterations: 8 };
    sweep(&critical_sweep_config(512), &spec)
}

fn check_critical_sweep() -> Result<Vec<Gate>> {
    let report = critical_sweep()?;
    let est: Vec<Option<f64>> = report.levels.iter().map(|l| l.estimate).collect();
    let coarse = report.levels[0].clone();
    let in_window = matches!((coarse.lower, coarse.upper), (Some(lo), Some(hi)) if lo >= 0.95 && hi <= 1.08);
    let toward_one = match (est[0], est.get(1).copied().flatten()) {
        (Some(a), Some(b)) => (b - 1.0).abs() < (a - 1.0).abs(),
        _ => false,
    };
    Ok(vec![
        gate(
            "threshold at N = 512",
            in_window,
            format!("bracket [{}, {}]", opt(coarse.lower), opt(coarse.upper)),
        ),
        gate(
            "drift toward 1",
            toward_one,
            format!("estimates {} -> {}", opt(est[0]), opt(est.get(1).copied().flatten())),
        ),
        gate("monotone", report.monotone, format!("{} levels", report.levels.len())),
    ])
}

/// Maximal moment residuals at `N` and `2N`.
pub fn moment_refinement(n: usize) -> Result<(f64, f64)> {
    let coarse = run_scenario(&moment_identity(n))?.report.run.moment_residual;
    let fine = run_scenario(&moment_identity(2 * n))?.report.run.moment_residual;
    match (coarse, fine) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(HarnessError::Sweep("moment residual not recorded".into())),
    }
}

fn check_moment_refinement() -> Result<Vec<Gate>> {
    let (coarse, fine) = moment_refinement(512)?;
    Ok(vec![
        gate("residual at N = 512", coarse <= 1e-3, format!("{coarse:.4e}")),
        gate("halving at N = 1024", fine <= 0.5 * coarse, format!("{fine:.4e}, ratio {:.4}", fine / coarse)),
    ])
}

fn check_steady_structure() -> Result<Vec<Gate>> {
    let mut worst: f64 = 0.0;
    for i in 1..=3000 {
        let a = i as f64 * 1e-2;
        worst = worst.max((mass_of_rate(1.0, 1.0, a)? - 1.0).abs());
    }
    let n0 = mass_at_zero_rate(2.0, 1.0);
    let opts = SteadyOptions::default();
    let (mut norm_err, mut found, mut iff_ok): (f64, usize, bool) = (0.0, 0, true);
    for k in 1..=20 {
        let mass = 1.5 * n0 * k as f64 / 20.0;
        let exists = match find_steady(2.0, 1.0, mass, &opts)? {
            SteadySearch::Found(ss) => {
                norm_err = norm_err.max((ss.lm_norm - n0).abs());
                found += 1;
                true
            }
            _ => false,
        };
        iff_ok &= exists == (mass < n0);
    }
    Ok(vec![
        gate("linear mass of rate", worst <= 1e-10, format!("max |M(a) - 1| = {worst:.3e} over a in (0, 30]")),
        gate("quadratic L2 norm", found > 0 && norm_err <= 1e-8, format!("{found} states, max |norm - N0| = {norm_err:.3e}")),
        gate("existence iff M < N0", iff_ok, format!("20-point grid on (0, 1.5 N0], N0 = {n0:.12}")),
    ])
}

/// Largest per-step difference between a `rho`-independent cylinder run and the
/// 1D run over `steps` steps.
pub fn reduction_gap(steps: usize) -> Result<f64> {
    // radius 1/2 in 2D gives a unit cross-section, so both couplings coincide
    let grid = GridCyl::new(1.0, 0.5, 2, 128, 6, 1.02)?;
    let f = power(1.0);
    let opts = StepOptions::default();
    let cyl = SolverCyl::new(grid.clone(), f, opts)?;
    let line = Solver1d::new(grid.axial().clone(), f, opts)?;
    let row = grid.axial().sample_averages(|x| 1.2 + 0.6 * (std::f64::consts::PI * x).cos());
    let mut s1 = line.initial_state(row.clone())?;
    let mut sc = cyl.initial_state((0..grid.nr()).flat_map(|_| row.clone()).collect())?;
    let mut gap: f64 = 0.0;
    for _ in 0..steps {
        let dt = 0.5 * line.adapt_dt(&s1).min(cyl.adapt_dt(&sc));
        s1 = line.step(&s1, dt).map_err(|e| HarnessError::Sweep(e.to_string()))?;
        sc = cyl.step(&sc, dt).map_err(|e| HarnessError::Sweep(e.to_string()))?;
        for r in sc.c.chunks(grid.nx()) {
            for (u, v) in r.iter().zip(&s1.c) {
                gap = gap.max((u - v).abs());
            }
        }
    }
    Ok(gap)
}

fn check_dimensional_reduction() -> Result<Vec<Gate>> {
    let gap = reduction_gap(1000)?;
    Ok(vec![gate("cylinder matches 1D", gap <= 1e-10, format!("max per-step gap {gap:.3e} over 1000 steps"))])
}

/// Worst relative exponent and blow-up time errors of the fit on exact power laws.
pub fn fit_selftest() -> Result<(f64, f64)> {
    let (mut beta_err, mut tstar_err): (f64, f64) = (0.0, 0.0);
    for &(beta, tstar, prefactor) in &[(0.5, 1.0, 1.0), (0.25, 0.3, 2.5), (1.0, 0.0123, 0.1), (0.8, 5.0, 7.0)] {
        let times: Vec<f64> = (0..86).map(|i| tstar * (1.0 - 10f64.powf(-0.1 * i as f64 - 0.5))).collect();
        let linf: Vec<f64> = times.iter().map(|t| prefactor * (tstar - t).powf(-beta)).collect();
        let fit = fit_blowup(&times, &linf)?;
        beta_err = beta_err.max((fit.beta - beta).abs() / beta);
        tstar_err = tstar_err.max((fit.tstar - tstar).abs() / tstar);
    }
    Ok((beta_err, tstar_err))
}

fn check_fit_selftest() -> Result<Vec<Gate>> {
    let (beta_err, tstar_err) = fit_selftest()?;
    Ok(vec![gate(
        "synthetic power laws",
        beta_err <= 1e-6 && tstar_err <= 1e-6,
        format!("max relative error beta {beta_err:.3e}, T* {tstar_err:.3e}"),
    )])
}

pub fn presets() -> Vec<Preset> {
    let run = |config: RunConfig, gate: RunGate| PresetKind::Run { config: Box::new(config), gate };
    vec![
        Preset {
            name: "critical_below",
            summary: "m = 1, M = 0.9, concentrated data: converges, entropy nonincreasing",
            kind: run(critical_below(), gate_critical_below),
        },
        Preset {
            name: "critical_above",
            summary: "m = 1, M = 1.5, phi(0) < M L / 2: blows up before the moment bound",
            kind: run(blowup_linear("critical_above", 1.5, 2.0), gate_blowup_linear),
        },
        Preset {
            name: "blowup_time_bound",
            summary: "m = 1, M = 2, phi(0) = 0.4: blow-up before 1/3, rate exponent",
            kind: run(blowup_linear("blowup_time_bound", 2.0, 1.25), gate_blowup_linear),
        },
        Preset {
            name: "blowup_quadratic",
            summary: "m = 2, M = 0.5, concentrated data: blow-up, rate exponent, profile bound",
            kind: run(blowup_quadratic(), gate_blowup_quadratic),
        },
        Preset {
            name: "subquadratic",
            summary: "f = c^0.5, M = 50, tall narrow bump: no blow-up",
            kind: run(subquadratic(), gate_bounded),
        },
        Preset {
            name: "repulsive_linear",
            summary: "f = -c, M = 2: exponential convergence",
            kind: run(repulsive("repulsive_linear", 1.0), gate_converged),
        },
        Preset {
            name: "repulsive_quadratic",
            summary: "f = -c^2, M = 2: exponential convergence",
            kind: run(repulsive("repulsive_quadratic", 2.0), gate_converged),
        },
        Preset {
            name: "small_data_quadratic",
            summary: "m = 2, ||c0||_2 below the small-data radius: converges, ||c||_2 nonincreasing",
            kind: run(small_data_quadratic(), gate_small_data),
        },
        Preset {
            name: "entropy_subcritical",
            summary: "m = 1, M = 0.5: entropy nonincreasing",
            kind: run(entropy_run("entropy_subcritical", 0.5), gate_no_blowup_entropy),
        },
        Preset {
            name: "entropy_critical",
            summary: "m = 1, M = 1: entropy nonincreasing, no blow-up",
            kind: run(entropy_run("entropy_critical", 1.0), gate_no_blowup_entropy),
        },
        Preset {
            name: "moment_identity",
            summary: "m = 1, M = 0.5, N = 512: moment identity residual below 1e-3",
            kind: run(moment_identity(512), gate_moment),
        },
        Preset {
            name: "cylinder_profile",
            summary: "3D cylinder, m = 1, M = 2: blow-up with x1 c <= M0 and monotone marginal",
            kind: run(cylinder_profile(), gate_cylinder),
        },
        Preset {
            name: "critical_sweep",
            summary: "m = 1 critical-mass bisection at N = 512 and 1024",
            kind: PresetKind::Check(check_critical_sweep),
        },
        Preset {
            name: "moment_refinement",
            summary: "moment identity residual halves from N = 512 to 1024",
            kind: PresetKind::Check(check_moment_refinement),
        },
        Preset {
            name: "steady_structure",
            summary: "1D steady states: mass of rate, L2 norm, existence iff M < N0",
            kind: PresetKind::Check(check_steady_structure),
        },
        Preset {
            name: "dimensional_reduction",
            summary: "rho-independent cylinder run matches the 1D run over 1000 steps",
            kind: PresetKind::Check(check_dimensional_reduction),
        },
        Preset {
            name: "fit_selftest",
            summary: "blow-up fit recovers exact power laws",
            kind: PresetKind::Check(check_fit_selftest),
        },
    ]
}

pub fn find(name: &str) -> Result<Preset> {
    presets().into_iter().find(|p| p.name == name).ok_or_else(|| HarnessError::UnknownPreset(name.into()))
}

/// Runs a preset and evaluates its gates. Run presets also return the scenario.
pub fn check(preset: &Preset) -> Result<(CheckReport, Option<ScenarioResult>)> {
    let start = Instant::now();
    let (gates, result) = match &preset.kind {
        PresetKind::Run { config, gate } => {
            let result = run_scenario(config)?;
            let elapsed = start.elapsed().as_secs_f64();
            let mut gates = run_gates(&result, elapsed);
            gates.extend(gate(&result));
            (gates, Some(result))
        }
        PresetKind::Check(f) => (f()?, None),
    };
    let report = CheckReport {
        preset: preset.name.into(),
        gates,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    Ok((report, result))
}
