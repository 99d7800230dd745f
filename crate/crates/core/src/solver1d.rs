//! IMEX finite-volume solver for `c_t = (c_x - a(t) c)_x` on `(0, L)` with zero
//! total flux at both ends and `a(t) = f(c(L,t)) - f(c(0,t))`.
//!
//! One step: the coupling `a` is resolved from the boundary traces of the
//! current field, the advective flux `-a c_upwind` is applied explicitly and the
//! diffusive flux implicitly through one tridiagonal solve. Both end faces carry
//! zero flux, so the cell sums telescope and mass is conserved to roundoff.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{RecordSettings, RunMonitor, RunOutcome, RunReport, Snapshot, Trajectory};
use crate::error::{Error, Result};
use crate::grid::{Grid1D, Mesh};
use crate::problem::Nonlinearity;
use crate::tridiag::diffuse_implicit;

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Damped fixed-point iteration on `a` within the step.
    Picard,
    /// Single evaluation at the previous coupling value.
    Lagged,
    /// `a = 0`: plain heat flow, used as a reference.
    Off,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    /// One-sided closure of `c_x = a c` at each end.
    Robin,
    /// Boundary cell values.
    Cell,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepOptions {
    pub coupling_mode: CouplingMode,
    pub trace_mode: TraceMode,
    pub picard_tol: f64,
    pub picard_max_iters: usize,
    pub picard_damping: f64,
    pub cfl: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    pub blowup_linf_threshold: f64,
    /// `C_bu` in the blow-up clamp `dt <= C_bu / (1 + ||c||_inf^(2m))`.
    pub blowup_dt_scale: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            coupling_mode: CouplingMode::Picard,
            trace_mode: TraceMode::Robin,
            picard_tol: 1e-12,
            picard_max_iters: 100,
            picard_damping: 0.5,
            cfl: 0.4,
            dt_max: 1e-2,
            dt_min: 1e-14,
            blowup_linf_threshold: 1e8,
            blowup_dt_scale: 0.1,
        }
    }
}

impl StepOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return bad(format!("cfl must lie in (0,1), got {}", self.cfl));
        }
        if !(self.dt_min > 0.0 && self.dt_min < self.dt_max && self.dt_max.is_finite()) {
            return bad(format!(
                "need 0 < dt_min < dt_max, got dt_min={}, dt_max={}",
                self.dt_min, self.dt_max
            ));
        }
        if !(self.picard_tol > 0.0) || self.picard_max_iters == 0 {
            return bad("picard_tol and picard_max_iters must be positive".into());
        }
        if !(self.picard_damping > 0.0 && self.picard_damping <= 1.0) {
            return bad(format!("picard_damping must lie in (0,1], got {}", self.picard_damping));
        }
        if !(self.blowup_linf_threshold > 0.0) || !(self.blowup_dt_scale > 0.0) {
            return bad("blow-up threshold and dt scale must be positive".into());
        }
        Ok(())
    }
}

/// Reasons a proposed step is refused; the caller shrinks `dt` and retries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepRejection {
    #[error("advective CFL violated: dt must not exceed {dt_limit:e}")]
    Cfl { dt_limit: f64 },
    #[error("coupling iteration stalled after {iterations} iterations (last change {last_change:e})")]
    PicardStalled { iterations: usize, last_change: f64 },
    #[error("implicit diffusion solve failed")]
    SingularSystem,
    #[error("non-finite value produced")]
    NonFinite,
}

/// Boundary values used to evaluate the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Traces {
    pub left: f64,
    pub right: f64,
    /// The Robin closure was unsafe at this end and the cell value was used.
    pub left_fallback: bool,
    pub right_fallback: bool,
}

impl Traces {
    pub fn fell_back(&self) -> bool {
        self.left_fallback || self.right_fallback
    }
}

/// Reconstructs `(c(0), c(L))` from the boundary cells.
///
/// Robin mode solves `(c_1 - c_left)/(h_1/2) = a c_left` and
/// `(c_right - c_N)/(h_N/2) = a c_right`. When `|a| h/2 >= 0.5` at an end the
/// closure is abandoned there in favour of the cell value.
pub fn reconstruct_traces(c: &[f64], widths: &[f64], a: f64, mode: TraceMode) -> Traces {
    let n = c.len();
    let (first, last) = (c[0], c[n - 1]);
    match mode {
        TraceMode::Cell => Traces { left: first, right: last, ..Traces::default() },
        TraceMode::Robin => {
            let (sl, sr) = (0.5 * a * widths[0], 0.5 * a * widths[n - 1]);
            let left_fallback = sl.abs() >= 0.5;
            let right_fallback = sr.abs() >= 0.5;
            Traces {
                left: if left_fallback { first } else { first / (1.0 + sl) },
                right: if right_fallback { last } else { last / (1.0 - sr) },
                left_fallback,
                right_fallback,
            }
        }
    }
}

/// Iterations without a smaller residual after which the coupling iteration
/// is declared stalled.
const STALL_ITERS: usize = 8;

/// Outcome of resolving the coupling for a fixed field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub a: f64,
    pub iterations: usize,
    pub fallback: bool,
}

/// Resolves `a = g(a)` according to `opts.coupling_mode`, where `g` maps a trial
/// coupling to `f(trace_right) - f(trace_left)` (summed over the cross-section
/// on the cylinder) and reports whether any trace fell back.
pub fn resolve_coupling(
    opts: &StepOptions,
    a_guess: f64,
    mut g: impl FnMut(f64) -> std::result::Result<(f64, bool), StepRejection>,
) -> std::result::Result<Coupling, StepRejection> {
    match opts.coupling_mode {
        CouplingMode::Off => Ok(Coupling { a: 0.0, iterations: 0, fallback: false }),
        CouplingMode::Lagged => {
            let (a, fallback) = g(a_guess)?;
            Ok(Coupling { a, iterations: 1, fallback })
        }
        CouplingMode::Picard => {
            // damped steps until two residuals are known, then secant steps on
            // a - g(a); plain damping diverges once g' > 1, which the Robin
            // closure produces on coarse grids
            let w = opts.picard_damping;
            let mut a = a_guess;
            let mut prev: Option<(f64, f64)> = None;
            let mut last_change = f64::INFINITY;
            let (mut best, mut best_at) = (f64::INFINITY, 0);
            for it in 1..=opts.picard_max_iters {
                let (target, fallback) = g(a)?;
                let r = target - a;
                if r.abs() < best {
                    (best, best_at) = (r.abs(), it);
                } else if it - best_at >= STALL_ITERS {
                    return Err(StepRejection::PicardStalled { iterations: it, last_change });
                }
                let mut next = a + w * r;
                if let Some((a_prev, r_prev)) = prev {
                    let secant = a - r * (a - a_prev) / (r - r_prev);
                    if r != r_prev && secant.is_finite() {
                        next = secant;
                    }
                }
                if !next.is_finite() {
                    return Err(StepRejection::NonFinite);
                }
                last_change = (next - a).abs();
                prev = Some((a, r));
                a = next;
                if last_change <= opts.picard_tol * a.abs().max(1.0) {
                    return Ok(Coupling { a, iterations: it, fallback });
                }
            }
            Err(StepRejection::PicardStalled { iterations: opts.picard_max_iters, last_change })
        }
    }
}

/// Explicit first-order upwind update for the advective flux `-a c`, with zero
/// flux through both end faces. `out` receives the updated cell averages.
pub fn advect_explicit(widths: &[f64], c: &[f64], a: f64, dt: f64, out: &mut [f64]) {
    let n = c.len();
    out.copy_from_slice(c);
    if a == 0.0 {
        return;
    }
    // flux through face i+1/2 is -a * c_upwind
    for i in 0..n - 1 {
        let upwind = if a > 0.0 { c[i] } else { c[i + 1] };
        let flux = -a * upwind * dt;
        out[i] += flux / widths[i];
        out[i + 1] -= flux / widths[i + 1];
    }
}

/// Backward-Euler diffusion along an axial line with zero end fluxes.
pub fn diffuse_axial(grid: &Grid1D, c: &[f64], dt: f64) -> Option<Vec<f64>> {
    let conductance: Vec<f64> = grid.spacings().iter().map(|d| dt / d).collect();
    diffuse_implicit(grid.widths(), &conductance, c)
}

/// Evolving solution on the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub c: Vec<f64>,
    pub t: f64,
    /// Coupling evaluated for the current field.
    pub a: f64,
    pub traces: Traces,
    pub step_count: u64,
}

/// Stop, sampling and convergence settings for a run.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopCriteria {
    pub t_end: f64,
    /// `||c - mean||_inf` below this classifies the run as converged.
    pub converge_tol: f64,
    /// Record a sample every this many accepted steps.
    pub sample_every: usize,
    /// Also record whenever `||c||_inf` grew by this factor since the last sample.
    pub sample_growth: f64,
    /// Also record once this much time passed since the last sample; 0 means
    /// `t_end / 256`.
    pub sample_interval: f64,
    pub snapshot_times: Vec<f64>,
    pub max_steps: u64,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            t_end: 1.0,
            converge_tol: 1e-8,
            sample_every: 100,
            sample_growth: 1.1,
            sample_interval: 0.0,
            snapshot_times: Vec::new(),
            max_steps: 50_000_000,
        }
    }
}

impl StopCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {}", self.t_end)));
        }
        if !(self.converge_tol >= 0.0) {
            return Err(Error::Config("converge_tol must be >= 0".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be >= 1".into()));
        }
        if !(self.sample_interval >= 0.0) {
            return Err(Error::Config("sample_interval must be >= 0".into()));
        }
        if !(self.sample_growth > 1.0) {
            return Err(Error::Config("sample_growth must exceed 1".into()));
        }
        Ok(())
    }
}

/// Solver for the 1D problem on a fixed grid.
#[derive(Debug, Clone)]
pub struct Solver1d {
    pub grid: Grid1D,
    pub f: Nonlinearity,
    pub opts: StepOptions,
}

impl Solver1d {
    pub fn new(grid: Grid1D, f: Nonlinearity, opts: StepOptions) -> Result<Self> {
        f.validate()?;
        opts.validate()?;
        Ok(Solver1d { grid, f, opts })
    }

    fn eval_f(&self, s: f64) -> std::result::Result<f64, StepRejection> {
        // negative traces can only appear through roundoff on nonnegative data
        self.f.eval(s).or_else(|_| self.f.eval(s.max(0.0))).map_err(|_| StepRejection::NonFinite)
    }

    /// Boundary traces of `c` for the trial coupling `a_guess`.
    pub fn reconstruct_traces(&self, c: &[f64], a_guess: f64) -> Traces {
        reconstruct_traces(c, self.grid.widths(), a_guess, self.opts.trace_mode)
    }

    /// Resolves `a = f(c_right(a)) - f(c_left(a))` for the field `c`, starting
    /// from `a_guess`. If the iteration stalls (the closed traces need not admit
    /// a fixed point on coarse cells or far from equilibrium) the cell values
    /// are used and the coupling is flagged as a fallback.
    pub fn compute_a(
        &self,
        c: &[f64],
        a_guess: f64,
    ) -> std::result::Result<(Coupling, Traces), StepRejection> {
        let resolved = resolve_coupling(&self.opts, a_guess, |a| {
            let tr = self.reconstruct_traces(c, a);
            Ok((self.eval_f(tr.right)? - self.eval_f(tr.left)?, tr.fell_back()))
        });
        match resolved {
            Ok(coupling) => Ok((coupling, self.reconstruct_traces(c, coupling.a))),
            Err(StepRejection::PicardStalled { iterations, .. }) => {
                let tr = reconstruct_traces(c, self.grid.widths(), 0.0, TraceMode::Cell);
                let a = self.eval_f(tr.right)? - self.eval_f(tr.left)?;
                let traces = Traces { left_fallback: true, right_fallback: true, ..tr };
                Ok((Coupling { a, iterations, fallback: true }, traces))
            }
            Err(e) => Err(e),
        }
    }

    /// Validates `c0` and attaches its coupling.
    pub fn initial_state(&self, c0: Vec<f64>) -> Result<State> {
        if c0.len() != self.grid.len() {
            return Err(Error::Shape { expected: self.grid.len(), got: c0.len() });
        }
        if let Some(v) = c0.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("initial data must be finite and >= 0, found {v}")));
        }
        let (coupling, traces) = self
            .compute_a(&c0, 0.0)
            .map_err(|e| Error::Numerical(format!("initial coupling: {e}")))?;
        Ok(State { c: c0, t: 0.0, a: coupling.a, traces, step_count: 0 })
    }

    /// Largest admissible step: `min(dt_max, cfl h_min / |a|, C_bu / (1 + ||c||_inf^(2m)))`.
    pub fn adapt_dt(&self, state: &State) -> f64 {
        let linf = state.c.iter().copied().fold(0.0, f64::max);
        adaptive_dt(&self.opts, self.grid.h_min(), state.a, linf, self.f.exponent())
    }

    /// Advances `state` by `dt`. The returned state carries the coupling of the
    /// new field.
    pub fn step(&self, state: &State, dt: f64) -> std::result::Result<State, StepRejection> {
        let limit = self.opts.cfl * self.grid.h_min() / state.a.abs().max(1e-12);
        if dt > limit {
            return Err(StepRejection::Cfl { dt_limit: limit });
        }
        let mut advected = vec![0.0; state.c.len()];
        advect_explicit(self.grid.widths(), &state.c, state.a, dt, &mut advected);
        let c = diffuse_axial(&self.grid, &advected, dt).ok_or(StepRejection::SingularSystem)?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(StepRejection::NonFinite);
        }
        let (coupling, traces) = self.compute_a(&c, state.a)?;
        Ok(State {
            c,
            t: state.t + dt,
            a: coupling.a,
            traces,
            step_count: state.step_count + 1,
        })
    }

    /// Runs from `c0` until classification; see [`Solver1d::run_with`].
    pub fn run(&self, c0: Vec<f64>, stop: &StopCriteria, settings: &RecordSettings) -> Result<(Trajectory, RunReport)> {
        self.run_with(c0, stop, settings, |_| {})
    }

    /// Runs from `c0`, calling `observer` after every accepted step.
    ///
    /// Classification: `Converged` once `||c - M/|Omega| ||_inf < converge_tol`,
    /// `Blowup` once `||c||_inf >= blowup_linf_threshold` or the admissible step
    /// falls to `dt_min`, `Bounded` at `t_end`, `NumericalFailure` on non-finite
    /// values or negativity beyond roundoff.
    pub fn run_with(
        &self,
        c0: Vec<f64>,
        stop: &StopCriteria,
        settings: &RecordSettings,
        mut observer: impl FnMut(&State),
    ) -> Result<(Trajectory, RunReport)> {
        stop.validate()?;
        let mut state = self.initial_state(c0)?;
        let mut monitor = RunMonitor::new_1d(&self.grid, &state, &self.f, settings.clone())?;
        let mut driver = Driver::new(stop);
        driver.sample(&mut monitor, &self.grid, &state, 0.0, true);
        observer(&state);
        let outcome = loop {
            let linf = state.c.iter().copied().fold(0.0, f64::max);
            if let Some(outcome) = driver.classify(&monitor, &state.c, state.t, linf, &self.opts) {
                break outcome;
            }
            let dt_adapt = self.adapt_dt(&state);
            if dt_adapt <= self.opts.dt_min {
                break (RunOutcome::Blowup, format!("admissible dt {dt_adapt:e} reached dt_min"));
            }
            let mut dt = clip_to_end(dt_adapt, stop.t_end - state.t);
            let next = loop {
                match self.step(&state, dt) {
                    Ok(next) => break Ok(next),
                    Err(rej) => {
                        monitor.note_rejection();
                        dt = match rej {
                            StepRejection::Cfl { dt_limit } => dt_limit.min(0.5 * dt),
                            _ => 0.5 * dt,
                        };
                        if dt <= self.opts.dt_min {
                            break Err(rej);
                        }
                    }
                }
            };
            let next = match next {
                Ok(next) => next,
                Err(rej) => {
                    break (RunOutcome::Blowup, format!("step rejected down to dt_min: {rej}"));
                }
            };
            if next.traces.fell_back() {
                monitor.note_fallback();
            }
            if let Err(msg) = monitor.observe_1d(&self.grid, &state, &next, dt) {
                state = next;
                break (RunOutcome::NumericalFailure, msg);
            }
            state = next;
            observer(&state);
            driver.sample(&mut monitor, &self.grid, &state, dt, false);
        };
        driver.sample(&mut monitor, &self.grid, &state, 0.0, true);
        Ok(monitor.finish(outcome.0, outcome.1, state.t, state.step_count, driver.trajectory))
    }
}

pub(crate) fn adaptive_dt(opts: &StepOptions, h_min: f64, a: f64, linf: f64, m: f64) -> f64 {
    let cfl = opts.cfl * h_min / a.abs().max(1e-12);
    let clamp = opts.blowup_dt_scale / (1.0 + linf.powf(2.0 * m));
    opts.dt_max.min(cfl).min(clamp)
}

/// Step that lands on `t_end` without leaving a sliver: a remainder shorter
/// than two steps is split evenly.
pub(crate) fn clip_to_end(dt: f64, remaining: f64) -> f64 {
    if remaining <= dt {
        remaining
    } else if remaining < 2.0 * dt {
        0.5 * remaining
    } else {
        dt
    }
}

/// Sampling and classification shared by the 1D and cylinder runs.
pub(crate) struct Driver<'a> {
    stop: &'a StopCriteria,
    snapshot_times: Vec<f64>,
    pub trajectory: Trajectory,
    last_sample_linf: f64,
    last_sample_step: u64,
    last_sample_t: f64,
    interval: f64,
    next_snapshot: usize,
}

impl<'a> Driver<'a> {
    pub fn new(stop: &'a StopCriteria) -> Self {
        let mut times = stop.snapshot_times.clone();
        times.sort_by(f64::total_cmp);
        Driver {
            stop,
            snapshot_times: times,
            trajectory: Trajectory::default(),
            last_sample_linf: 0.0,
            last_sample_step: 0,
            last_sample_t: 0.0,
            interval: if stop.sample_interval > 0.0 { stop.sample_interval } else { stop.t_end / 256.0 },
            next_snapshot: 0,
        }
    }

    pub fn sample<M: Mesh>(
        &mut self,
        monitor: &mut RunMonitor,
        mesh: &M,
        state: &impl SampledState,
        dt: f64,
        force: bool,
    ) {
        let c = state.field();
        let steps = state.steps();
        let linf = c.iter().copied().fold(0.0, f64::max);
        let due = force
            || steps >= self.last_sample_step + self.stop.sample_every as u64
            || linf >= self.stop.sample_growth * self.last_sample_linf
            || state.time() >= self.last_sample_t + self.interval;
        if due {
            let duplicate = self.trajectory.records.last().is_some_and(|r| r.t == state.time());
            if !duplicate {
                let rec = monitor.record(mesh, c, state.time(), dt, state.coupling(), state.trace_pair());
                self.trajectory.records.push(rec);
            }
            self.last_sample_linf = linf;
            self.last_sample_step = steps;
            self.last_sample_t = state.time();
        }
        while self.next_snapshot < self.snapshot_times.len()
            && state.time() >= self.snapshot_times[self.next_snapshot]
        {
            self.trajectory.snapshots.push(Snapshot { t: state.time(), c: c.to_vec() });
            self.next_snapshot += 1;
        }
    }

    pub fn classify(
        &self,
        monitor: &RunMonitor,
        c: &[f64],
        t: f64,
        linf: f64,
        opts: &StepOptions,
    ) -> Option<(RunOutcome, String)> {
        if linf >= opts.blowup_linf_threshold {
            return Some((RunOutcome::Blowup, format!("||c||_inf = {linf:e} reached threshold")));
        }
        let mean = monitor.mean();
        let dev = c.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        if dev < self.stop.converge_tol {
            return Some((RunOutcome::Converged, format!("||c - mean||_inf = {dev:e}")));
        }
        if t >= self.stop.t_end {
            return Some((RunOutcome::Bounded, format!("reached t_end with ||c||_inf = {linf:e}")));
        }
        if monitor.steps() >= self.stop.max_steps {
            return Some((RunOutcome::Bounded, "step budget exhausted".into()));
        }
        None
    }
}

/// Read access shared by [`State`] and the cylinder state for sampling.
pub(crate) trait SampledState {
    fn field(&self) -> &[f64];
    fn time(&self) -> f64;
    fn steps(&self) -> u64;
    fn coupling(&self) -> f64;
    fn trace_pair(&self) -> (f64, f64);
}

impl SampledState for State {
    fn field(&self) -> &[f64] {
        &self.c
    }
    fn time(&self) -> f64 {
        self.t
    }
    fn steps(&self) -> u64 {
        self.step_count
    }
    fn coupling(&self) -> f64 {
        self.a
    }
    fn trace_pair(&self) -> (f64, f64) {
        (self.traces.left, self.traces.right)
    }
}
