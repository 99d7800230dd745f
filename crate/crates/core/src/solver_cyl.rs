//! Axisymmetric solver on the finite cylinder `(0, L) x B'_R`.
//!
//! The drift is `A(t) = a(t) e_1` with `a = sum_j w_j [f(c(L, rho_j)) - f(c(0, rho_j))]`,
//! `w_j` the radial cell weights. A step applies, in this order, explicit upwind
//! advection along `x_1`, implicit axial diffusion row by row and implicit
//! radial diffusion column by column. All outer fluxes vanish; the lateral face
//! is pure Neumann since `A` is tangential there.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{RecordSettings, RunMonitor, RunOutcome, RunReport, Trajectory};
use crate::error::{Error, Result};
use crate::grid::GridCyl;
use crate::problem::Nonlinearity;
use crate::solver1d::{
    adaptive_dt, advect_explicit, clip_to_end, diffuse_axial, reconstruct_traces, resolve_coupling, Coupling,
    Driver, SampledState, StepOptions, StepRejection, StopCriteria, TraceMode,
};
use crate::tridiag::diffuse_implicit;

pub use crate::diagnostics::axial_marginal;

/// Evolving solution on the cylinder, stored as `c[j * nx + i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCyl {
    pub c: Vec<f64>,
    pub t: f64,
    pub a: f64,
    /// Cross-section averages of the end traces.
    pub trace_left: f64,
    pub trace_right: f64,
    pub fallback: bool,
    pub step_count: u64,
}

impl SampledState for StateCyl {
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
        (self.trace_left, self.trace_right)
    }
}

#[derive(Debug, Clone)]
pub struct SolverCyl {
    pub grid: GridCyl,
    pub f: Nonlinearity,
    pub opts: StepOptions,
}

/// Coupling of a cylinder field with the averaged end traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CylCoupling {
    pub coupling: Coupling,
    pub trace_left: f64,
    pub trace_right: f64,
}

impl SolverCyl {
    pub fn new(grid: GridCyl, f: Nonlinearity, opts: StepOptions) -> Result<Self> {
        f.validate()?;
        opts.validate()?;
        Ok(SolverCyl { grid, f, opts })
    }

    fn eval_f(&self, s: f64) -> std::result::Result<f64, StepRejection> {
        self.f.eval(s).or_else(|_| self.f.eval(s.max(0.0))).map_err(|_| StepRejection::NonFinite)
    }

    /// `sum_j w_j [f(trace_right_j) - f(trace_left_j)]` for the trial coupling
    /// `a`, plus the weighted trace sums and the fallback flag.
    fn weighted_traces(
        &self,
        c: &[f64],
        a: f64,
        mode: TraceMode,
    ) -> std::result::Result<(f64, f64, f64, bool), StepRejection> {
        let widths = self.grid.axial().widths();
        let (mut sum, mut left, mut right, mut fallback) = (0.0, 0.0, 0.0, false);
        for (row, w) in c.chunks(self.grid.nx()).zip(self.grid.radial_volumes()) {
            let tr = reconstruct_traces(row, widths, a, mode);
            sum += w * (self.eval_f(tr.right)? - self.eval_f(tr.left)?);
            left += w * tr.left;
            right += w * tr.right;
            fallback |= tr.fell_back();
        }
        Ok((sum, left, right, fallback))
    }

    /// Resolves the axial coupling of the field `c`, starting from `a_guess`.
    pub fn compute_a(&self, c: &[f64], a_guess: f64) -> std::result::Result<CylCoupling, StepRejection> {
        let resolved = resolve_coupling(&self.opts, a_guess, |a| {
            self.weighted_traces(c, a, self.opts.trace_mode).map(|(s, _, _, fb)| (s, fb))
        });
        let (coupling, mode) = match resolved {
            Ok(coupling) => (coupling, self.opts.trace_mode),
            Err(StepRejection::PicardStalled { iterations, .. }) => {
                let a = self.weighted_traces(c, 0.0, TraceMode::Cell)?.0;
                (Coupling { a, iterations, fallback: true }, TraceMode::Cell)
            }
            Err(e) => return Err(e),
        };
        let (_, left, right, _) = self.weighted_traces(c, coupling.a, mode)?;
        let area = self.grid.cross_section_volume();
        Ok(CylCoupling { coupling, trace_left: left / area, trace_right: right / area })
    }

    pub fn initial_state(&self, c0: Vec<f64>) -> Result<StateCyl> {
        let n = self.grid.nx() * self.grid.nr();
        if c0.len() != n {
            return Err(Error::Shape { expected: n, got: c0.len() });
        }
        if let Some(v) = c0.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!("initial data must be finite and >= 0, found {v}")));
        }
        let cc = self
            .compute_a(&c0, 0.0)
            .map_err(|e| Error::Numerical(format!("initial coupling: {e}")))?;
        Ok(StateCyl {
            c: c0,
            t: 0.0,
            a: cc.coupling.a,
            trace_left: cc.trace_left,
            trace_right: cc.trace_right,
            fallback: cc.coupling.fallback,
            step_count: 0,
        })
    }

    pub fn adapt_dt(&self, state: &StateCyl) -> f64 {
        let linf = state.c.iter().copied().fold(0.0, f64::max);
        adaptive_dt(&self.opts, self.grid.axial().h_min(), state.a, linf, self.f.exponent())
    }

    /// Radial backward-Euler diffusion of every axial column, in place.
    fn diffuse_radial(&self, c: &mut [f64], dt: f64) -> Option<()> {
        let (nx, nr) = (self.grid.nx(), self.grid.nr());
        if nr < 2 {
            return Some(());
        }
        let areas = self.grid.face_areas();
        let conductance: Vec<f64> =
            self.grid.radial_spacings().iter().enumerate().map(|(j, d)| dt * areas[j + 1] / d).collect();
        let mut column = vec![0.0; nr];
        for i in 0..nx {
            for (j, v) in column.iter_mut().enumerate() {
                *v = c[j * nx + i];
            }
            let u = diffuse_implicit(self.grid.radial_volumes(), &conductance, &column)?;
            for (j, v) in u.into_iter().enumerate() {
                c[j * nx + i] = v;
            }
        }
        Some(())
    }

    pub fn step(&self, state: &StateCyl, dt: f64) -> std::result::Result<StateCyl, StepRejection> {
        let axial = self.grid.axial();
        let limit = self.opts.cfl * axial.h_min() / state.a.abs().max(1e-12);
        if dt > limit {
            return Err(StepRejection::Cfl { dt_limit: limit });
        }
        let nx = self.grid.nx();
        let mut c = vec![0.0; state.c.len()];
        let mut advected = vec![0.0; nx];
        for (row, out) in state.c.chunks(nx).zip(c.chunks_mut(nx)) {
            advect_explicit(axial.widths(), row, state.a, dt, &mut advected);
            let diffused = diffuse_axial(axial, &advected, dt).ok_or(StepRejection::SingularSystem)?;
            out.copy_from_slice(&diffused);
        }
        self.diffuse_radial(&mut c, dt).ok_or(StepRejection::SingularSystem)?;
        if c.iter().any(|v| !v.is_finite()) {
            return Err(StepRejection::NonFinite);
        }
        let cc = self.compute_a(&c, state.a)?;
        Ok(StateCyl {
            c,
            t: state.t + dt,
            a: cc.coupling.a,
            trace_left: cc.trace_left,
            trace_right: cc.trace_right,
            fallback: cc.coupling.fallback,
            step_count: state.step_count + 1,
        })
    }

    pub fn run(&self, c0: Vec<f64>, stop: &StopCriteria, settings: &RecordSettings) -> Result<(Trajectory, RunReport)> {
        self.run_with(c0, stop, settings, |_| {})
    }

    /// Same classification as [`crate::solver1d::Solver1d::run_with`].
    pub fn run_with(
        &self,
        c0: Vec<f64>,
        stop: &StopCriteria,
        settings: &RecordSettings,
        mut observer: impl FnMut(&StateCyl),
    ) -> Result<(Trajectory, RunReport)> {
        stop.validate()?;
        let mut state = self.initial_state(c0)?;
        let mut monitor = RunMonitor::new_cyl(&self.grid, &state.c, &self.f, settings.clone())?;
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
                Err(rej) => break (RunOutcome::Blowup, format!("step rejected down to dt_min: {rej}")),
            };
            if next.fallback {
                monitor.note_fallback();
            }
            let observed = monitor.observe_cyl(&self.grid, state.a, &next.c, next.a, dt);
            state = next;
            if let Err(msg) = observed {
                break (RunOutcome::NumericalFailure, msg);
            }
            observer(&state);
            driver.sample(&mut monitor, &self.grid, &state, dt, false);
        };
        driver.sample(&mut monitor, &self.grid, &state, 0.0, true);
        Ok(monitor.finish(outcome.0, outcome.1, state.t, state.step_count, driver.trajectory))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mesh;
    use crate::solver1d::Solver1d;
    use crate::Grid1D;

    fn solver(nx: usize, nr: usize, radius: f64) -> SolverCyl {
        let grid = GridCyl::new(1.0, radius, 2, nx, nr, 1.0).unwrap();
        SolverCyl::new(grid, Nonlinearity::signed_power(1.0).unwrap(), StepOptions::default()).unwrap()
    }

    #[test]
    fn constant_state_is_fixed() {
        let s = solver(16, 8, 0.5);
        let state = s.initial_state(vec![0.7; 128]).unwrap();
        assert_eq!(state.a, 0.0);
        let next = s.step(&state, 1e-3).unwrap();
        for v in &next.c {
            assert!((v - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn rho_independent_coupling_scales_with_cross_section() {
        let grid = GridCyl::new(1.0, 1.0, 3, 20, 6, 1.0).unwrap();
        let opts = StepOptions { trace_mode: TraceMode::Cell, ..StepOptions::default() };
        let f = Nonlinearity::signed_power(2.0).unwrap();
        let s = SolverCyl::new(grid.clone(), f, opts).unwrap();
        let s1 = Solver1d::new(grid.axial().clone(), f, opts).unwrap();
        let row = grid.axial().sample_averages(|x| 2.0 - x);
        let c: Vec<f64> = (0..grid.nr()).flat_map(|_| row.clone()).collect();
        let a1 = s1.compute_a(&row, 0.0).unwrap().0.a;
        let ac = s.compute_a(&c, 0.0).unwrap().coupling.a;
        assert!(a1 < 0.0);
        assert!((ac - grid.cross_section_volume() * a1).abs() < 1e-12 * ac.abs());
    }

    #[test]
    fn unit_cross_section_coupling_matches_1d() {
        let s = solver(64, 4, 0.5);
        let s1 = Solver1d::new(s.grid.axial().clone(), s.f, s.opts).unwrap();
        let row = s.grid.axial().sample_averages(|x| 1.5 - x);
        let c: Vec<f64> = (0..4).flat_map(|_| row.clone()).collect();
        let (c1, _) = s1.compute_a(&row, 0.0).unwrap();
        let cc = s.compute_a(&c, 0.0).unwrap();
        assert!(!c1.fallback);
        assert!((cc.coupling.a - c1.a).abs() < 1e-12);
    }

    #[test]
    fn rho_independent_run_matches_1d() {
        // radius 1/2 in 2D gives |B'| = 1, so both couplings coincide
        let s = solver(40, 5, 0.5);
        let axial = s.grid.axial().clone();
        let s1 = Solver1d::new(axial.clone(), Nonlinearity::signed_power(1.0).unwrap(), StepOptions::default()).unwrap();
        let row = axial.sample_averages(|x| 1.0 + 0.5 * (std::f64::consts::PI * x).cos());
        let mut st1 = s1.initial_state(row.clone()).unwrap();
        let mut stc = s.initial_state((0..5).flat_map(|_| row.clone()).collect()).unwrap();
        for _ in 0..200 {
            st1 = s1.step(&st1, 1e-3).unwrap();
            stc = s.step(&stc, 1e-3).unwrap();
            for r in stc.c.chunks(40) {
                for (u, v) in r.iter().zip(&st1.c) {
                    assert!((u - v).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn axially_constant_data_relaxes_radially() {
        let s = solver(32, 16, 1.0);
        let radial: Vec<f64> = s.grid.radial_centers().iter().map(|r| 0.1 * (1.0 + r * r)).collect();
        let c: Vec<f64> = radial.iter().flat_map(|v| vec![*v; 32]).collect();
        let mass = s.grid.integrate(&c).unwrap();
        let mean = mass / s.grid.total_volume();
        let mut state = s.initial_state(c).unwrap();
        assert!(state.a.abs() < 1e-14);
        for _ in 0..2000 {
            state = s.step(&state, 1e-2).unwrap();
        }
        assert!((s.grid.integrate(&state.c).unwrap() - mass).abs() < 1e-12 * mass);
        for v in &state.c {
            assert!((v - mean).abs() < 1e-8);
        }
    }

    #[test]
    fn marginal_of_separable_field() {
        let grid = GridCyl::new(2.0, 1.0, 2, 10, 4, 1.05).unwrap();
        let g = grid.axial().sample_averages(|x| 1.0 + x);
        let phi = [1.0, 2.0, 3.0, 4.0];
        let c: Vec<f64> = phi.iter().flat_map(|p| g.iter().map(move |v| v * p)).collect();
        let int_g = Grid1D::integrate(grid.axial(), &g).unwrap();
        for (m, p) in axial_marginal(&grid, &c).iter().zip(phi) {
            assert!((m - p * int_g).abs() < 1e-12);
        }
    }
}
