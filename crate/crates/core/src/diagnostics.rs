//! Functionals, identity residuals, bound monitors and asymptotic fits.
//!
//! All quadratures are cell-midpoint sums against the exact cell volumes of the
//! mesh. The `s log s` integrand is extended by 0 at `s = 0`; cells below
//! `1e-300` are skipped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid1D, GridCyl, Mesh};
use crate::problem::{Nonlinearity, ThresholdReport};
use crate::solver1d::State;

const ENTROPY_CUTOFF: f64 = 1e-300;

/// What to record besides the fixed functionals.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordSettings {
    /// Exponents `p` of the sampled `L^p` norms.
    pub p_list: Vec<f64>,
    /// Coupling strength used for the reported velocity.
    pub chi: f64,
    /// Track the per-step entropy change.
    pub track_entropy: bool,
    /// Track the entropy and `L^p` dissipation identities every step (1D only).
    pub track_dissipation: bool,
    /// Exponent used for the `L^p` dissipation identity.
    pub dissipation_p: f64,
    /// Floor of the denominator in the relative moment-identity residual.
    pub moment_floor: f64,
    /// Steps ending before this time are left out of the moment residual, so
    /// the initial layer of data violating `c_x = a c` at the ends can pass.
    pub moment_t_start: f64,
}

impl Default for RecordSettings {
    fn default() -> Self {
        RecordSettings {
            p_list: vec![2.0],
            chi: 1.0,
            track_entropy: true,
            track_dissipation: false,
            dissipation_p: 2.0,
            moment_floor: 1e-10,
            moment_t_start: 0.0,
        }
    }
}

/// One time sample of the monitored functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub entropy: f64,
    /// `(p, ||c||_p)` for every configured `p`.
    pub lp_norms: Vec<(f64, f64)>,
    pub linf: f64,
    /// `||c - M/|Omega| ||_inf`.
    pub deviation: f64,
    /// First axial moment `int x_1 c`.
    pub phi: f64,
    pub a: f64,
    /// Axial cell velocity `-(chi/|Omega|) a`.
    pub u: f64,
    pub c_left: f64,
    pub c_right: f64,
    /// `max x_1^(1/m) c`; NaN for bounded `f`.
    pub profile_sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<FunctionalRecord>,
    pub snapshots: Vec<Snapshot>,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunOutcome {
    Converged,
    Bounded,
    Blowup,
    NumericalFailure,
}

impl RunOutcome {
    /// A classified physical outcome, as opposed to a numerical failure.
    pub fn is_physical(&self) -> bool {
        !matches!(self, RunOutcome::NumericalFailure)
    }
}

/// Outcome classification, fits, identity residuals and bound checks of a run.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: RunOutcome,
    pub reason: String,
    pub t_final: f64,
    pub steps: u64,
    pub rejected_steps: u64,
    pub trace_fallbacks: u64,
    pub t_detect: Option<f64>,
    pub tstar_fit: Option<f64>,
    pub beta_fit: Option<f64>,
    pub lambda_fit: Option<f64>,
    pub mass_initial: f64,
    /// `max_t |M(t) - M(0)| / M(0)`.
    pub mass_drift: f64,
    /// `min_t min_i c_i / ||c||_inf`.
    pub min_relative_density: f64,
    /// Maximal relative residual of `phi' = (M-1) a`; linear `f` only.
    pub moment_residual: Option<f64>,
    pub entropy_residual: Option<f64>,
    pub lp_residual: Option<f64>,
    /// Largest per-step increase of the entropy.
    pub max_entropy_increase: Option<f64>,
    pub monotone_initial: bool,
    /// Largest `(c_{i+1} - c_i) / max(1, ||c||_inf)` seen, for nonincreasing data.
    pub monotonicity_violation: Option<f64>,
    /// `max_t max_i x_i c_i / ||c_0||_1` (1D).
    pub xc_max_ratio: Option<f64>,
    /// `max_t max x_1 c / M_0` (cylinder).
    pub x1c_max_ratio: Option<f64>,
    /// Largest per-step increase of `max_rho` of the axial marginal, relative to `M_0`.
    pub marginal_max_increase: Option<f64>,
    pub m0: Option<f64>,
    pub profile_sup_initial: f64,
    pub profile_sup_max: f64,
    /// Maximum of the profile sup while the wall layer is resolved.
    pub profile_sup_resolved_max: f64,
    /// First time with `|a| h_min > 1`: the layer `c ~ e^(a x)` is thinner than
    /// the smallest cell from then on.
    pub t_unresolved: Option<f64>,
    /// `int a^2 dt` (trapezoidal in time).
    pub a_sq_integral: f64,
    pub half_moment_satisfied: Option<bool>,
    pub tdetect_within_bound: Option<bool>,
    pub fit_note: Option<String>,
}

impl RunReport {
    /// Fills the bound checks that depend on the closed-form thresholds.
    /// `slack` is the relative tolerance on the blow-up time bound.
    pub fn apply_thresholds(&mut self, thresholds: &ThresholdReport, phi0: f64, slack: f64) {
        self.half_moment_satisfied = Some(phi0 < thresholds.half_moment_bound);
        self.tdetect_within_bound = match (self.t_detect, thresholds.tstar_upper_bound) {
            (Some(t), Some(bound)) => Some(t <= bound * (1.0 + slack)),
            _ => None,
        };
    }
}

pub(crate) fn linf(c: &[f64]) -> f64 {
    c.iter().copied().fold(0.0, f64::max)
}

pub fn entropy<M: Mesh>(mesh: &M, c: &[f64]) -> f64 {
    c.iter()
        .enumerate()
        .filter(|(_, &v)| v > ENTROPY_CUTOFF)
        .map(|(k, &v)| mesh.cell_volume(k) * v * v.ln())
        .sum()
}

pub fn lp_norm<M: Mesh>(mesh: &M, c: &[f64], p: f64) -> f64 {
    let s: f64 = c.iter().enumerate().map(|(k, v)| mesh.cell_volume(k) * v.abs().powf(p)).sum();
    s.powf(1.0 / p)
}

pub fn first_moment<M: Mesh>(mesh: &M, c: &[f64]) -> f64 {
    c.iter().enumerate().map(|(k, v)| mesh.cell_volume(k) * mesh.axial_center(k) * v).sum()
}

/// `max_k x_1(k)^(1/m) c_k`.
pub fn profile_sup<M: Mesh>(mesh: &M, c: &[f64], m: f64) -> f64 {
    if m <= 0.0 {
        return f64::NAN;
    }
    c.iter()
        .enumerate()
        .map(|(k, v)| mesh.axial_center(k).powf(1.0 / m) * v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Axial marginal `m_j = sum_i h_i c_ij` of a cylinder field.
pub fn axial_marginal(grid: &GridCyl, c: &[f64]) -> Vec<f64> {
    let nx = grid.nx();
    let h = grid.axial().widths();
    c.chunks(nx).map(|row| row.iter().zip(h).map(|(c, h)| c * h).sum()).collect()
}

/// Snapshot of all functionals for the field `c` on `mesh`.
#[allow(clippy::too_many_arguments)]
pub fn record<M: Mesh>(
    mesh: &M,
    c: &[f64],
    t: f64,
    dt: f64,
    a: f64,
    traces: (f64, f64),
    settings: &RecordSettings,
    exponent: f64,
) -> FunctionalRecord {
    let mass = mesh.integrate(c).unwrap_or(f64::NAN);
    let volume = mesh.total_volume();
    let mean = mass / volume;
    FunctionalRecord {
        t,
        dt,
        mass,
        entropy: entropy(mesh, c),
        lp_norms: settings.p_list.iter().map(|&p| (p, lp_norm(mesh, c, p))).collect(),
        linf: linf(c),
        deviation: c.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max),
        phi: first_moment(mesh, c),
        a,
        u: -settings.chi / volume * a,
        c_left: traces.0,
        c_right: traces.1,
        profile_sup: profile_sup(mesh, c, exponent),
    }
}

/// Convenience wrapper of [`record`] for a 1D state.
pub fn record_state(grid: &Grid1D, state: &State, dt: f64, settings: &RecordSettings, exponent: f64) -> FunctionalRecord {
    record(grid, &state.c, state.t, dt, state.a, (state.traces.left, state.traces.right), settings, exponent)
}

/// Maximal relative residual of the first-moment identity `phi' = (M-1) a`
/// over consecutive records:
/// `max |dphi/dt - (M-1) a_mid| / max(|(M-1) a_mid|, floor)` with `a_mid` the
/// average of `a` at both ends of each interval.
pub fn moment_residual(records: &[FunctionalRecord], mass: f64, m: f64, floor: f64) -> Result<f64> {
    if m != 1.0 {
        return Err(Error::Domain(format!("the closed moment identity needs m = 1, got {m}")));
    }
    if records.len() < 2 {
        return Err(Error::InsufficientData("moment residual needs at least 2 records".into()));
    }
    Ok(records
        .windows(2)
        .map(|w| moment_step_residual(w[0].phi, w[1].phi, w[1].t - w[0].t, w[0].a, w[1].a, mass, floor))
        .fold(0.0, f64::max))
}

fn moment_step_residual(phi0: f64, phi1: f64, dt: f64, a0: f64, a1: f64, mass: f64, floor: f64) -> f64 {
    let rhs = (mass - 1.0) * 0.5 * (a0 + a1);
    ((phi1 - phi0) / dt - rhs).abs() / rhs.abs().max(floor)
}

/// Right-hand sides of the entropy and `L^p` evolution identities for a
/// positive field, built from face differences:
///
/// ```text
/// d/dt int c log c = -4 int |(c^1/2)_x|^2 + a int c_x
/// d/dt int c^p     = -4(p-1)/p int |(c^p/2)_x|^2 + (p-1) a int (c^p)_x
/// ```
pub fn dissipation_rates(grid: &Grid1D, c: &[f64], a: f64, p: f64) -> (f64, f64) {
    let n = c.len();
    let mut fisher = 0.0;
    let mut lp_grad = 0.0;
    for (i, d) in grid.spacings().iter().enumerate() {
        let ds = c[i + 1].sqrt() - c[i].sqrt();
        fisher += ds * ds / d;
        let dp = c[i + 1].powf(0.5 * p) - c[i].powf(0.5 * p);
        lp_grad += dp * dp / d;
    }
    let entropy_rate = -4.0 * fisher + a * (c[n - 1] - c[0]);
    let lp_rate = -4.0 * (p - 1.0) / p * lp_grad + (p - 1.0) * a * (c[n - 1].powf(p) - c[0].powf(p));
    (entropy_rate, lp_rate)
}

/// One element of a dissipation window.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipationSample {
    pub t: f64,
    pub c: Vec<f64>,
    pub a: f64,
}

impl From<&State> for DissipationSample {
    fn from(s: &State) -> Self {
        DissipationSample { t: s.t, c: s.c.clone(), a: s.a }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipationResiduals {
    /// `max |dE/dt - rhs_mid| / max |rhs_mid|` over the window.
    pub entropy: f64,
    /// Same for `int c^p`.
    pub lp: f64,
    /// Largest increase of the entropy between consecutive samples.
    pub max_entropy_increase: f64,
}

#[derive(Debug, Default, Clone, Copy)]
struct DissipationAccumulator {
    entropy_err: f64,
    entropy_scale: f64,
    lp_err: f64,
    lp_scale: f64,
}

impl DissipationAccumulator {
    fn push(&mut self, de_dt: f64, rhs_e: f64, dlp_dt: f64, rhs_lp: f64) {
        self.entropy_err = self.entropy_err.max((de_dt - rhs_e).abs());
        self.entropy_scale = self.entropy_scale.max(rhs_e.abs());
        self.lp_err = self.lp_err.max((dlp_dt - rhs_lp).abs());
        self.lp_scale = self.lp_scale.max(rhs_lp.abs());
    }

    fn entropy(&self) -> f64 {
        if self.entropy_scale > 0.0 { self.entropy_err / self.entropy_scale } else { self.entropy_err }
    }

    fn lp(&self) -> f64 {
        if self.lp_scale > 0.0 { self.lp_err / self.lp_scale } else { self.lp_err }
    }
}

/// Compares the discrete time derivative of the entropy and of `int c^p`
/// with the right-hand sides of their evolution identities (trapezoidal in
/// time) over consecutive positive states.
pub fn dissipation_residuals(grid: &Grid1D, window: &[DissipationSample], p: f64) -> Result<DissipationResiduals> {
    if window.len() < 2 {
        return Err(Error::InsufficientData("dissipation residuals need at least 2 states".into()));
    }
    if window.iter().any(|s| s.c.iter().any(|&v| !(v > 0.0))) {
        return Err(Error::Domain("dissipation identities need cellwise positive states".into()));
    }
    let mut acc = DissipationAccumulator::default();
    let mut max_increase = f64::NEG_INFINITY;
    for w in window.windows(2) {
        let dt = w[1].t - w[0].t;
        let (e0, e1) = (entropy(grid, &w[0].c), entropy(grid, &w[1].c));
        let (l0, l1) = (lp_norm(grid, &w[0].c, p).powf(p), lp_norm(grid, &w[1].c, p).powf(p));
        let (re0, rl0) = dissipation_rates(grid, &w[0].c, w[0].a, p);
        let (re1, rl1) = dissipation_rates(grid, &w[1].c, w[1].a, p);
        acc.push((e1 - e0) / dt, 0.5 * (re0 + re1), (l1 - l0) / dt, 0.5 * (rl0 + rl1));
        max_increase = max_increase.max(e1 - e0);
    }
    Ok(DissipationResiduals { entropy: acc.entropy(), lp: acc.lp(), max_entropy_increase: max_increase })
}

/// Result of a blow-up rate fit `||c||_inf ~ C (T* - t)^(-beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupFit {
    pub tstar: f64,
    pub beta: f64,
    pub log_prefactor: f64,
    /// Root-mean-square residual of the log-log fit.
    pub rms: f64,
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = x.iter().zip(y).map(|(xi, yi)| (yi - intercept - slope * xi).powi(2)).sum();
    (slope, intercept, sse)
}

fn golden_section(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Fits `log ||c||_inf = log C - beta log(T* - t)`, with `T*` chosen by
/// golden-section search on the log-gap `ln(T* - t_last)` and linear least
/// squares inside.
pub fn fit_blowup(times: &[f64], linf: &[f64]) -> Result<BlowupFit> {
    if times.len() != linf.len() {
        return Err(Error::Shape { expected: times.len(), got: linf.len() });
    }
    if times.len() < 20 {
        return Err(Error::InsufficientData(format!("blow-up fit needs >= 20 samples, got {}", times.len())));
    }
    if linf.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("blow-up fit needs positive norms".into()));
    }
    let (lo, hi) = linf.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if (hi / lo).log10() < 2.0 {
        return Err(Error::InsufficientData(format!(
            "blow-up fit needs >= 2 decades of ||c||_inf, got {:.3}",
            (hi / lo).log10()
        )));
    }
    let t_last = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t_first = times.iter().copied().fold(f64::INFINITY, f64::min);
    let span = t_last - t_first;
    if !(span > 0.0) {
        return Err(Error::InsufficientData("blow-up fit needs distinct sample times".into()));
    }
    let y: Vec<f64> = linf.iter().map(|v| v.ln()).collect();
    let sse = |log_gap: f64| {
        let tstar = t_last + log_gap.exp();
        let x: Vec<f64> = times.iter().map(|t| (tstar - t).ln()).collect();
        linear_fit(&x, &y).2
    };
    let (u_lo, u_hi) = ((span * 1e-12).ln(), (span * 10.0).ln());
    let scan = 400;
    let du = (u_hi - u_lo) / scan as f64;
    let best = (0..=scan)
        .map(|k| u_lo + k as f64 * du)
        .map(|u| (u, sse(u)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(u, _)| u)
        .unwrap_or(u_lo);
    let u = golden_section((best - du).max(u_lo), (best + du).min(u_hi), 1e-13, sse);
    let tstar = t_last + u.exp();
    let x: Vec<f64> = times.iter().map(|t| (tstar - t).ln()).collect();
    let (slope, intercept, sse) = linear_fit(&x, &y);
    Ok(BlowupFit { tstar, beta: -slope, log_prefactor: intercept, rms: (sse / x.len() as f64).sqrt() })
}

/// Exponential decay rate: minus the least-squares slope of `ln dev` against `t`.
pub fn fit_decay(times: &[f64], deviation: &[f64]) -> Result<f64> {
    if times.len() != deviation.len() {
        return Err(Error::Shape { expected: times.len(), got: deviation.len() });
    }
    if times.len() < 3 {
        return Err(Error::InsufficientData(format!("decay fit needs >= 3 samples, got {}", times.len())));
    }
    if deviation.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("decay fit needs positive deviations".into()));
    }
    let y: Vec<f64> = deviation.iter().map(|v| v.ln()).collect();
    Ok(-linear_fit(times, &y).0)
}

/// Suffix of `records` spanning at most `decades` decades of `||c||_inf` below
/// its final value.
pub fn blowup_tail(records: &[FunctionalRecord], decades: f64) -> &[FunctionalRecord] {
    let Some(last) = records.last() else { return records };
    let floor = last.linf / 10f64.powf(decades);
    let start = records.iter().rposition(|r| r.linf < floor).map_or(0, |k| k + 1);
    &records[start..]
}

/// Streaming per-step audit of a run: conservation, positivity, monotonicity,
/// pointwise bounds, entropy and identity residuals.
#[derive(Debug, Clone)]
pub struct RunMonitor {
    settings: RecordSettings,
    exponent: f64,
    linear: bool,
    mass0: f64,
    volume: f64,
    steps: u64,
    rejections: u64,
    fallbacks: u64,
    max_mass_drift: f64,
    min_relative: f64,
    monotone_initial: bool,
    max_monotone_violation: f64,
    xc_ref: f64,
    max_xc_ratio: f64,
    cylinder: bool,
    last_marginal_max: f64,
    max_marginal_increase: f64,
    entropy_prev: f64,
    max_entropy_increase: f64,
    phi_prev: f64,
    max_moment_residual: f64,
    dissipation: DissipationAccumulator,
    dissipation_prev: Option<(f64, f64, f64, f64)>,
    a_sq_integral: f64,
    profile_sup_initial: f64,
    profile_sup_max: f64,
    profile_sup_resolved_max: f64,
    h_min: f64,
    t: f64,
    t_unresolved: Option<f64>,
}

fn rows_nonincreasing(c: &[f64], nx: usize) -> bool {
    c.chunks(nx).all(|row| row.windows(2).all(|w| w[1] <= w[0]))
}

fn max_row_increase(c: &[f64], nx: usize) -> f64 {
    c.chunks(nx)
        .flat_map(|row| row.windows(2).map(|w| w[1] - w[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

impl RunMonitor {
    fn base<M: Mesh>(mesh: &M, h_min: f64, c: &[f64], f: &Nonlinearity, settings: RecordSettings) -> Result<Self> {
        let mass0 = mesh.integrate(c)?;
        if !(mass0 > 0.0) {
            return Err(Error::Domain("initial data must have positive mass".into()));
        }
        let exponent = f.exponent();
        let ps = profile_sup(mesh, c, exponent);
        Ok(RunMonitor {
            settings,
            exponent,
            linear: matches!(f, Nonlinearity::SignedPower { m } if *m == 1.0),
            mass0,
            volume: mesh.total_volume(),
            steps: 0,
            rejections: 0,
            fallbacks: 0,
            max_mass_drift: 0.0,
            min_relative: 1.0,
            monotone_initial: false,
            max_monotone_violation: f64::NEG_INFINITY,
            xc_ref: mass0,
            max_xc_ratio: 0.0,
            cylinder: false,
            last_marginal_max: 0.0,
            max_marginal_increase: f64::NEG_INFINITY,
            entropy_prev: entropy(mesh, c),
            max_entropy_increase: f64::NEG_INFINITY,
            phi_prev: first_moment(mesh, c),
            max_moment_residual: 0.0,
            dissipation: DissipationAccumulator::default(),
            dissipation_prev: None,
            a_sq_integral: 0.0,
            profile_sup_initial: ps,
            profile_sup_max: ps,
            profile_sup_resolved_max: ps,
            h_min,
            t: 0.0,
            t_unresolved: None,
        })
    }

    pub fn new_1d(grid: &Grid1D, state: &State, f: &Nonlinearity, settings: RecordSettings) -> Result<Self> {
        let mut m = Self::base(grid, grid.h_min(), &state.c, f, settings)?;
        m.monotone_initial = rows_nonincreasing(&state.c, grid.len());
        m.max_xc_ratio = m.xc_ratio_1d(grid, &state.c);
        if m.settings.track_dissipation && state.c.iter().all(|&v| v > 0.0) {
            let p = m.settings.dissipation_p;
            let (re, rl) = dissipation_rates(grid, &state.c, state.a, p);
            m.dissipation_prev = Some((m.entropy_prev, lp_norm(grid, &state.c, p).powf(p), re, rl));
        }
        Ok(m)
    }

    pub fn new_cyl(grid: &GridCyl, c: &[f64], f: &Nonlinearity, settings: RecordSettings) -> Result<Self> {
        let mut m = Self::base(grid, grid.axial().h_min(), c, f, settings)?;
        m.cylinder = true;
        m.monotone_initial = rows_nonincreasing(c, grid.nx());
        let marginal = axial_marginal(grid, c);
        m.xc_ref = marginal.iter().copied().fold(0.0, f64::max);
        m.last_marginal_max = m.xc_ref;
        m.max_xc_ratio = m.x1c_ratio(grid, c);
        Ok(m)
    }

    pub fn mean(&self) -> f64 {
        self.mass0 / self.volume
    }

    pub fn mass0(&self) -> f64 {
        self.mass0
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn note_rejection(&mut self) {
        self.rejections += 1;
    }

    pub fn note_fallback(&mut self) {
        self.fallbacks += 1;
    }

    fn xc_ratio_1d(&self, grid: &Grid1D, c: &[f64]) -> f64 {
        grid.centers().iter().zip(c).map(|(x, v)| x * v).fold(0.0, f64::max) / self.xc_ref
    }

    fn x1c_ratio(&self, grid: &GridCyl, c: &[f64]) -> f64 {
        let x = grid.axial().centers();
        c.chunks(grid.nx())
            .flat_map(|row| row.iter().zip(x).map(|(v, x)| v * x))
            .fold(0.0, f64::max)
            / self.xc_ref
    }

    pub fn record<M: Mesh>(&self, mesh: &M, c: &[f64], t: f64, dt: f64, a: f64, traces: (f64, f64)) -> FunctionalRecord {
        record(mesh, c, t, dt, a, traces, &self.settings, self.exponent)
    }

    /// Audits the common quantities of an accepted step; returns the new entropy
    /// and first moment.
    fn observe_common<M: Mesh>(&mut self, mesh: &M, c: &[f64], a_prev: f64, a_new: f64, dt: f64) -> std::result::Result<(), String> {
        self.steps += 1;
        self.t += dt;
        let top = linf(c);
        if c.iter().any(|v| !v.is_finite()) {
            return Err("non-finite density".into());
        }
        let low = c.iter().copied().fold(f64::INFINITY, f64::min);
        let rel = if top > 0.0 { low / top } else { 0.0 };
        self.min_relative = self.min_relative.min(rel);
        if rel < -1e-12 {
            return Err(format!("negative density {low:e} beyond roundoff (||c||_inf = {top:e})"));
        }
        let mass = mesh.integrate(c).map_err(|e| e.to_string())?;
        self.max_mass_drift = self.max_mass_drift.max((mass - self.mass0).abs() / self.mass0);
        self.a_sq_integral += 0.5 * dt * (a_prev * a_prev + a_new * a_new);
        if self.t_unresolved.is_none() && a_new.abs() * self.h_min > 1.0 {
            self.t_unresolved = Some(self.t);
        }
        let ps = profile_sup(mesh, c, self.exponent);
        self.profile_sup_max = self.profile_sup_max.max(ps);
        if self.t_unresolved.is_none() {
            self.profile_sup_resolved_max = self.profile_sup_resolved_max.max(ps);
        }
        if self.settings.track_entropy {
            let e = entropy(mesh, c);
            self.max_entropy_increase = self.max_entropy_increase.max(e - self.entropy_prev);
            self.entropy_prev = e;
        }
        let phi = first_moment(mesh, c);
        if self.linear && self.t >= self.settings.moment_t_start {
            let r = moment_step_residual(self.phi_prev, phi, dt, a_prev, a_new, self.mass0, self.settings.moment_floor);
            self.max_moment_residual = self.max_moment_residual.max(r);
        }
        self.phi_prev = phi;
        Ok(())
    }

    pub(crate) fn observe_1d(&mut self, grid: &Grid1D, prev: &State, next: &State, dt: f64) -> std::result::Result<(), String> {
        self.observe_common(grid, &next.c, prev.a, next.a, dt)?;
        if self.monotone_initial {
            let scale = linf(&next.c).max(1.0);
            self.max_monotone_violation = self.max_monotone_violation.max(max_row_increase(&next.c, grid.len()) / scale);
        }
        self.max_xc_ratio = self.max_xc_ratio.max(self.xc_ratio_1d(grid, &next.c));
        if let Some((e0, l0, re0, rl0)) = self.dissipation_prev {
            let p = self.settings.dissipation_p;
            if next.c.iter().all(|&v| v > 0.0) {
                let e1 = entropy(grid, &next.c);
                let l1 = lp_norm(grid, &next.c, p).powf(p);
                let (re1, rl1) = dissipation_rates(grid, &next.c, next.a, p);
                self.dissipation.push((e1 - e0) / dt, 0.5 * (re0 + re1), (l1 - l0) / dt, 0.5 * (rl0 + rl1));
                self.dissipation_prev = Some((e1, l1, re1, rl1));
            } else {
                self.dissipation_prev = None;
            }
        }
        Ok(())
    }

    pub(crate) fn observe_cyl(&mut self, grid: &GridCyl, a_prev: f64, c: &[f64], a_new: f64, dt: f64) -> std::result::Result<(), String> {
        self.observe_common(grid, c, a_prev, a_new, dt)?;
        if self.monotone_initial {
            let scale = linf(c).max(1.0);
            self.max_monotone_violation = self.max_monotone_violation.max(max_row_increase(c, grid.nx()) / scale);
        }
        self.max_xc_ratio = self.max_xc_ratio.max(self.x1c_ratio(grid, c));
        let marginal_max = axial_marginal(grid, c).into_iter().fold(0.0, f64::max);
        self.max_marginal_increase = self.max_marginal_increase.max((marginal_max - self.last_marginal_max) / self.xc_ref);
        self.last_marginal_max = marginal_max;
        Ok(())
    }

    /// Closes the run: fits exponents and assembles the report.
    pub fn finish(self, outcome: RunOutcome, reason: String, t_final: f64, steps: u64, trajectory: Trajectory) -> (Trajectory, RunReport) {
        let mut fit_note = None;
        let (mut tstar_fit, mut beta_fit, mut lambda_fit) = (None, None, None);
        match outcome {
            RunOutcome::Blowup => {
                // the fit only sees the resolved part of the approach
                let resolved = match self.t_unresolved {
                    Some(tu) => trajectory.records.iter().take_while(|r| r.t < tu).count(),
                    None => trajectory.records.len(),
                };
                let tail = blowup_tail(&trajectory.records[..resolved], 3.0);
                let t: Vec<f64> = tail.iter().map(|r| r.t).collect();
                let v: Vec<f64> = tail.iter().map(|r| r.linf).collect();
                match fit_blowup(&t, &v) {
                    Ok(fit) => {
                        tstar_fit = Some(fit.tstar);
                        beta_fit = Some(fit.beta);
                    }
                    Err(e) => fit_note = Some(format!("no blow-up fit: {e}")),
                }
            }
            RunOutcome::Converged => {
                let tail: Vec<&FunctionalRecord> =
                    trajectory.records.iter().filter(|r| r.t >= 0.5 * t_final && r.deviation > 0.0).collect();
                let t: Vec<f64> = tail.iter().map(|r| r.t).collect();
                let d: Vec<f64> = tail.iter().map(|r| r.deviation).collect();
                match fit_decay(&t, &d) {
                    Ok(l) => lambda_fit = Some(l),
                    Err(e) => fit_note = Some(format!("no decay fit: {e}")),
                }
            }
            _ => {}
        }
        let tracked_dissipation = self.settings.track_dissipation && self.dissipation.entropy_scale > 0.0;
        let report = RunReport {
            outcome,
            reason,
            t_final,
            steps,
            rejected_steps: self.rejections,
            trace_fallbacks: self.fallbacks,
            t_detect: (outcome == RunOutcome::Blowup).then_some(t_final),
            tstar_fit,
            beta_fit,
            lambda_fit,
            mass_initial: self.mass0,
            mass_drift: self.max_mass_drift,
            min_relative_density: self.min_relative,
            moment_residual: (self.linear && self.steps > 0).then_some(self.max_moment_residual),
            entropy_residual: tracked_dissipation.then(|| self.dissipation.entropy()),
            lp_residual: tracked_dissipation.then(|| self.dissipation.lp()),
            max_entropy_increase: (self.settings.track_entropy && self.steps > 0).then_some(self.max_entropy_increase),
            monotone_initial: self.monotone_initial,
            monotonicity_violation: (self.monotone_initial && self.steps > 0).then_some(self.max_monotone_violation),
            xc_max_ratio: (!self.cylinder).then_some(self.max_xc_ratio),
            x1c_max_ratio: self.cylinder.then_some(self.max_xc_ratio),
            marginal_max_increase: (self.cylinder && self.steps > 0).then_some(self.max_marginal_increase),
            m0: self.cylinder.then_some(self.xc_ref),
            profile_sup_initial: self.profile_sup_initial,
            profile_sup_max: self.profile_sup_max,
            profile_sup_resolved_max: self.profile_sup_resolved_max,
            t_unresolved: self.t_unresolved,
            a_sq_integral: self.a_sq_integral,
            half_moment_satisfied: None,
            tdetect_within_bound: None,
            fit_note,
        };
        (trajectory, report)
    }
}
