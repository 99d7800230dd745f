//! Nonconstant steady states on the interval.
//!
//! A steady state with zero flux solves `c_x = a c`, so `c = c0 e^(a x)`, and
//! the coupling `a = c(L)^m - c(0)^m` fixes `c0^m (e^(a m L) - 1) = a`. The
//! mass of the branch with rate `a > 0` is `M(a) = c0 (e^(a L) - 1) / a`; the
//! `a < 0` branch is the mirror image under `x -> L - x`.
//!
//! Exponentials are evaluated in the log domain so large rates do not overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::problem::Nonlinearity;
use crate::solver1d::{Solver1d, StepOptions};

/// `ln(e^x - 1)` for `x > 0`.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln c0(a)` for the rate `a > 0`.
fn ln_c0(m: f64, length: f64, a: f64) -> f64 {
    (a.ln() - ln_expm1(a * m * length)) / m
}

/// Mass `M(a)` of the steady state with rate `a > 0`.
pub fn mass_of_rate(m: f64, length: f64, a: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("rate must be positive, got {a}")));
    }
    if !(m > 0.0) || !(length > 0.0) {
        return Err(Error::Domain(format!("need m > 0 and L > 0, got m={m}, L={length}")));
    }
    Ok((ln_c0(m, length, a) + ln_expm1(a * length) - a.ln()).exp())
}

/// `lim_{a -> 0+} M(a) = m^(-1/m) L^(1 - 1/m)`.
pub fn mass_at_zero_rate(m: f64, length: f64) -> f64 {
    m.powf(-1.0 / m) * length.powf(1.0 - 1.0 / m)
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState1D {
    /// Rate in `c = c0 e^(a x)`.
    pub a: f64,
    pub c0_left: f64,
    pub length: f64,
    pub m: f64,
    pub mass: f64,
    pub lm_norm: f64,
}

impl SteadyState1D {
    /// The steady state with rate `a != 0`.
    pub fn from_rate(m: f64, length: f64, a: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::Domain(format!("rate must be finite and nonzero, got {a}")));
        }
        let r = a.abs();
        let mass = mass_of_rate(m, length, r)?;
        let ln_c0 = ln_c0(m, length, r);
        // int c^m = c0^m (e^(amL) - 1) / (am) = 1/m
        let lm_norm = ((ln_c0 * m + ln_expm1(r * m * length) - (r * m).ln()) / m).exp();
        let c0_left = if a > 0.0 { ln_c0.exp() } else { (ln_c0 + r * length).exp() };
        Ok(SteadyState1D { a, c0_left, length, m, mass, lm_norm })
    }

    /// Rate `|a|` and `ln c` at the left end of the increasing branch.
    fn increasing_branch(&self) -> (f64, f64) {
        let r = self.a.abs();
        (r, ln_c0(self.m, self.length, r))
    }

    pub fn value(&self, x: f64) -> f64 {
        let (r, l0) = self.increasing_branch();
        let y = if self.a > 0.0 { x } else { self.length - x };
        (l0 + r * y).exp()
    }

    /// Exact cell averages on `grid`.
    pub fn cell_averages(&self, grid: &Grid1D) -> Vec<f64> {
        let (r, l0) = self.increasing_branch();
        let xs = grid.interfaces();
        xs.windows(2)
            .map(|w| {
                let (lo, hi) = if self.a > 0.0 { (w[0], w[1]) } else { (self.length - w[1], self.length - w[0]) };
                let h = hi - lo;
                (l0 + r * lo).exp() * (r * h).exp_m1() / (r * h)
            })
            .collect()
    }

    /// `|c0^m (e^(a m L) - 1) - a| / max(1, |a|)` on the increasing branch.
    pub fn consistency_residual(&self) -> f64 {
        let (r, l0) = self.increasing_branch();
        let lhs = (l0 * self.m + ln_expm1(r * self.m * self.length)).exp();
        (lhs - r).abs() / r.max(1.0)
    }

    /// Mirror image under `x -> L - x`.
    pub fn reflect(&self) -> Self {
        let mut s = *self;
        s.a = -self.a;
        s.c0_left = self.value(self.length);
        s
    }
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SteadySearch {
    /// The increasing steady state of the requested mass.
    Found(SteadyState1D),
    /// `m = 1, M = 1`: every rate gives a steady state.
    Family,
    /// No nonconstant steady state has this mass.
    NoSolution,
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteadyOptions {
    pub a_max: f64,
    /// Widening stops once the bracket exceeds this rate.
    pub a_limit: f64,
    pub tol: f64,
    /// Samples used to verify monotonicity of `M` on the bracket.
    pub monotone_samples: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions { a_max: 50.0, a_limit: 1e12, tol: 1e-10, monotone_samples: 64 }
    }
}

/// Finds the increasing steady state of mass `mass` for `f(s) = |s|^(m-1) s`,
/// `m >= 1`, by bisection on the rate.
pub fn find_steady(m: f64, length: f64, mass: f64, opts: &SteadyOptions) -> Result<SteadySearch> {
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("find_steady needs m >= 1, got {m}; use scan_steady")));
    }
    if !(mass > 0.0) || !(length > 0.0) {
        return Err(Error::Domain(format!("need M > 0 and L > 0, got M={mass}, L={length}")));
    }
    if m == 1.0 {
        return Ok(if (mass - 1.0).abs() <= opts.tol { SteadySearch::Family } else { SteadySearch::NoSolution });
    }
    if mass >= mass_at_zero_rate(m, length) {
        return Ok(SteadySearch::NoSolution);
    }
    let mut hi = opts.a_max;
    while mass_of_rate(m, length, hi)? >= mass {
        hi *= 2.0;
        if hi > opts.a_limit {
            return Err(Error::Numerical(format!(
                "no sign change of M(a) - {mass} below a = {}",
                opts.a_limit
            )));
        }
    }
    let lo = (hi * 1e-14).min(1e-10);
    let n = opts.monotone_samples.max(2);
    let samples: Vec<f64> = (0..=n)
        .map(|k| (lo.ln() + (hi / lo).ln() * k as f64 / n as f64).exp())
        .map(|a| mass_of_rate(m, length, a))
        .collect::<Result<_>>()?;
    if samples.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12)) {
        return Err(Error::Numerical(format!("M(a) is not monotone on (0, {hi}]")));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > opts.tol * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mass_of_rate(m, length, mid)? > mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(SteadySearch::Found(SteadyState1D::from_rate(m, length, 0.5 * (lo + hi))?))
}

/// Rates in `(0, a_max]` where `M(a)` crosses `mass`, located by sign changes
/// on a log-spaced scan and refined by bisection. Makes no completeness claim.
pub fn scan_steady(m: f64, length: f64, mass: f64, a_max: f64, samples: usize) -> Result<Vec<f64>> {
    if !(a_max > 0.0) || samples < 2 {
        return Err(Error::Config("scan needs a_max > 0 and at least 2 samples".into()));
    }
    let lo = a_max * 1e-8;
    let grid: Vec<f64> = (0..=samples)
        .map(|k| (lo.ln() + (a_max / lo).ln() * k as f64 / samples as f64).exp())
        .collect();
    let g = |a: f64| mass_of_rate(m, length, a).map(|v| v - mass);
    let mut roots = Vec::new();
    for w in grid.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let (mut ga, gb) = (g(a)?, g(b)?);
        if ga == 0.0 {
            roots.push(a);
            continue;
        }
        if ga * gb > 0.0 {
            continue;
        }
        while b - a > 1e-12 * b {
            let mid = 0.5 * (a + b);
            let gm = g(mid)?;
            if ga * gm <= 0.0 {
                b = mid;
            } else {
                a = mid;
                ga = gm;
            }
        }
        roots.push(0.5 * (a + b));
    }
    Ok(roots)
}

/// Relative change `||c1 - c0||_inf / ||c0||_inf` after one solver step from
/// the cell averages of `ss` on a uniform grid of `ncells`.
///
/// The step is the solver's own admissible step, which is CFL-limited and so
/// proportional to the cell width; the boundary cells carry an `O(dt)` defect
/// of the upwind flux, which makes the residual first order in `h`.
pub fn steady_residual(ss: &SteadyState1D, ncells: usize) -> Result<f64> {
    let grid = Grid1D::uniform(ss.length, ncells)?;
    let c0 = ss.cell_averages(&grid);
    profile_step_residual(grid, Nonlinearity::signed_power(ss.m)?, c0)
}

/// Relative one-step change of an arbitrary profile.
pub fn profile_step_residual(grid: Grid1D, f: Nonlinearity, c0: Vec<f64>) -> Result<f64> {
    let opts = StepOptions { dt_max: 1.0, ..StepOptions::default() };
    let solver = Solver1d::new(grid, f, opts)?;
    let state = solver.initial_state(c0)?;
    let dt = solver.adapt_dt(&state);
    let next = solver.step(&state, dt).map_err(|e| Error::Numerical(e.to_string()))?;
    let top = state.c.iter().copied().fold(0.0, f64::max);
    Ok(next.c.iter().zip(&state.c).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max) / top)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::grid::Mesh;

    #[test]
    fn linear_mass_is_one() {
        assert_relative_eq!(mass_of_rate(1.0, 1.0, 2.0).unwrap(), 1.0, epsilon = 1e-14);
        for k in 1..=3000 {
            let a = k as f64 * 1e-2;
            assert!((mass_of_rate(1.0, 1.0, a).unwrap() - 1.0).abs() < 1e-10, "a = {a}");
        }
    }

    #[test]
    fn small_rate_limit() {
        let v = mass_of_rate(2.0, 1.0, 1e-9).unwrap();
        assert!((v - 0.5f64.sqrt()).abs() < 1e-8);
        assert_relative_eq!(mass_at_zero_rate(2.0, 1.0), 0.707_106_781_186_547_5, epsilon = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_rate() {
        assert!(mass_of_rate(2.0, 1.0, 0.0).is_err());
        assert!(mass_of_rate(2.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn large_rates_do_not_overflow() {
        let v = mass_of_rate(2.0, 1.0, 1e4).unwrap();
        // c0 e^(aL) -> a^(1/m), so M ~ a^(1/m - 1)
        assert_relative_eq!(v, 1e-2, max_relative = 1e-3);
    }

    #[test]
    fn quadratic_half_mass() {
        let SteadySearch::Found(ss) = find_steady(2.0, 1.0, 0.5, &SteadyOptions::default()).unwrap() else {
            panic!("expected a steady state");
        };
        assert_relative_eq!(ss.lm_norm, 0.5f64.sqrt(), epsilon = 1e-8);
        assert_relative_eq!(ss.mass, 0.5, epsilon = 1e-9);
        assert!(ss.consistency_residual() < 1e-10);
        // quadrature oracle for int c^m = 1/m
        let grid = Grid1D::uniform(1.0, 4000).unwrap();
        let cm = grid.sample_averages(|x| ss.value(x).powi(2));
        assert_relative_eq!(grid.integrate(&cm).unwrap(), 0.5, epsilon = 1e-8);
        let avg = ss.cell_averages(&grid);
        assert_relative_eq!(grid.integrate(&avg).unwrap(), ss.mass, epsilon = 1e-12);
    }

    #[test]
    fn no_solution_above_threshold() {
        assert_eq!(find_steady(2.0, 1.0, 0.8, &SteadyOptions::default()).unwrap(), SteadySearch::NoSolution);
        assert_eq!(find_steady(1.0, 1.0, 0.7, &SteadyOptions::default()).unwrap(), SteadySearch::NoSolution);
        assert_eq!(find_steady(1.0, 1.0, 1.0, &SteadyOptions::default()).unwrap(), SteadySearch::Family);
    }

    #[test]
    fn small_mass_widens_bracket() {
        // m = 2 has M(50) ~ 0.14, so M = 0.05 needs a > 50
        let SteadySearch::Found(ss) = find_steady(2.0, 1.0, 0.05, &SteadyOptions::default()).unwrap() else {
            panic!("expected a steady state");
        };
        assert!(ss.a > 50.0);
        assert_relative_eq!(ss.mass, 0.05, max_relative = 1e-9);
    }

    #[test]
    fn reflection() {
        let ss = SteadyState1D::from_rate(3.0, 2.0, 1.5).unwrap();
        let r = ss.reflect();
        for k in 0..=20 {
            let x = 0.1 * k as f64;
            assert_relative_eq!(r.value(x), ss.value(2.0 - x), max_relative = 1e-13);
        }
        assert_relative_eq!(r.c0_left, ss.value(2.0), max_relative = 1e-13);
    }

    #[test]
    fn residual_vanishes_at_first_order() {
        let SteadySearch::Found(ss) = find_steady(2.0, 1.0, 0.5, &SteadyOptions::default()).unwrap() else {
            panic!()
        };
        let r128 = steady_residual(&ss, 128).unwrap();
        let r256 = steady_residual(&ss, 256).unwrap();
        // at least first order
        let ratio = r128 / r256;
        assert!(ratio > 1.9, "ratio {ratio}");
        assert!(steady_residual(&ss, 1024).unwrap() < 1e-4);
    }

    #[test]
    fn constant_profile_has_zero_residual() {
        let grid = Grid1D::uniform(1.0, 64).unwrap();
        let r = profile_step_residual(grid, Nonlinearity::signed_power(2.0).unwrap(), vec![0.3; 64]).unwrap();
        assert!(r < 1e-14);
    }

    #[test]
    fn sublinear_scan_finds_crossings() {
        let m = 0.5;
        let roots = scan_steady(m, 1.0, 1.2, 50.0, 400).unwrap();
        for a in roots {
            assert_relative_eq!(mass_of_rate(m, 1.0, a).unwrap(), 1.2, max_relative = 1e-9);
        }
    }
}
