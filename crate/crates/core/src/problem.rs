//! Model definition: boundary nonlinearity, domain geometry and the closed-form
//! threshold constants attached to a problem instance.
//!
//! The simulated equation is the canonical (nondimensional) one
//!
//! ```text
//! c_t = div( grad c - c A(t) ),   (grad c - c A(t)) . nu = 0 on the boundary,
//! A(t) = integral over the boundary of f(c) nu dsigma
//! ```
//!
//! so that the only free parameters are `f`, the domain and the mass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary nonlinearity `f` entering the coupling `A(t)`.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// `f(s) = |s|^(m-1) s`, `m >= 1`.
    SignedPower { m: f64 },
    /// `f(s) = -s^m` on `s >= 0`, `m >= 1`.
    NegativePower { m: f64 },
    /// `f(s) = s^m` on `s >= 0`, `0 < m < 1`.
    SublinearPower { m: f64 },
    /// `f(s) = level * s / (s + alpha)`.
    Saturating { level: f64, alpha: f64 },
}

impl Nonlinearity {
    pub fn signed_power(m: f64) -> Result<Self> {
        let f = Nonlinearity::SignedPower { m };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Nonlinearity::SignedPower { m } | Nonlinearity::NegativePower { m } => {
                m.is_finite() && m >= 1.0
            }
            Nonlinearity::SublinearPower { m } => m.is_finite() && m > 0.0 && m < 1.0,
            Nonlinearity::Saturating { level, alpha } => {
                level.is_finite() && alpha.is_finite() && level > 0.0 && alpha > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid nonlinearity parameters: {self:?}")))
        }
    }

    /// Growth exponent `m` of `f` at infinity. Bounded (saturating) `f` reports 0.
    pub fn exponent(&self) -> f64 {
        match *self {
            Nonlinearity::SignedPower { m }
            | Nonlinearity::NegativePower { m }
            | Nonlinearity::SublinearPower { m } => m,
            Nonlinearity::Saturating { .. } => 0.0,
        }
    }

    /// True when `f` is nondecreasing, i.e. the coupling is aggregating.
    pub fn is_aggregating(&self) -> bool {
        !matches!(self, Nonlinearity::NegativePower { .. })
    }

    /// Evaluates `f(s)`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::Domain(format!("f evaluated at non-finite value {s}")));
        }
        match *self {
            Nonlinearity::SignedPower { m } => Ok(s.abs().powf(m - 1.0) * s),
            Nonlinearity::NegativePower { m } => {
                if s < 0.0 {
                    return Err(Error::Domain(format!("-s^m requires s >= 0, got {s}")));
                }
                Ok(-s.powf(m))
            }
            Nonlinearity::SublinearPower { m } => {
                if s < 0.0 {
                    return Err(Error::Domain(format!("s^m requires s >= 0, got {s}")));
                }
                Ok(s.powf(m))
            }
            Nonlinearity::Saturating { level, alpha } => {
                if s < 0.0 {
                    return Err(Error::Domain(format!(
                        "saturating f requires s >= 0, got {s}"
                    )));
                }
                Ok(level * s / (s + alpha))
            }
        }
    }
}

/// Surface area of the unit sphere `S^k` in `R^(k+1)`; `k = 0` gives 2.
pub fn unit_sphere_area(k: u32) -> f64 {
    use std::f64::consts::PI;
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * unit_sphere_area(k - 2),
    }
}

/// Computational domain: an interval `(0, L)` or a finite cylinder `(0, L) x B'_R`
/// in `R^n`.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { length: f64 },
    Cylinder { length: f64, radius: f64, dim: u32 },
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Domain::Interval { length } => {
                if !(length.is_finite() && length > 0.0) {
                    return Err(Error::Config(format!("length must be positive, got {length}")));
                }
            }
            Domain::Cylinder { length, radius, dim } => {
                if !(length.is_finite() && length > 0.0) {
                    return Err(Error::Config(format!("length must be positive, got {length}")));
                }
                if !(radius.is_finite() && radius > 0.0) {
                    return Err(Error::Config(format!("radius must be positive, got {radius}")));
                }
                if dim < 2 {
                    return Err(Error::Config(format!("cylinder needs dim >= 2, got {dim}")));
                }
            }
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        match *self {
            Domain::Interval { length } | Domain::Cylinder { length, .. } => length,
        }
    }

    /// `|B'_R|`, the `(n-1)`-volume of the cross-section; 1 for the interval.
    pub fn cross_section_volume(&self) -> f64 {
        match *self {
            Domain::Interval { .. } => 1.0,
            Domain::Cylinder { radius, dim, .. } => {
                unit_sphere_area(dim - 2) * radius.powi(dim as i32 - 1) / (dim as f64 - 1.0)
            }
        }
    }

    /// `|Omega|`.
    pub fn volume(&self) -> f64 {
        self.length() * self.cross_section_volume()
    }
}

/// A complete model instance.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub nonlinearity: Nonlinearity,
    pub domain: Domain,
    /// Coupling strength; enters only the reported cell velocity.
    #[serde(default = "default_chi")]
    pub chi: f64,
    /// Adsorbed fraction; diagnostic only.
    #[serde(default = "default_a_frac")]
    pub a_frac: f64,
}

fn default_chi() -> f64 {
    1.0
}

fn default_a_frac() -> f64 {
    1.0
}

impl ProblemSpec {
    pub fn new(nonlinearity: Nonlinearity, domain: Domain) -> Self {
        ProblemSpec { nonlinearity, domain, chi: default_chi(), a_frac: default_a_frac() }
    }

    pub fn validate(&self) -> Result<()> {
        self.nonlinearity.validate()?;
        self.domain.validate()?;
        if !(self.chi.is_finite() && self.chi >= 0.0) {
            return Err(Error::Config(format!("chi must be >= 0, got {}", self.chi)));
        }
        if !(self.a_frac.is_finite() && (0.0..=1.0).contains(&self.a_frac)) {
            return Err(Error::Config(format!("a_frac must lie in [0,1], got {}", self.a_frac)));
        }
        Ok(())
    }

    /// Axial cell velocity `u = -(chi/|Omega|) a` reported alongside the coupling.
    pub fn velocity(&self, a: f64) -> f64 {
        -self.chi / self.domain.volume() * a
    }
}

/// Scale `lambda = (volume / (a_frac chi))^(1/m)` mapping a physical concentration
/// onto the canonical variable via `c = lambda * c_tilde`.
pub fn nondimensionalize(chi: f64, a_frac: f64, volume: f64, m: f64) -> Result<f64> {
    for (name, v) in [("chi", chi), ("a_frac", a_frac), ("volume", volume), ("m", m)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((volume / (a_frac * chi)).powf(1.0 / m))
}

/// Closed-form constants attached to a problem and its initial data.
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// `m^(-1/m)`, the `L^m` norm shared by all nonconstant 1D steady states.
    pub n0: f64,
    /// Critical mass for `f(c) = c`.
    pub critical_mass_m1: f64,
    /// `M L / 2`; `phi(0)` below it triggers the `m = 1` blow-up argument.
    pub half_moment_bound: f64,
    /// Concentration length of the `m > 1` blow-up argument; `None` when `m <= 1`.
    pub ell: Option<f64>,
    /// First-moment bound `ell M / 2`; `None` when `m <= 1`.
    pub k_moment: Option<f64>,
    /// Upper bound on the blow-up time for `m = 1`; `None` encodes `+inf`.
    pub tstar_upper_bound: Option<f64>,
    /// `m (p-1)^-1 |Omega|^((p-m)/p)`; `None` when `p <= 1`.
    pub k0_lyapunov: Option<f64>,
    /// `K0^(-1/m)`: `||c0||_p` below it makes `||c||_p` nonincreasing.
    pub small_data_radius: Option<f64>,
    /// Whether the supplied `phi0` lies below the applicable sufficient blow-up bound.
    pub blowup_condition_met: bool,
}

/// Evaluates every threshold constant for the given mass `mass`, initial first
/// moment `phi0` and Lyapunov exponent `p`. `m0` is the maximal axial marginal of
/// the initial data, required on the cylinder for `m > 1`.
pub fn thresholds(
    spec: &ProblemSpec,
    mass: f64,
    phi0: f64,
    p: f64,
    m0: Option<f64>,
) -> Result<ThresholdReport> {
    spec.validate()?;
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Domain(format!("mass must be positive, got {mass}")));
    }
    if !(phi0.is_finite() && phi0 >= 0.0) {
        return Err(Error::Domain(format!("phi0 must be >= 0, got {phi0}")));
    }
    let m = spec.nonlinearity.exponent();
    let length = spec.domain.length();
    let volume = spec.domain.volume();
    let cross = spec.domain.cross_section_volume();
    let half_moment_bound = mass * length / 2.0;
    let n0 = if m > 0.0 { m.powf(-1.0 / m) } else { 0.0 };

    let is_linear = matches!(spec.nonlinearity, Nonlinearity::SignedPower { m } if m == 1.0);
    let is_superlinear = matches!(spec.nonlinearity, Nonlinearity::SignedPower { m } if m > 1.0);

    let tstar_upper_bound = if is_linear && mass > 1.0 && phi0 < half_moment_bound {
        Some(phi0 / ((mass - 1.0) * (mass - 2.0 * phi0 / length) / length))
    } else {
        None
    };

    let ell = if is_superlinear {
        let concentration = 2f64.powf(-(m + 1.0) / (m - 1.0)) * mass.powf(m / (m - 1.0)) / cross;
        match spec.domain {
            Domain::Interval { .. } => Some((length / 2.0).min(concentration)),
            Domain::Cylinder { .. } => {
                let m0 = m0.ok_or_else(|| {
                    Error::Domain("cylinder threshold requires the axial marginal bound M0".into())
                })?;
                if !(m0.is_finite() && m0 > 0.0) {
                    return Err(Error::Domain(format!("M0 must be positive, got {m0}")));
                }
                Some((length / 2.0).min(mass * length / (4.0 * cross * m0)).min(concentration))
            }
        }
    } else {
        None
    };
    let k_moment = ell.map(|l| l * mass / 2.0);

    let (k0_lyapunov, small_data_radius) = if p > 1.0 && m > 0.0 {
        let k0 = m / (p - 1.0) * volume.powf((p - m) / p);
        (Some(k0), Some(k0.powf(-1.0 / m)))
    } else {
        (None, None)
    };

    let blowup_condition_met = if is_linear {
        mass > 1.0 && phi0 < half_moment_bound
    } else {
        k_moment.is_some_and(|k| phi0 < k)
    };

    Ok(ThresholdReport {
        n0,
        critical_mass_m1: 1.0,
        half_moment_bound,
        ell,
        k_moment,
        tstar_upper_bound,
        k0_lyapunov,
        small_data_radius,
        blowup_condition_met,
    })
}
