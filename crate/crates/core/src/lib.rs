//! Conservative finite-volume simulation of the boundary-coupled nonlocal
//! advection-diffusion problem
//!
//! ```text
//! c_t = div( grad c - c A(t) ),   A(t) = integral over the boundary of f(c) nu,
//! ```
//!
//! on an interval or an axisymmetric finite cylinder, together with the
//! functionals, identities and fits used to audit global existence, convergence
//! and finite-time blow-up.

pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod problem;
pub mod solver1d;
pub mod solver_cyl;
pub mod steady;
pub mod tridiag;

pub use error::{Error, Result};
pub use grid::{Grid1D, GridCyl, Mesh};
pub use problem::{Domain, Nonlinearity, ProblemSpec, ThresholdReport};
