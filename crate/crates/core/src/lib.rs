//! Phase-field crystal simulation with an energy-stable convex-splitting
//! integrator on periodic B-spline (isogeometric) spaces.
//!
//! The pieces, bottom up:
//!
//! - [`bspline`]: periodic uniform B-splines and Gauss rules in 1D,
//! - [`space`] / [`sparse`] / [`assembly`]: tensor-product spaces, shared
//!   compressed-row patterns, mass/stiffness/bilaplacian operators and
//!   nonlinear loads,
//! - [`model`]: free energy, its convex/concave split, the secant
//!   nonlinearity and the dispersion relation,
//! - [`linsolve`] / [`integrator`]: Newton solves of the mixed (φ, μ) system
//!   and first/second-order time stepping,
//! - [`spectral_oracle`]: an independent Fourier solver used for
//!   cross-checks,
//! - [`config`], [`initial`], [`output`], [`studies`]: configuration,
//!   initial conditions, file formats and the verification drivers behind
//!   the command line.

pub mod assembly;
pub mod bspline;
pub mod config;
pub mod error;
pub mod fft;
pub mod initial;
pub mod integrator;
pub mod linsolve;
pub mod model;
pub mod output;
pub mod space;
pub mod sparse;
pub mod spectral_oracle;
pub mod studies;

pub use assembly::{FieldState, Operators};
pub use error::{Error, Result};
pub use integrator::{History, Integrator, RunOutput, Schedule, StepDiagnostics, ViolationPolicy};
pub use model::{EnergyReport, ModelParams, SchemeOrder};
pub use space::TensorSpace;
