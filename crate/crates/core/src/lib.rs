//! Finite-volume simulation and entropy-dissipation analysis for the
//! nonlinear Fokker–Planck equation with inhomogeneous porous-medium
//! diffusion,
//!
//! ```text
//! ρ_t = Div(ρ ∇μ),   μ = α d(x) ρ^{α−1} + φ(x),   ρ∇μ·ν = 0 on ∂Ω,
//! ```
//!
//! on intervals and rectangles. The crate provides the solver, the free
//! energy and dissipation functionals, the stationary state, decay-rate
//! analysis, and numerical checks of the interpolation and Gronwall-type
//! inequalities used in the exponential-decay argument.

// `!(x > 0.0)` is how NaN gets rejected along with the non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod ineqlab;
pub mod problem;
pub mod quadrature;
pub mod solver;
mod util;

pub use error::{Error, Result, SolverError};
pub use functionals::{DiagnosticsRecord, EntropyTerms};
pub use grid::{FaceField, Field, Grid};
pub use problem::{CoefficientSpec, FaceDensity, Problem, ProblemSpec, SolverControls};
pub use solver::{RunOutput, State, StepReport};
