//! Numerical toolkit for a spatial vector-host epidemic model.
//!
//! Infected hosts `H_i`, uninfected vectors `V_u` and infected vectors `V_i`
//! diffuse on an interval and react through
//!
//! ```text
//! dH_i/dt = (d1 H_i')' - rho H_i + sigma1 h_u V_i
//! dV_u/dt = (d2 V_u')' - sigma2 V_u H_i + beta V - mu V V_u
//! dV_i/dt = (d2 V_i')' + sigma2 V_u H_i - mu V V_i,        V = V_u + V_i
//! ```
//!
//! under Neumann, Dirichlet or Robin closures. The crate computes the
//! principal eigenvalues that decide the long-time behavior, the logistic
//! and endemic steady states, integrates the parabolic system, and checks
//! the resulting threshold dichotomy.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

// Negated comparisons like `!(x > 0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod eigen;
mod error;
pub mod grid;
pub mod operators;
mod scalar;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh = grid::Mesh1D<f64>;
pub type Field = grid::ScalarField<f64>;
pub type Coefficients = grid::CoefficientSet<f64>;
pub type Boundary = grid::BoundarySpec<f64>;
pub type State = dynamics::State<f64>;
pub type Operator = operators::EllipticOperator<f64>;
pub type ScalarEigenpair = eigen::ScalarEigenpair<f64>;
pub type SystemEigenpair = eigen::SystemEigenpair<f64>;
pub type EndemicEquilibrium = steady::EndemicEquilibrium<f64>;
pub type ThresholdReport = verify::ThresholdReport<f64>;
