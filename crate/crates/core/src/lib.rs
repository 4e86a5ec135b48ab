//! Numerical laboratory for zero-sum stochastic differential games whose
//! state is constrained to a bounded domain by normal reflection and whose
//! cost is the solution of a generalized BSDE (a BSDE with an extra
//! `f dη` term integrated against the local time of the reflected state).
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: the domain `O = {φ > 0}`, its inward normal `∇φ` and
//!   the projection used by the reflected Euler scheme.
//! * [`dynamics`]: coefficient catalog `(b, σ, g, f, Φ)`, control grids and
//!   an assumption auditor.
//! * [`rsde`]: projected Euler simulation of the reflected SDE and the
//!   coupled-path moment experiments.
//! * [`gbsde`]: regression-based backward solver, backward semigroup,
//!   flow and comparison checks.
//! * [`timechange`]: the clock `ψ_s = A_s + s − A_t`, its inverse, the
//!   density pair `(a, b)` and the generator representation limit.
//! * [`isaacs`]: Hamiltonians and a monotone explicit finite-difference
//!   solver for the Isaacs equation with nonlinear Neumann boundary.
//! * [`game`]: semi-Lagrangian dynamic-programming values, DPP residuals,
//!   regularity moduli and three-way cross-validation.
//! * [`fixtures`]: the named problem catalog used by the CLI and tests.

pub mod dynamics;
pub mod error;
pub mod fixtures;
pub mod game;
pub mod gbsde;
pub mod geometry;
pub mod isaacs;
pub mod report;
pub mod rng;
pub mod rsde;
pub mod timechange;

pub use dynamics::{CoefficientSet, ControlLabel, ControlSet, ProblemSpec};
pub use error::{Error, Result};
pub use geometry::{Domain, ProjectionResult, Region};
pub use report::{ValidationReport, Violation};
pub use rsde::{FixedControl, PathEnsemble, Policy};
