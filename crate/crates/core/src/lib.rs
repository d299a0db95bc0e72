//! Hybridizable discontinuous Galerkin discretization of third-order KdV-type equations
//!
//! ```text
//! u_t + u_xxx + F(u)_x = f,   F(u) = beta u^m,   x in (a, b)
//! u = u_D at a and b,         u_x = q_N at b
//! ```
//!
//! The equation is written as the first-order system `q = u_x`, `p = q_x`,
//! `u_t + p_x + F(u)_x = f`. Each element carries modal `P_k` approximations of
//! `(u, q, p)`; the only globally coupled unknowns are `u_hat` at every node and the
//! one-sided `p_hat^-` at nodes `x_1..x_N`, `2N + 1` values in total. Every implicit
//! stage is solved by Newton's method, with the element unknowns eliminated locally
//! before a banded solve for the trace increments.

pub mod banded;
pub mod error;
pub mod experiments;
pub mod flux;
pub mod global;
pub mod jet;
pub mod local;
pub mod mesh;
pub mod polybasis;
pub mod problems;
pub mod stepper;
pub mod verify;

pub use error::{HdgError, Result};
pub use flux::{check_stability_conditions, FluxSpec, StabilityReport, StabilizationParams, TauFRule};
pub use mesh::{Element, Mesh};
pub use polybasis::ReferenceBasis;
pub use stepper::{HdgSolver, InitMode, NewtonSettings, ProblemSpec, SolutionState, TimeScheme};
