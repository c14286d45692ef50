//! Simulation and verification toolkit for volume-preserving curvature
//! flows on convex hypersurfaces.
//!
//! A convex body is stored by its support function sampled on the unit
//! sphere of outward normals (the Gauss-map parametrization), so the flow
//! `du/dt = h(t) - sigma` moves scalar support values on a fixed grid and
//! convexity is a pointwise condition on the curvature radii. Two
//! rotationally reduced backends are provided: closed curves in the plane
//! (`Backend::Circle`) and axisymmetric surfaces in space
//! (`Backend::Axisymmetric`).
//!
//! Module map:
//! - [`algebra`]: elementary symmetric polynomials of principal
//!   curvatures, speed laws `sigma = E_k^alpha`, gradients, and the
//!   pointwise identities they satisfy;
//! - [`body`]: grids, support fields, curvature radii, quadrature,
//!   mixed volumes, extremal radii, serialization, and shape generators;
//! - [`flow`]: the adaptive volume-preserving integrator;
//! - [`diag`]: per-instant diagnostics records, their CSV codec, and the
//!   trajectory audits (monotonicity, balance, pinching, convergence);
//! - [`verify`]: randomized self-check suites with a deliberate-defect
//!   switch for testing the harness itself.

pub mod algebra;
pub mod body;
pub mod diag;
pub mod flow;
pub mod verify;

pub use algebra::{AlgebraError, SpeedLaw};
pub use body::{make_body, Backend, BodyError, ShapeSpec, SupportField};
pub use diag::{AuditContext, AuditReport, DiagnosticsRecord};
pub use flow::{FlowConfig, FlowError, FlowState, StopReason, Trajectory};
pub use verify::{Corruption, SuiteOutcome};
