//! Finite-volume simulation of the logistic chemotaxis system with weak
//! singular sensitivity
//!
//! ```text
//! u_t   = Δu − χ ∇·(u v^{-k} ∇v) + r u − μ u²
//! κ v_t = Δv − α v + β u          (κ ∈ {0, 1})
//! ```
//!
//! on a rectangle with homogeneous Neumann boundaries, together with a
//! monitor that tracks the functionals controlled by the a priori estimates
//! for this system and flags blow-up.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod diagnostics;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod operators;
pub mod oracles;
pub mod solver;

pub use config::{RunConfig, SweepConfig};
pub use diagnostics::{BoundReport, DiagnosticsConfig, DiagnosticsRecord, Monitor};
pub use integrator::{Integrator, RunSummary, StepControl, StepOutcome, StepStatus};
pub use model::{Grid, InitialData, ModelParameters, ScalarField, SignalMode, SimState};
pub use solver::SolverSettings;
