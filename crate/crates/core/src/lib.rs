//! Adaptive-gain feedback control of the replicator equation for symmetric
//! two-action matrix games.
//!
//! The payoff matrix is nudged by `g(t) * G` for a fixed binary control
//! matrix `G`, and the gain follows `g' = phi(x) g`. The crate classifies
//! games, integrates the resulting planar system on `[0,1] x [0,inf)`,
//! locates and classifies its equilibria, checks convergence claims over
//! parameter grids, and cross-validates the mean-field model against a
//! finite-population imitation process.

pub mod abm;
pub mod analysis;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod integrator;

pub use abm::{compare_to_ode, simulate_abm, AbmConfig, DeviationReport};
pub use analysis::{
    basin_sample, detect_convergence, run_suite, ConvergenceCriteria, Limit, Suite, SuiteReport, Target,
};
pub use controller::{check_validity, effective_payoff, Adaptation, ControlMatrix, ControllerSpec, Theorem};
pub use dynamics::{ControlledSystem, EquilibriumReport, Stability, SystemState};
pub use error::{Error, Result};
pub use game::{classify, mixed_ne, reward_vector, GameClass, PayoffMatrix};
pub use integrator::{integrate, integrate_with, step, IntegratorConfig, Trajectory};
