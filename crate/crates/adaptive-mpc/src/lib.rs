//! Adaptive tracking MPC for unknown nonlinear systems.
//!
//! The controller alternates between two steps: it fits a local affine model
//! to a moving window of recent state/input/output measurements via
//! regularized least squares, and it solves a convex tracking-MPC problem
//! built on that model, with an artificial steady-state as terminal target.
//! The first `n` optimal inputs are applied open-loop, the window advances,
//! and the cycle repeats.
//!
//! Modules:
//! - [`plant`]: plant trait, the CSTR benchmark, input-rate augmentation,
//!   rollout, and finite-difference linearization.
//! - [`sysid`]: moving data window, least-squares identification, and
//!   singular-value diagnostics.
//! - [`qp`]: dense convex QP solver (dual active set) with an
//!   equality-constrained kernel and a brute-force enumeration oracle.
//! - [`mpc`]: tracking-MPC problem construction, condensing, and the
//!   steady-state optimization quantities.
//! - [`closed_loop`]: bootstrap and the full adaptive control loop.
//! - [`analysis`]: tracking-error metric, true-plant equilibria,
//!   identification-error diagnostics, and parameter sweeps.
//! - [`cli`] / [`config`]: command front end, flat-file configuration, and
//!   CSV emission.
//!
//! See the crate examples for runnable entry points into each capability.

pub mod analysis;
pub mod cli;
pub mod closed_loop;
pub mod config;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod sysid;

pub use analysis::{
    id_error_diagnostic, plant_equilibrium, run_sweep, tracking_error, PlantEquilibrium,
    SweepGrid, SweepSpec,
};
pub use closed_loop::{bootstrap, run_closed_loop, BootstrapStrategy, ClosedLoopTrace};
pub use mpc::{
    build_tracking_qp, lyapunov_candidate, optimal_reachable_cost, solve_tracking, MpcConfig,
    MpcSolution,
};
pub use plant::{linearize, simulate, AffinePlant, AugmentedPlant, CstrPlant, Plant};
pub use qp::{brute_force_qp, solve_eqp, solve_qp, QpProblem, QpSolution, QpStatus};
pub use sysid::{assumption_report, identify, pe_metric, AffineModel, DataWindow};
