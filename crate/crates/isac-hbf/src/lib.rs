//! Cooperative multi-AP integrated sensing and communication (ISAC) hybrid
//! beamforming designer.
//!
//! A set of dual-function access points (APs) jointly serves downlink users and
//! illuminates radar targets. Each AP runs a hybrid beamformer: an analog
//! phase-shifter matrix `F_A` (unit-modulus entries) cascaded with a small
//! digital matrix `F_D`. The design problem maximizes the weighted sum rate
//! subject to per-AP transmit beampattern shaping (mainlobe matching plus
//! deep notches toward clutter and other APs), a per-AP power budget, and the
//! constant-modulus analog constraint.
//!
//! Crate layout mirrors the pipeline:
//! - [`scene`]: geometry, steering vectors, path loss, mmWave channels, and
//!   per-AP beampattern specifications.
//! - [`metrics`]: user rates, beampatterns, radar SINR, and the cooperative
//!   GLRT detector (analytic and Monte-Carlo).
//! - [`panda_core`]: generic distributed proximal-gradient ADMM machinery —
//!   augmented Lagrangian, prox surrogate step, dual ascent, Lipschitz
//!   estimation.
//! - [`hbf_solver`]: closed-form subproblem solvers for the beamforming
//!   splitting (T, U, Z, F_A, F_D, V, zeta, r, eta).
//! - [`runtime`]: per-AP worker orchestration with barrier-synchronized
//!   message exchange, plus the centralized ADMM reference solver.

// Validation throughout uses `!(x > 0.0)` rather than `x <= 0.0` so that NaN
// inputs land on the rejection branch; the lint's suggested rewrite would let
// NaN through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod hbf_solver;
pub mod linalg;
pub mod metrics;
pub mod panda_core;
pub mod runtime;
pub mod scene;

pub use num_complex::Complex64;

/// Errors surfaced by solvers and model builders.
#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    /// A beampattern MSE budget cannot be met by any digital/auxiliary choice.
    #[error(
        "infeasible beampattern MSE budget at AP {ap} (iteration {iteration}): \
         minimum achievable {min_achievable:.6e} > budget {budget:.6e}"
    )]
    InfeasibleMseBudget {
        ap: usize,
        iteration: usize,
        min_achievable: f64,
        budget: f64,
    },
    /// Inconsistent dimensions between inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Invalid scene or model parameter.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
