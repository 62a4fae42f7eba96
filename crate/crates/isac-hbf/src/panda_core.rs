//! Generic distributed proximal-gradient ADMM machinery: penalty
//! configuration, the proximal surrogate step for the coupled smooth term,
//! augmented-Lagrangian assembly over per-agent penalty blocks, dual ascent,
//! and the coupled-term Lipschitz bound.
//!
//! The problem-specific content (channels, beampattern surrogates, constraint
//! projections) enters only through [`SplitObjective`] callbacks and the
//! per-agent matrices referenced by [`AgentBlocks`].

use crate::linalg::{fro_norm_sq, lambda_max_psd};
use crate::SolverError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Penalty weights and loop-control settings.
#[derive(Debug, Clone)]
pub struct PenaltyConfig {
    /// Weight of the copy-consensus penalty (T block).
    pub rho: f64,
    /// Weight of the beampattern-surrogate penalty (U block).
    pub varrho: f64,
    /// Weight of the notch penalty (Z block).
    pub lambda: f64,
    pub max_outer_iters: usize,
    /// Convergence requires max_a ||T - F_A F_D||_F / sqrt(E) below this.
    pub primal_tolerance: f64,
    /// Convergence requires the relative AL change below this.
    pub al_change_tolerance: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            rho: 1.0,
            varrho: 1.0,
            lambda: 1.0,
            max_outer_iters: 500,
            primal_tolerance: 1e-3,
            al_change_tolerance: 1e-5,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.rho > 0.0
            && self.varrho > 0.0
            && self.lambda > 0.0
            && self.primal_tolerance > 0.0
            && self.al_change_tolerance > 0.0
            && self.max_outer_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidParameter(
                "penalty weights, tolerances, and iteration cap must be positive".into(),
            ))
        }
    }
}

/// The split smooth objective `G(T) = coupled_value(sum of exchanges) +
/// sum_a Re Tr[linear_a T_a]`, with a Lipschitz bound on the coupled
/// gradient over the stacked copies.
pub struct SplitObjective<'a> {
    /// Gradient of the coupled term with respect to agent `a`'s copy, as a
    /// function of the summed exchange messages.
    pub coupled_gradient: &'a (dyn Fn(usize, &DMatrix<Complex64>) -> DMatrix<Complex64> + Sync),
    /// Value of the coupled term (plus any copy-independent constants) at the
    /// summed exchange messages.
    pub coupled_value: &'a (dyn Fn(&DMatrix<Complex64>) -> f64 + Sync),
    /// Per-agent linear coefficient B_a, contributing Re Tr[B_a X].
    pub separable_linear: &'a (dyn Fn(usize) -> DMatrix<Complex64> + Sync),
    /// Gradient Lipschitz bound of the coupled term; must dominate the true
    /// curvature for the proximal step to majorize.
    pub lipschitz_alpha: f64,
}

/// Borrowed view of one agent's primal and dual blocks for AL assembly.
pub struct AgentBlocks<'a> {
    /// Consensus copy T.
    pub copy: &'a DMatrix<Complex64>,
    /// Current coupling value F_A F_D.
    pub product: DMatrix<Complex64>,
    /// Beampattern-surrogate copy U.
    pub smooth: &'a DMatrix<Complex64>,
    /// Notch copy Z (one column per notch direction).
    pub notch: &'a DMatrix<Complex64>,
    /// Notch steering matrix A_N.
    pub notch_map: &'a DMatrix<Complex64>,
    pub dual_copy: &'a DMatrix<Complex64>,
    pub dual_smooth: &'a DMatrix<Complex64>,
    pub dual_notch: &'a DMatrix<Complex64>,
}

/// Per-iteration diagnostics of the ADMM loop.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub augmented_lagrangian: f64,
    /// ||T_a - F_A F_D||_F per agent.
    pub primal_residuals: Vec<f64>,
    /// Frobenius norms of this iteration's dual increments, per agent.
    pub dual_changes: Vec<f64>,
    /// Smooth objective G evaluated at the copies.
    pub surrogate: f64,
}

/// The point handed to the sphere projection in the copy update:
/// (1/(alpha + rho)) (-grad_G0 + alpha T_prev + rho (product - dual)).
pub fn prox_surrogate_target(
    t_prev: &DMatrix<Complex64>,
    grad_g0: &DMatrix<Complex64>,
    product: &DMatrix<Complex64>,
    dual_copy: &DMatrix<Complex64>,
    alpha: f64,
    rho: f64,
) -> DMatrix<Complex64> {
    debug_assert!(alpha + rho > 0.0);
    let beta = alpha + rho;
    let mut out = -grad_g0 + t_prev * Complex64::new(alpha, 0.0);
    out += (product - dual_copy) * Complex64::new(rho, 0.0);
    out / Complex64::new(beta, 0.0)
}

/// Augmented Lagrangian: the smooth objective at the copies plus the three
/// scaled penalty blocks of every agent. `exchange_sum` must be the summed
/// exchange messages computed at the copies.
pub fn augmented_lagrangian(
    objective: &SplitObjective,
    agents: &[AgentBlocks],
    exchange_sum: &DMatrix<Complex64>,
    penalties: &PenaltyConfig,
) -> f64 {
    let mut al = (objective.coupled_value)(exchange_sum);
    for (a, blocks) in agents.iter().enumerate() {
        let linear = (objective.separable_linear)(a);
        al += (&linear * blocks.copy).trace().re;
        al += 0.5 * penalties.rho * fro_norm_sq(&(blocks.copy - &blocks.product + blocks.dual_copy));
        al += 0.5
            * penalties.varrho
            * fro_norm_sq(&(blocks.smooth - &blocks.product + blocks.dual_smooth));
        let notch_target = blocks.product.adjoint() * blocks.notch_map;
        al += 0.5
            * penalties.lambda
            * fro_norm_sq(&(blocks.notch - notch_target + blocks.dual_notch));
    }
    al
}

/// Scaled dual ascent: dual += current - reference.
pub fn dual_ascent(
    dual: &mut DMatrix<Complex64>,
    current: &DMatrix<Complex64>,
    reference: &DMatrix<Complex64>,
) {
    *dual += current - reference;
}

/// Gradient Lipschitz bound of the coupled term over the stacked copies:
/// 2 lambda_max(J1 (sum_a H_a^H H_a) J1^H), computed on the exchange-sized
/// (U x U) matrix by power iteration. `j1` is the diagonal of J1. Floored at
/// 1e-8 so the proximal step stays well defined for zero channels.
pub fn estimate_lipschitz(channels: &[DMatrix<Complex64>], j1: &DVector<Complex64>) -> f64 {
    let u = j1.len();
    let mut m = DMatrix::<Complex64>::zeros(u, u);
    for h in channels {
        m += h.adjoint() * h;
    }
    for r in 0..u {
        for c in 0..u {
            m[(r, c)] = j1[r] * m[(r, c)] * j1[c].conj();
        }
    }
    (2.0 * lambda_max_psd(&m, 50, 1e-8)).max(1e-8)
}
