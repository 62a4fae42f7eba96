//! Orchestration of the beamforming solvers: bulk-synchronous distributed
//! iterations with per-AP workers and compressed exchange messages, a
//! centralized reference that solves the consensus-copy block exactly by
//! coordinate sweeps, and the shared convergence bookkeeping.

use crate::hbf_solver::{
    b2_matrix, c1_constant, coupled_gradient, exchange_message, initialize_state, j1_diagonal,
    surrogate_pattern_mse, update_fa, update_fd, update_r_eta, update_t, update_u, update_v,
    update_z, update_zeta, ApSolverState, AuxScalars,
};
use crate::linalg::{derive_seed, fro_norm_sq, hermitian_eigen, HermitianEigen};
use crate::metrics::weighted_sum_rate;
use crate::panda_core::{
    augmented_lagrangian, dual_ascent, estimate_lipschitz, AgentBlocks, IterationReport,
    PenaltyConfig, SplitObjective,
};
use crate::scene::{BeampatternSpec, ChannelSet, NetworkScene};
use crate::{Complex64, SolverError};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::time::Instant;

/// Solver-wide knobs shared by both algorithms.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub penalties: PenaltyConfig,
    /// Inner iteration cap of the unit-modulus descent in the analog update.
    pub bsum_inner_iters: usize,
    /// Master seed; per-AP initialization seeds are derived from it.
    pub seed: u64,
    /// Rate weights, one per user, all positive.
    pub user_weights: Vec<f64>,
    /// Consecutive flat-objective iterations that declare a stall.
    pub stall_window: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            penalties: PenaltyConfig::default(),
            bsum_inner_iters: 50,
            seed: 0,
            user_weights: Vec::new(),
            stall_window: 25,
        }
    }
}

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Primal residual and objective-change tolerances both met.
    Residual,
    /// Objective flat for a full stall window while residuals stayed high.
    AlStall,
    /// Outer iteration cap reached.
    IterationCap,
}

/// How the centralized reference solves the consensus-copy block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CenS1Mode {
    /// Exact per-agent sphere-constrained quadratic minimization in
    /// Gauss-Seidel sweeps.
    Exact,
    /// The same proximal linearized step the distributed solver uses.
    ProxLinearized,
}

/// Per-iteration diagnostics gathered by the orchestrator.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub core: IterationReport,
    /// Augmented Lagrangian right before the primal sweep, at the same duals
    /// and auxiliaries as the post-sweep value in `core`.
    pub al_pre_sweep: f64,
    /// Per-AP distance of the pattern copy from the composite beam.
    pub pattern_residuals: Vec<f64>,
    /// Per-AP distance of the notch copy from its beam image.
    pub notch_residuals: Vec<f64>,
    /// Weighted sum rate of the composite beams, bits.
    pub weighted_sum_rate: f64,
    /// Per-AP surrogate beampattern matching error of the pattern copy,
    /// normalized by the transmit power budget (comparable to the
    /// power-relative budget numbers a scene is configured with).
    pub pattern_mse_per_ap: Vec<f64>,
    /// Per-AP maximum notch-direction power of the notch copy, normalized by
    /// the transmit power budget.
    pub notch_power_per_ap: Vec<f64>,
}

/// Complete outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub states: Vec<ApSolverState>,
    pub reports: Vec<StepDiagnostics>,
    /// Wall-clock per iteration, milliseconds; kept out of `reports` so that
    /// determinism checks can compare reports exactly.
    pub wall_clock_ms: Vec<f64>,
    pub termination: Termination,
    /// Complex scalars broadcast per iteration over all APs.
    pub exchange_complex_per_iteration: usize,
}

enum CopyStepPlan {
    Prox { parallel: bool },
    Bcd { mode: CenS1Mode, max_sweeps: usize, sweep_tolerance: f64 },
}

/// Distributed solve: every AP owns its state, exchanges a U x U message per
/// iteration, and runs its block updates in parallel. Bitwise deterministic
/// for a fixed seed and AP ordering, independent of worker count.
pub fn run_panda_distributed(
    scene: &NetworkScene,
    channels: &ChannelSet,
    specs: &[BeampatternSpec],
    options: &RunOptions,
) -> Result<SolveResult, SolverError> {
    run_engine(scene, channels, specs, options, CopyStepPlan::Prox { parallel: true })
}

/// Centralized reference: identical block updates, but the consensus copies
/// are minimized exactly by Gauss-Seidel sweeps over agents (relative
/// objective change below 1e-6 or 20 sweeps). Single-threaded.
pub fn run_centralized_admm(
    scene: &NetworkScene,
    channels: &ChannelSet,
    specs: &[BeampatternSpec],
    options: &RunOptions,
) -> Result<SolveResult, SolverError> {
    run_engine(
        scene,
        channels,
        specs,
        options,
        CopyStepPlan::Bcd { mode: CenS1Mode::Exact, max_sweeps: 20, sweep_tolerance: 1e-6 },
    )
}

/// Centralized run with an explicit copy-block strategy and sweep cap; the
/// proximal mode with one sweep reproduces the distributed trajectory for a
/// single AP, which pins the two frameworks against each other in tests.
pub fn run_centralized_with_s1(
    scene: &NetworkScene,
    channels: &ChannelSet,
    specs: &[BeampatternSpec],
    options: &RunOptions,
    mode: CenS1Mode,
    max_sweeps: usize,
) -> Result<SolveResult, SolverError> {
    run_engine(
        scene,
        channels,
        specs,
        options,
        CopyStepPlan::Bcd { mode, max_sweeps, sweep_tolerance: 1e-6 },
    )
}

/// Classifies the current trajectory: residual convergence (minimum two
/// iterations), a stalled objective, or neither.
pub fn convergence_check(
    reports: &[StepDiagnostics],
    penalties: &PenaltyConfig,
    energy: f64,
    stall_window: usize,
) -> Option<Termination> {
    if reports.len() < 2 {
        return None;
    }
    let last = &reports[reports.len() - 1];
    let prev = &reports[reports.len() - 2];
    let max_residual =
        last.core.primal_residuals.iter().cloned().fold(0.0_f64, f64::max);
    let residual_ok = max_residual / energy.sqrt() < penalties.primal_tolerance;
    let al_flat = |a: f64, b: f64| (a - b).abs() <= penalties.al_change_tolerance * b.abs().max(1e-12);
    if residual_ok && al_flat(last.core.augmented_lagrangian, prev.core.augmented_lagrangian) {
        return Some(Termination::Residual);
    }
    if reports.len() > stall_window {
        let start = reports.len() - stall_window;
        let stalled = (start..reports.len()).all(|k| {
            al_flat(
                reports[k].core.augmented_lagrangian,
                reports[k - 1].core.augmented_lagrangian,
            )
        });
        if stalled {
            return Some(Termination::AlStall);
        }
    }
    None
}

fn validate_inputs(
    scene: &NetworkScene,
    channels: &ChannelSet,
    specs: &[BeampatternSpec],
    options: &RunOptions,
) -> Result<(), SolverError> {
    scene.validate()?;
    options.penalties.validate()?;
    let a_count = scene.n_aps();
    let n_users = scene.n_users();
    if channels.per_ap.len() != a_count {
        return Err(SolverError::Dimension(format!(
            "{} channel matrices for {} APs",
            channels.per_ap.len(),
            a_count
        )));
    }
    if specs.len() != a_count {
        return Err(SolverError::Dimension(format!(
            "{} beampattern specs for {} APs",
            specs.len(),
            a_count
        )));
    }
    if options.user_weights.len() != n_users {
        return Err(SolverError::Dimension(format!(
            "{} rate weights for {} users",
            options.user_weights.len(),
            n_users
        )));
    }
    if options.user_weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(SolverError::InvalidParameter("rate weights must be positive".into()));
    }
    if options.bsum_inner_iters == 0 {
        return Err(SolverError::InvalidParameter("need at least one analog inner step".into()));
    }
    if options.stall_window < 2 {
        return Err(SolverError::InvalidParameter("stall window must be at least 2".into()));
    }
    for (a, spec) in specs.iter().enumerate() {
        let l = spec.grid_angles.len();
        if l < 2 || spec.weights.len() != l || spec.desired_spectrum.len() != l {
            return Err(SolverError::Dimension(format!(
                "beampattern spec {a} has inconsistent grid sizes"
            )));
        }
        if !(spec.mse_budget > 0.0) || !spec.mse_budget.is_finite() {
            return Err(SolverError::InvalidParameter(format!(
                "beampattern spec {a}: matching budget must be positive"
            )));
        }
        if !(spec.notch_budget > 0.0) || !spec.notch_budget.is_finite() {
            return Err(SolverError::InvalidParameter(format!(
                "beampattern spec {a}: notch budget must be positive"
            )));
        }
    }
    Ok(())
}

/// Full augmented Lagrangian at the current states and auxiliaries, with the
/// exchange sum recomputed from the current copies.
#[allow(clippy::too_many_arguments)]
fn evaluate_al(
    states: &[ApSolverState],
    channels: &[DMatrix<Complex64>],
    aux: &AuxScalars,
    j1: &DVector<Complex64>,
    b2s: &[DMatrix<Complex64>],
    weights: &[f64],
    noises: &[f64],
    alpha: f64,
    penalties: &PenaltyConfig,
) -> f64 {
    let u = j1.len();
    let c1 = c1_constant(aux, weights, noises);
    let coupled_value = move |xi: &DMatrix<Complex64>| -> f64 {
        let mut acc = 0.0;
        for r in 0..xi.nrows() {
            for c in 0..xi.ncols() {
                acc += (j1[r] * xi[(r, c)]).norm_sqr();
            }
        }
        acc - c1
    };
    let coupled_grad =
        move |a: usize, xi: &DMatrix<Complex64>| coupled_gradient(&channels[a], j1, xi);
    let separable = move |a: usize| b2s[a].clone();
    let objective = SplitObjective {
        coupled_gradient: &coupled_grad,
        coupled_value: &coupled_value,
        separable_linear: &separable,
        lipschitz_alpha: alpha,
    };
    let agents: Vec<AgentBlocks> = states
        .iter()
        .map(|s| AgentBlocks {
            copy: &s.t,
            product: s.hbf.composite(),
            smooth: &s.u_mat,
            notch: &s.z,
            notch_map: &s.a_notch,
            dual_copy: &s.dual_t,
            dual_smooth: &s.dual_u,
            dual_notch: &s.dual_z,
        })
        .collect();
    let mut xi_sum = DMatrix::zeros(u, u);
    for (a, s) in states.iter().enumerate() {
        xi_sum += channels[a].adjoint() * &s.t;
    }
    augmented_lagrangian(&objective, &agents, &xi_sum, penalties)
}

/// Exchange sum over all agents' current copies, in fixed AP order.
fn exchange_sum_now(
    states: &[ApSolverState],
    channels: &[DMatrix<Complex64>],
    skip: Option<usize>,
) -> DMatrix<Complex64> {
    let u = states[0].t.ncols();
    let mut xi = DMatrix::zeros(u, u);
    for (a, s) in states.iter().enumerate() {
        if Some(a) == skip {
            continue;
        }
        xi += channels[a].adjoint() * &s.t;
    }
    xi
}

/// Exact sphere-constrained minimization of one agent's copy block: the
/// quadratic's eigenbasis reduces the optimality condition to a scalar
/// secular equation in the multiplier, solved by bisection with the usual
/// degenerate-eigenspace handling.
#[allow(clippy::too_many_arguments)]
fn exact_copy_step(
    state: &mut ApSolverState,
    channel: &DMatrix<Complex64>,
    j1: &DVector<Complex64>,
    b2: &DMatrix<Complex64>,
    xi_minus: &DMatrix<Complex64>,
    rho: f64,
    quad: &DMatrix<Complex64>,
    eig: &HermitianEigen,
) {
    let energy = state.energy;
    // Linear coefficient per column of the copy.
    let mut c = coupled_gradient(channel, j1, xi_minus) * Complex64::new(0.5, 0.0);
    c += b2.adjoint() * Complex64::new(0.5, 0.0);
    c -= (state.hbf.composite() - &state.dual_t) * Complex64::new(0.5 * rho, 0.0);
    let q = &eig.eigenvectors;
    let d = &eig.eigenvalues;
    let ctil = q.adjoint() * &c;
    let n = d.len();
    let ncols = ctil.ncols();
    let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let near_min = |dn: f64| dn <= dmin + 1e-10 * dmax.abs().max(1.0);
    let total: f64 = ctil.iter().map(|z| z.norm_sqr()).sum();
    let q_value = |t: &DMatrix<Complex64>| -> f64 {
        (t.adjoint() * quad * t).trace().re + 2.0 * crate::linalg::inner_re(&c, t)
    };
    let before = q_value(&state.t);

    let mut ttil = DMatrix::<Complex64>::zeros(n, ncols);
    if total <= 1e-300 {
        // No linear pull at all: park the power on the smallest curvature.
        state.degenerate = true;
        let idx = (0..n).find(|&i| near_min(d[i])).unwrap();
        ttil[(idx, 0)] = Complex64::new(energy.sqrt(), 0.0);
    } else {
        let s_min: f64 = (0..n)
            .filter(|&i| near_min(d[i]))
            .map(|i| (0..ncols).map(|jx| ctil[(i, jx)].norm_sqr()).sum::<f64>())
            .sum();
        // Squared norm of the candidate as a function of the multiplier,
        // excluding eigendirections whose numerator vanished.
        let phi = |eps: f64, skip_min: bool| -> f64 {
            let mut acc = 0.0;
            for i in 0..n {
                if skip_min && near_min(d[i]) {
                    continue;
                }
                let den = d[i] + eps;
                let mut row = 0.0;
                for jx in 0..ncols {
                    row += ctil[(i, jx)].norm_sqr();
                }
                acc += row / (den * den);
            }
            acc
        };
        if s_min > 1e-28 * total {
            // The norm blows up at the pole, so a root always exists.
            let scale = dmax.abs().max(1.0);
            let mut offset_hi = scale;
            while phi(-dmin + offset_hi, false) > energy {
                offset_hi *= 2.0;
                if offset_hi > 1e300 {
                    break;
                }
            }
            let mut offset_lo = offset_hi;
            while phi(-dmin + offset_lo, false) <= energy && offset_lo > 1e-300 {
                offset_lo *= 0.5;
            }
            let mut lo = -dmin + offset_lo;
            let mut hi = -dmin + offset_hi;
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if phi(mid, false) > energy {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let eps = 0.5 * (lo + hi);
            for i in 0..n {
                let den = Complex64::new(d[i] + eps, 0.0);
                for jx in 0..ncols {
                    ttil[(i, jx)] = -ctil[(i, jx)] / den;
                }
            }
        } else if phi(-dmin, true) >= energy {
            // Root at or above the pole with the vanished directions removed.
            let scale = dmax.abs().max(1.0);
            let mut lo = -dmin;
            let mut hi = -dmin + scale;
            while phi(hi, true) > energy {
                hi += scale * (hi + dmin + 1.0);
                if hi > 1e300 {
                    break;
                }
            }
            for _ in 0..300 {
                let mid = 0.5 * (lo + hi);
                if phi(mid, true) > energy {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let eps = 0.5 * (lo + hi);
            for i in 0..n {
                if near_min(d[i]) {
                    continue;
                }
                let den = Complex64::new(d[i] + eps, 0.0);
                for jx in 0..ncols {
                    ttil[(i, jx)] = -ctil[(i, jx)] / den;
                }
            }
        } else {
            // Degenerate direction: fill the leftover power along the
            // smallest eigendirection.
            for i in 0..n {
                if near_min(d[i]) {
                    continue;
                }
                let den = Complex64::new(d[i] - dmin, 0.0);
                for jx in 0..ncols {
                    ttil[(i, jx)] = -ctil[(i, jx)] / den;
                }
            }
            let used: f64 = ttil.iter().map(|z| z.norm_sqr()).sum();
            let idx = (0..n).find(|&i| near_min(d[i])).unwrap();
            ttil[(idx, 0)] += Complex64::new((energy - used).max(0.0).sqrt(), 0.0);
            state.degenerate = true;
        }
    }
    let mut new_t = q * ttil;
    let norm_sq = fro_norm_sq(&new_t);
    if norm_sq > 0.0 {
        new_t *= Complex64::new((energy / norm_sq).sqrt(), 0.0);
    }
    debug_assert!((fro_norm_sq(&new_t) - energy).abs() <= 1e-9 * energy);
    debug_assert!({
        let after = q_value(&new_t);
        after <= before + 1e-9 * before.abs().max(1.0)
    });
    state.t = new_t;
}

fn tag_infeasible(err: SolverError, ap: usize, iteration: usize) -> SolverError {
    match err {
        SolverError::InfeasibleMseBudget { min_achievable, budget, .. } => {
            SolverError::InfeasibleMseBudget { ap, iteration, min_achievable, budget }
        }
        other => other,
    }
}

fn run_engine(
    scene: &NetworkScene,
    channels: &ChannelSet,
    specs: &[BeampatternSpec],
    options: &RunOptions,
    plan: CopyStepPlan,
) -> Result<SolveResult, SolverError> {
    validate_inputs(scene, channels, specs, options)?;
    let a_count = scene.n_aps();
    let n_users = scene.n_users();
    let energy = scene.tx_power_budget;
    let weights = options.user_weights.clone();
    let pen = &options.penalties;

    // Condition the data: user rates are invariant under a joint rescaling
    // of channels and noise powers, so normalize channels to unit mean-square
    // entry. This keeps the rate term's curvature comparable to the penalty
    // weights regardless of physical path-loss magnitudes.
    let mean_sq: f64 = channels.per_ap.iter().map(fro_norm_sq).sum::<f64>()
        / (a_count * channels.per_ap[0].nrows() * n_users) as f64;
    let scale = if mean_sq > 0.0 { mean_sq.sqrt() } else { 1.0 };
    let scaled: Vec<DMatrix<Complex64>> = channels
        .per_ap
        .iter()
        .map(|h| h.map(|z| z / Complex64::new(scale, 0.0)))
        .collect();
    let noises: Vec<f64> =
        scene.noise_power_comm.iter().map(|s| s / (scale * scale)).collect();

    let mut states: Vec<ApSolverState> = (0..a_count)
        .map(|a| {
            initialize_state(
                &scaled[a],
                &specs[a],
                energy,
                scene.n_rf,
                derive_seed(options.seed, 1000 + a as u64),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut reports: Vec<StepDiagnostics> = Vec::new();
    let mut wall_clock_ms = Vec::new();
    let mut termination = Termination::IterationCap;

    for iteration in 0..pen.max_outer_iters {
        let tick = Instant::now();
        // Broadcast round: one U x U message per AP, summed in fixed order.
        let messages: Vec<_> =
            states.iter().enumerate().map(|(a, s)| exchange_message(&scaled[a], s, a)).collect();
        let mut xi_sum = DMatrix::<Complex64>::zeros(n_users, n_users);
        for m in &messages {
            xi_sum += &m.xi;
        }
        let aux = update_r_eta(&xi_sum, &weights, &noises);
        let j1 = j1_diagonal(&aux);
        let alpha = estimate_lipschitz(&scaled, &j1);
        let b2s: Vec<_> =
            (0..a_count).map(|a| b2_matrix(&scaled[a], &aux, &weights)).collect();
        let al_pre = evaluate_al(
            &states, &scaled, &aux, &j1, &b2s, &weights, &noises, alpha, pen,
        );

        match &plan {
            CopyStepPlan::Prox { parallel } => {
                let worker = |a: usize, state: &mut ApSolverState| -> Result<(), SolverError> {
                    update_v(state, &specs[a]);
                    update_zeta(state, &specs[a]);
                    let grad = coupled_gradient(&scaled[a], &j1, &xi_sum);
                    update_t(state, &grad, &b2s[a], alpha, pen.rho);
                    update_u(state, &specs[a]).map_err(|e| tag_infeasible(e, a, iteration))?;
                    update_z(state, specs[a].notch_budget);
                    update_fa(state, pen.rho, pen.varrho, pen.lambda, options.bsum_inner_iters);
                    update_fd(state, pen.rho, pen.varrho, pen.lambda);
                    Ok(())
                };
                let results: Vec<Result<(), SolverError>> = if *parallel {
                    states.par_iter_mut().enumerate().map(|(a, s)| worker(a, s)).collect()
                } else {
                    states.iter_mut().enumerate().map(|(a, s)| worker(a, s)).collect()
                };
                for r in results {
                    r?;
                }
            }
            CopyStepPlan::Bcd { mode, max_sweeps, sweep_tolerance } => {
                for a in 0..a_count {
                    update_v(&mut states[a], &specs[a]);
                    update_zeta(&mut states[a], &specs[a]);
                }
                // Exact mode factors each agent's quadratic once per outer
                // iteration; the factors do not change across sweeps.
                let factors: Vec<Option<(DMatrix<Complex64>, HermitianEigen)>> = match mode {
                    CenS1Mode::Exact => (0..a_count)
                        .map(|a| {
                            let h = &scaled[a];
                            let n_tx = h.nrows();
                            let mut m = DMatrix::<Complex64>::identity(n_tx, n_tx)
                                * Complex64::new(0.5 * pen.rho, 0.0);
                            let mut weighted_h = h.clone();
                            for r in 0..weighted_h.nrows() {
                                for cc in 0..weighted_h.ncols() {
                                    weighted_h[(r, cc)] *= Complex64::new(j1[cc].norm_sqr(), 0.0);
                                }
                            }
                            m += &weighted_h * h.adjoint();
                            let eig = hermitian_eigen(&m);
                            Some((m, eig))
                        })
                        .collect(),
                    CenS1Mode::ProxLinearized => (0..a_count).map(|_| None).collect(),
                };
                let mut al_sweep = al_pre;
                for _sweep in 0..*max_sweeps {
                    for a in 0..a_count {
                        match mode {
                            CenS1Mode::ProxLinearized => {
                                let xi_now = exchange_sum_now(&states, &scaled, None);
                                let grad = coupled_gradient(&scaled[a], &j1, &xi_now);
                                update_t(&mut states[a], &grad, &b2s[a], alpha, pen.rho);
                            }
                            CenS1Mode::Exact => {
                                let xi_minus =
                                    exchange_sum_now(&states, &scaled, Some(a));
                                let (quad, eig) = factors[a].as_ref().unwrap();
                                exact_copy_step(
                                    &mut states[a],
                                    &scaled[a],
                                    &j1,
                                    &b2s[a],
                                    &xi_minus,
                                    pen.rho,
                                    quad,
                                    eig,
                                );
                            }
                        }
                    }
                    let al_now = evaluate_al(
                        &states, &scaled, &aux, &j1, &b2s, &weights, &noises, alpha, pen,
                    );
                    let done =
                        (al_now - al_sweep).abs() <= sweep_tolerance * al_sweep.abs().max(1e-12);
                    al_sweep = al_now;
                    if done {
                        break;
                    }
                }
                for a in 0..a_count {
                    update_u(&mut states[a], &specs[a])
                        .map_err(|e| tag_infeasible(e, a, iteration))?;
                    update_z(&mut states[a], specs[a].notch_budget);
                    update_fa(
                        &mut states[a],
                        pen.rho,
                        pen.varrho,
                        pen.lambda,
                        options.bsum_inner_iters,
                    );
                    update_fd(&mut states[a], pen.rho, pen.varrho, pen.lambda);
                }
            }
        }

        // Gather diagnostics before dual ascent so the pre/post objective
        // pair shares the same duals.
        let al_post = evaluate_al(
            &states, &scaled, &aux, &j1, &b2s, &weights, &noises, alpha, pen,
        );
        debug_assert!(
            al_post <= al_pre + 1e-6 * al_pre.abs().max(1e-9),
            "primal sweep increased the augmented Lagrangian: {al_pre} -> {al_post}"
        );
        let beams: Vec<_> = states.iter().map(|s| s.hbf.composite()).collect();
        let wsr = weighted_sum_rate(&scaled, &beams, &weights, &noises)?;
        let xi_new = exchange_sum_now(&states, &scaled, None);
        let mut surrogate = -c1_constant(&aux, &weights, &noises);
        for r in 0..n_users {
            for cc in 0..n_users {
                surrogate += (j1[r] * xi_new[(r, cc)]).norm_sqr();
            }
        }
        for (a, s) in states.iter().enumerate() {
            surrogate += (&b2s[a] * &s.t).trace().re;
        }

        let mut primal_residuals = Vec::with_capacity(a_count);
        let mut pattern_residuals = Vec::with_capacity(a_count);
        let mut notch_residuals = Vec::with_capacity(a_count);
        let mut dual_changes = Vec::with_capacity(a_count);
        let mut pattern_mse_per_ap = Vec::with_capacity(a_count);
        let mut notch_power_per_ap = Vec::with_capacity(a_count);
        for (a, s) in states.iter_mut().enumerate() {
            let p = s.hbf.composite();
            let notch_image = p.adjoint() * &s.a_notch;
            let rt = (&s.t - &p).norm();
            let ru = (&s.u_mat - &p).norm();
            let rz = (&s.z - &notch_image).norm();
            dual_ascent(&mut s.dual_t, &s.t, &p);
            dual_ascent(&mut s.dual_u, &s.u_mat, &p);
            dual_ascent(&mut s.dual_z, &s.z, &notch_image);
            primal_residuals.push(rt);
            pattern_residuals.push(ru);
            notch_residuals.push(rz);
            dual_changes.push((rt * rt + ru * ru + rz * rz).sqrt());
            pattern_mse_per_ap.push(
                surrogate_pattern_mse(&s.u_mat, &s.v, s.zeta, &s.a_grid, &specs[a]) / energy,
            );
            notch_power_per_ap.push(
                s.z.column_iter().map(|col| col.norm_squared()).fold(0.0_f64, f64::max) / energy,
            );
        }

        reports.push(StepDiagnostics {
            core: IterationReport {
                augmented_lagrangian: al_post,
                primal_residuals,
                dual_changes,
                surrogate,
            },
            al_pre_sweep: al_pre,
            pattern_residuals,
            notch_residuals,
            weighted_sum_rate: wsr,
            pattern_mse_per_ap,
            notch_power_per_ap,
        });
        wall_clock_ms.push(tick.elapsed().as_secs_f64() * 1e3);

        if let Some(reason) = convergence_check(&reports, pen, energy, options.stall_window) {
            termination = reason;
            break;
        }
    }

    Ok(SolveResult {
        states,
        reports,
        wall_clock_ms,
        termination,
        exchange_complex_per_iteration: a_count * n_users * n_users,
    })
}
