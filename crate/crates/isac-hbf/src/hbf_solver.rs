//! Per-AP block solvers for the hybrid beamforming design: the
//! fractional-programming surrogate of the weighted sum rate, closed-form
//! updates for the consensus copy T, the beampattern copy U, the notch copy
//! Z, the analog and digital precoders, and the surrogate-pattern auxiliaries
//! V and zeta.

use crate::linalg::{fro_norm_sq, hermitian_eigen, inner_re, HermitianEigen};
use crate::scene::{steering_vector, BeampatternSpec};
use crate::SolverError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Hybrid precoder pair: unit-modulus analog stage times digital stage.
#[derive(Debug, Clone)]
pub struct HbfState {
    /// Analog precoder, N_T x N_RF, every entry unit modulus.
    pub f_a: DMatrix<Complex64>,
    /// Digital precoder, N_RF x U.
    pub f_d: DMatrix<Complex64>,
}

impl HbfState {
    /// Composite precoder F_A F_D.
    pub fn composite(&self) -> DMatrix<Complex64> {
        &self.f_a * &self.f_d
    }
}

/// Fractional-programming auxiliaries of the rate surrogate.
#[derive(Debug, Clone)]
pub struct AuxScalars {
    /// Per-user SINR estimates r_u >= 0.
    pub r: Vec<f64>,
    /// Per-user quadratic-transform multipliers.
    pub eta: Vec<Complex64>,
}

/// What one AP broadcasts per iteration: its U x U compressed copy.
#[derive(Debug, Clone)]
pub struct ExchangeMessage {
    pub xi: DMatrix<Complex64>,
    pub sender: usize,
}

/// Complete per-AP solver state for the distributed design.
#[derive(Debug, Clone)]
pub struct ApSolverState {
    pub hbf: HbfState,
    /// Consensus copy of the composite precoder, Frobenius norm sqrt(E).
    pub t: DMatrix<Complex64>,
    /// Beampattern-surrogate copy.
    pub u_mat: DMatrix<Complex64>,
    /// Notch copy, one column per notch direction (U x notch_count).
    pub z: DMatrix<Complex64>,
    /// Surrogate-pattern directions, one column per grid angle (U x L).
    pub v: DMatrix<Complex64>,
    /// Surrogate-pattern amplitude (square root of the spectrum scale).
    pub zeta: f64,
    /// Scaled dual of the T consensus constraint.
    pub dual_t: DMatrix<Complex64>,
    /// Scaled dual of the U consensus constraint.
    pub dual_u: DMatrix<Complex64>,
    /// Scaled dual of the notch constraint (U x notch_count).
    pub dual_z: DMatrix<Complex64>,
    /// Steering matrix of the notch directions, N_T x notch_count.
    pub a_notch: DMatrix<Complex64>,
    /// Steering matrix of the full angle grid, N_T x L.
    pub a_grid: DMatrix<Complex64>,
    /// Cached eigendecomposition of A_grid Diag(mu/L) A_grid^H (fixed per AP).
    pub grid_eigen: HermitianEigen,
    /// Transmit power budget E.
    pub energy: f64,
    /// Set when any update hit a measure-zero fallback (zero prox direction,
    /// zero steering response, or a ridge-stabilized digital solve).
    pub degenerate: bool,
}

// ---------------------------------------------------------------------------
// Rate surrogate
// ---------------------------------------------------------------------------

/// Closed-form auxiliary update from the summed exchange matrix: r_u is the
/// current SINR of user u and eta_u the quadratic-transform multiplier.
pub fn update_r_eta(xi_sum: &DMatrix<Complex64>, weights: &[f64], noises: &[f64]) -> AuxScalars {
    let u = xi_sum.nrows();
    let mut r = Vec::with_capacity(u);
    let mut eta = Vec::with_capacity(u);
    for i in 0..u {
        let signal = xi_sum[(i, i)].norm_sqr();
        let total: f64 = (0..u).map(|v| xi_sum[(i, v)].norm_sqr()).sum();
        let interference = total - signal + noises[i];
        let ri = if interference > 0.0 { signal / interference } else { 0.0 };
        let denom = total + noises[i];
        let ei = if denom > 0.0 {
            xi_sum[(i, i)] * ((weights[i] * (1.0 + ri)).sqrt() / denom)
        } else {
            Complex64::new(0.0, 0.0)
        };
        r.push(ri);
        eta.push(ei);
    }
    AuxScalars { r, eta }
}

/// Diagonal of J1 = Diag(conj(eta)).
pub fn j1_diagonal(aux: &AuxScalars) -> DVector<Complex64> {
    DVector::from_iterator(aux.eta.len(), aux.eta.iter().map(|e| e.conj()))
}

/// Per-AP linear coefficient B_2 = -2 J2 H^H (U x N_T), where
/// J2 = Diag(sqrt(w (1+r)) conj(eta)).
pub fn b2_matrix(
    channel: &DMatrix<Complex64>,
    aux: &AuxScalars,
    weights: &[f64],
) -> DMatrix<Complex64> {
    let u = aux.r.len();
    let mut out = channel.adjoint();
    for i in 0..u {
        let j2 = aux.eta[i].conj() * (weights[i] * (1.0 + aux.r[i])).sqrt();
        let scale = j2 * Complex64::new(-2.0, 0.0);
        for c in 0..out.ncols() {
            out[(i, c)] *= scale;
        }
    }
    out
}

/// Copy-independent constant of the surrogate:
/// sum_u [w_u ln(1+r_u) - w_u r_u - |eta_u|^2 sigma_u^2].
pub fn c1_constant(aux: &AuxScalars, weights: &[f64], noises: &[f64]) -> f64 {
    (0..aux.r.len())
        .map(|u| {
            weights[u] * (1.0 + aux.r[u]).ln() - weights[u] * aux.r[u]
                - aux.eta[u].norm_sqr() * noises[u]
        })
        .sum()
}

/// Gradient of the coupled surrogate term with respect to one AP's copy:
/// 2 H J1^H J1 Xi_sum, where `j1` is the diagonal of J1.
pub fn coupled_gradient(
    channel: &DMatrix<Complex64>,
    j1: &DVector<Complex64>,
    xi_sum: &DMatrix<Complex64>,
) -> DMatrix<Complex64> {
    let mut scaled = xi_sum.clone();
    for r in 0..scaled.nrows() {
        let m = Complex64::new(2.0 * j1[r].norm_sqr(), 0.0);
        for c in 0..scaled.ncols() {
            scaled[(r, c)] *= m;
        }
    }
    channel * scaled
}

/// The minimization-form rate surrogate at the composite beams:
/// ||J1 Xi||_F^2 + sum_a Re Tr[B_2,a F_a] - sum_u c_1,u. Its negative equals
/// the weighted sum rate in nats when the auxiliaries are at their optimum.
pub fn surrogate_objective(
    channels: &[DMatrix<Complex64>],
    beams: &[DMatrix<Complex64>],
    aux: &AuxScalars,
    weights: &[f64],
    noises: &[f64],
) -> f64 {
    let u = aux.r.len();
    let mut xi_sum = DMatrix::zeros(u, u);
    for (h, f) in channels.iter().zip(beams.iter()) {
        xi_sum += h.adjoint() * f;
    }
    let j1 = j1_diagonal(aux);
    let mut value = 0.0;
    for r in 0..u {
        for c in 0..u {
            value += (j1[r] * xi_sum[(r, c)]).norm_sqr();
        }
    }
    for (h, f) in channels.iter().zip(beams.iter()) {
        value += (b2_matrix(h, aux, weights) * f).trace().re;
    }
    value - c1_constant(aux, weights, noises)
}

// ---------------------------------------------------------------------------
// Copy updates
// ---------------------------------------------------------------------------

/// Proximal copy update: forms the descent direction
/// -B_2^H - grad_G0 + alpha T + rho (F_A F_D - dual) and projects it onto the
/// power sphere ||T||_F^2 = E. A zero direction keeps the previous direction
/// and flags the state degenerate.
pub fn update_t(
    state: &mut ApSolverState,
    grad_g0: &DMatrix<Complex64>,
    b2: &DMatrix<Complex64>,
    alpha: f64,
    rho: f64,
) {
    debug_assert!(alpha + rho > 0.0);
    let product = state.hbf.composite();
    let mut tilde = -b2.adjoint() - grad_g0;
    tilde += &state.t * Complex64::new(alpha, 0.0);
    tilde += (&product - &state.dual_t) * Complex64::new(rho, 0.0);
    let norm = tilde.norm();
    let sqrt_e = state.energy.sqrt();
    let new_t = if norm > 0.0 {
        tilde * Complex64::new(sqrt_e / norm, 0.0)
    } else {
        state.degenerate = true;
        let prev = state.t.norm();
        if prev > 0.0 {
            &state.t * Complex64::new(sqrt_e / prev, 0.0)
        } else {
            let mut fallback = DMatrix::zeros(state.t.nrows(), state.t.ncols());
            fallback[(0, 0)] = Complex64::new(sqrt_e, 0.0);
            fallback
        }
    };
    // The sphere constraint is linearized nowhere: the projection is exact,
    // so the local model value cannot increase against the incoming iterate.
    if cfg!(debug_assertions) {
        let model = |t: &DMatrix<Complex64>| -> f64 {
            inner_re(grad_g0, t) + inner_re(&b2.adjoint(), t) - alpha * inner_re(&state.t, t)
                - rho * inner_re(&(&product - &state.dual_t), t)
        };
        let scale = model(&state.t).abs().max(1.0);
        debug_assert!(model(&new_t) <= model(&state.t) + 1e-9 * scale);
        debug_assert!((new_t.norm_squared() - state.energy).abs() <= 1e-9 * state.energy);
    }
    state.t = new_t;
}

/// Surrogate beampattern matching error of (u_mat, v, zeta) on the grid:
/// (1/L) sum_l mu_l ||a^H(theta_l) U - zeta v_l^H||^2.
pub fn surrogate_pattern_mse(
    u_mat: &DMatrix<Complex64>,
    v: &DMatrix<Complex64>,
    zeta: f64,
    a_grid: &DMatrix<Complex64>,
    spec: &BeampatternSpec,
) -> f64 {
    let l = spec.grid_angles.len();
    let mut acc = 0.0;
    let au = a_grid.adjoint() * u_mat; // L x U, row l is a^H(theta_l) U
    for i in 0..l {
        let mut row_err = 0.0;
        for j in 0..u_mat.ncols() {
            row_err += (au[(i, j)] - v[(j, i)].conj() * Complex64::new(zeta, 0.0)).norm_sqr();
        }
        acc += spec.weights[i] * row_err;
    }
    acc / l as f64
}

/// Stacked surrogate target G2 (L x U): row l is sqrt(mu_l/L) zeta v_l^H.
fn g2_matrix(state: &ApSolverState, spec: &BeampatternSpec) -> DMatrix<Complex64> {
    let l = spec.grid_angles.len();
    let n_users = state.u_mat.ncols();
    DMatrix::from_fn(l, n_users, |row, col| {
        state.v[(col, row)].conj()
            * Complex64::new(state.zeta * (spec.weights[row] / l as f64).sqrt(), 0.0)
    })
}

/// Transformed linear term and norms shared by the U update and the
/// feasibility probe: (g_tilde = Q^H G1^H G2 with null-space rows zeroed,
/// ||G2||_F^2).
fn u_update_terms(
    state: &ApSolverState,
    spec: &BeampatternSpec,
) -> (DMatrix<Complex64>, f64) {
    let l = spec.grid_angles.len();
    let g2 = g2_matrix(state, spec);
    let g2_norm_sq = fro_norm_sq(&g2);
    // G1^H G2 = A_grid Diag(sqrt(mu/L)) G2.
    let mut scaled = g2;
    for row in 0..l {
        let d = Complex64::new((spec.weights[row] / l as f64).sqrt(), 0.0);
        for col in 0..scaled.ncols() {
            scaled[(row, col)] *= d;
        }
    }
    let g_mat = &state.a_grid * scaled;
    let mut g_tilde = state.grid_eigen.eigenvectors.adjoint() * g_mat;
    let lam_max = state.grid_eigen.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    for n in 0..g_tilde.nrows() {
        // Exact algebra puts G1^H G2 in the range of K; zero the numerical
        // residue in null directions so the secular function stays finite.
        if state.grid_eigen.eigenvalues[n] <= 1e-12 * lam_max.max(1e-300) {
            for col in 0..g_tilde.ncols() {
                g_tilde[(n, col)] = Complex64::new(0.0, 0.0);
            }
        }
    }
    (g_tilde, g2_norm_sq)
}

/// Smallest surrogate matching error any U can reach at the current (v, zeta):
/// the squared residual of projecting G2 onto the range of G1.
pub fn min_achievable_mse(state: &ApSolverState, spec: &BeampatternSpec) -> f64 {
    let (g_tilde, g2_norm_sq) = u_update_terms(state, spec);
    let lam = &state.grid_eigen.eigenvalues;
    let lam_max = lam.iter().cloned().fold(0.0_f64, f64::max);
    let mut reachable = 0.0;
    for n in 0..g_tilde.nrows() {
        if lam[n] > 1e-12 * lam_max.max(1e-300) {
            for col in 0..g_tilde.ncols() {
                reachable += g_tilde[(n, col)].norm_sqr() / lam[n];
            }
        }
    }
    (g2_norm_sq - reachable).max(0.0)
}

/// Beampattern copy update: the Euclidean projection-like QCQP
/// min ||U - (F_A F_D - dual)||^2 subject to the surrogate matching error
/// staying within the budget, solved in the cached eigenbasis with a
/// bisection on the single KKT multiplier.
pub fn update_u(state: &mut ApSolverState, spec: &BeampatternSpec) -> Result<(), SolverError> {
    let gamma = spec.mse_budget;
    let d = state.hbf.composite() - &state.dual_u;
    let (g_tilde, g2_norm_sq) = u_update_terms(state, spec);
    let lam = &state.grid_eigen.eigenvalues;
    let q = &state.grid_eigen.eigenvectors;
    let d_tilde = q.adjoint() * &d;
    // h(eps) is the matching error of U(eps) minus the budget, evaluated in
    // the eigenbasis; it is continuous and non-increasing in eps. The grid
    // normalization is already folded into the stacked operators, so the
    // stacked residual equals the matching error directly.
    let h = |eps: f64| -> f64 {
        let mut acc = g2_norm_sq;
        for n in 0..d_tilde.nrows() {
            for j in 0..d_tilde.ncols() {
                let c = (d_tilde[(n, j)] + g_tilde[(n, j)] * Complex64::new(eps, 0.0))
                    / Complex64::new(1.0 + eps * lam[n], 0.0);
                acc += lam[n] * c.norm_sqr() - 2.0 * (g_tilde[(n, j)].conj() * c).re;
            }
        }
        acc - gamma
    };
    if h(0.0) <= 0.0 {
        // Budget slack at the unconstrained minimizer: copy the target exactly.
        state.u_mat = d;
        return Ok(());
    }
    let eps = {
        let floor = min_achievable_mse(state, spec);
        // Tolerate boundary roundoff: a floor within one part in 1e9 of the
        // budget still resolves to (numerically) the floor-achieving point.
        if floor > gamma * (1.0 + 1e-9) {
            return Err(SolverError::InfeasibleMseBudget {
                ap: usize::MAX, // caller substitutes its index
                iteration: 0,
                min_achievable: floor,
                budget: gamma,
            });
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while h(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            if hi > 1e30 {
                break;
            }
        }
        for _ in 0..200 {
            if hi - lo < 1e-12 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if h(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi // feasible endpoint
    };
    let mut c = d_tilde;
    for n in 0..c.nrows() {
        for j in 0..c.ncols() {
            c[(n, j)] = (c[(n, j)] + g_tilde[(n, j)] * Complex64::new(eps, 0.0))
                / Complex64::new(1.0 + eps * lam[n], 0.0);
        }
    }
    let new_u = q * c;
    if cfg!(debug_assertions) {
        let mse = surrogate_pattern_mse(&new_u, &state.v, state.zeta, &state.a_grid, spec);
        debug_assert!(mse <= gamma * (1.0 + 1e-6) + 1e-12, "U update violates budget: {mse} > {gamma}");
        // Non-increase holds whenever the incoming iterate was itself feasible.
        let old_mse =
            surrogate_pattern_mse(&state.u_mat, &state.v, state.zeta, &state.a_grid, spec);
        if old_mse <= gamma {
            let obj = |u: &DMatrix<Complex64>| fro_norm_sq(&(u - &d));
            debug_assert!(obj(&new_u) <= obj(&state.u_mat) + 1e-9 * obj(&state.u_mat).max(1.0));
        }
    }
    state.u_mat = new_u;
    Ok(())
}

/// Notch copy update: per notch direction, project the penalty target onto
/// the ball of radiated power `big_gamma`. Columns are independent.
pub fn update_z(state: &mut ApSolverState, big_gamma: f64) {
    let product = state.hbf.composite();
    let target = product.adjoint() * &state.a_notch - &state.dual_z;
    let mut z = target.clone();
    for t in 0..z.ncols() {
        let norm_sq = z.column(t).norm_squared();
        if norm_sq > big_gamma {
            let scale = (big_gamma / norm_sq).sqrt();
            for r in 0..z.nrows() {
                z[(r, t)] *= Complex64::new(scale, 0.0);
            }
        }
        debug_assert!(z.column(t).norm_squared() <= big_gamma * (1.0 + 1e-9));
    }
    state.z = z;
}

// ---------------------------------------------------------------------------
// Precoder updates
// ---------------------------------------------------------------------------

fn fa_quadratics(
    state: &ApSolverState,
    rho: f64,
    varrho: f64,
    lambda: f64,
) -> (DMatrix<Complex64>, DMatrix<Complex64>, f64) {
    let n_tx = state.hbf.f_a.nrows();
    let mut p1 = DMatrix::identity(n_tx, n_tx) * Complex64::new(0.5 * (rho + varrho), 0.0);
    p1 += &state.a_notch * state.a_notch.adjoint() * Complex64::new(0.5 * lambda, 0.0);
    let t_term = &state.t + &state.dual_t;
    let u_term = &state.u_mat + &state.dual_u;
    let z_term = &state.z + &state.dual_z;
    let mut p2 = &t_term * Complex64::new(0.5 * rho, 0.0);
    p2 += &u_term * Complex64::new(0.5 * varrho, 0.0);
    p2 += &state.a_notch * z_term.adjoint() * Complex64::new(0.5 * lambda, 0.0);
    let constant = 0.5 * rho * fro_norm_sq(&t_term)
        + 0.5 * varrho * fro_norm_sq(&u_term)
        + 0.5 * lambda * fro_norm_sq(&z_term);
    (p1, p2, constant)
}

/// Value of the stacked analog-update objective at a composite beam F:
/// Tr[F^H P1 F] - 2 Re Tr[F^H P2] + constant.
fn fa_objective(
    f: &DMatrix<Complex64>,
    p1: &DMatrix<Complex64>,
    p2: &DMatrix<Complex64>,
    constant: f64,
) -> f64 {
    (f.adjoint() * p1 * f).trace().re - 2.0 * inner_re(f, p2) + constant
}

/// Analog precoder update by majorized unit-modulus descent: each inner step
/// rotates every entry to the phase minimizing the quadratic upper bound, so
/// the stacked objective never increases. Returns the inner iterations used.
pub fn update_fa(
    state: &mut ApSolverState,
    rho: f64,
    varrho: f64,
    lambda: f64,
    inner_iters: usize,
) -> usize {
    let (p1, p2, constant) = fa_quadratics(state, rho, varrho, lambda);
    let fd = state.hbf.f_d.clone();
    let fdfd = &fd * fd.adjoint();
    let alpha = crate::linalg::lambda_max_psd(&p1, 50, 1e-8)
        * crate::linalg::lambda_max_psd(&fdfd, 50, 1e-8);
    let mut fa = state.hbf.f_a.clone();
    let mut f_prev = fa_objective(&(&fa * &fd), &p1, &p2, constant);
    let mut used = 0;
    for _ in 0..inner_iters {
        used += 1;
        let grad = (&p1 * &fa * &fdfd) - (&p2 * fd.adjoint());
        let w_bar = grad - &fa * Complex64::new(alpha, 0.0);
        let next = w_bar.map(|w| -Complex64::from_polar(1.0, w.arg()));
        let f_next = fa_objective(&(&next * &fd), &p1, &p2, constant);
        debug_assert!(
            f_next <= f_prev + 1e-9 * f_prev.abs().max(1.0),
            "analog update increased its objective: {f_prev} -> {f_next}"
        );
        fa = next;
        let done = (f_prev - f_next).abs() <= 1e-6 * f_prev.abs().max(1e-12);
        f_prev = f_next;
        if done {
            break;
        }
    }
    debug_assert!(fa.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    state.hbf.f_a = fa;
    used
}

/// Digital precoder update: exact least-squares solve of the stacked penalty
/// objective at fixed F_A. Returns true when the normal matrix needed a ridge.
pub fn update_fd(state: &mut ApSolverState, rho: f64, varrho: f64, lambda: f64) -> bool {
    let n_tx = state.hbf.f_a.nrows();
    let mut m1 = DMatrix::identity(n_tx, n_tx) * Complex64::new(rho + varrho, 0.0);
    m1 += &state.a_notch * state.a_notch.adjoint() * Complex64::new(lambda, 0.0);
    let mut m2 = (&state.t + &state.dual_t) * Complex64::new(rho, 0.0);
    m2 += (&state.u_mat + &state.dual_u) * Complex64::new(varrho, 0.0);
    m2 += &state.a_notch * (&state.z + &state.dual_z).adjoint() * Complex64::new(lambda, 0.0);
    let normal = state.hbf.f_a.adjoint() * &m1 * &state.hbf.f_a;
    let rhs = state.hbf.f_a.adjoint() * &m2;
    let mut ridged = false;
    let solution = match normal.clone().lu().solve(&rhs) {
        Some(s) if s.iter().all(|z| z.is_finite()) => s,
        _ => {
            ridged = true;
            state.degenerate = true;
            let ridge = 1e-10 * normal.trace().re.max(1e-300);
            let stabilized = &normal + DMatrix::identity(normal.nrows(), normal.ncols())
                * Complex64::new(ridge, 0.0);
            stabilized.lu().solve(&rhs).expect("ridge-stabilized solve")
        }
    };
    if cfg!(debug_assertions) && !ridged {
        let residual = (&normal * &solution - &rhs).norm();
        let scale = (normal.norm() * solution.norm() + rhs.norm()).max(1e-300);
        debug_assert!(residual <= 1e-9 * scale);
        // Exact minimizer of a convex quadratic: cannot lose to the incoming F_D.
        let obj = |fd: &DMatrix<Complex64>| -> f64 {
            let f = &state.hbf.f_a * fd;
            (f.adjoint() * &m1 * &f).trace().re - 2.0 * inner_re(&f, &m2)
        };
        let before = obj(&state.hbf.f_d);
        let after = obj(&solution);
        debug_assert!(after <= before + 1e-9 * before.abs().max(1.0));
    }
    state.hbf.f_d = solution;
    ridged
}

// ---------------------------------------------------------------------------
// Surrogate-pattern auxiliaries
// ---------------------------------------------------------------------------

/// Direction update of the surrogate pattern: each grid column aligns with
/// the array response of the current U, scaled to the desired amplitude.
pub fn update_v(state: &mut ApSolverState, spec: &BeampatternSpec) {
    let au = state.a_grid.adjoint() * &state.u_mat; // L x U
    let n_users = state.u_mat.ncols();
    for l in 0..spec.grid_angles.len() {
        let amplitude = spec.desired_spectrum[l].sqrt();
        if amplitude == 0.0 {
            for r in 0..n_users {
                state.v[(r, l)] = Complex64::new(0.0, 0.0);
            }
            continue;
        }
        let row_norm = au.row(l).norm();
        if row_norm > 0.0 {
            for r in 0..n_users {
                state.v[(r, l)] = au[(l, r)].conj() * Complex64::new(amplitude / row_norm, 0.0);
            }
        } else {
            state.degenerate = true;
            for r in 0..n_users {
                state.v[(r, l)] =
                    if r == 0 { Complex64::new(amplitude, 0.0) } else { Complex64::new(0.0, 0.0) };
            }
        }
    }
}

/// Amplitude update of the surrogate pattern: the 1-D least-squares fit of
/// zeta to the current responses, clamped at zero.
pub fn update_zeta(state: &mut ApSolverState, spec: &BeampatternSpec) -> f64 {
    let au = state.a_grid.adjoint() * &state.u_mat; // L x U
    let mut num = 0.0;
    let mut den = 0.0;
    for l in 0..spec.grid_angles.len() {
        let mut dot = Complex64::new(0.0, 0.0);
        let mut v_norm_sq = 0.0;
        for r in 0..state.v.nrows() {
            dot += au[(l, r)] * state.v[(r, l)];
            v_norm_sq += state.v[(r, l)].norm_sqr();
        }
        num += spec.weights[l] * dot.re;
        den += spec.weights[l] * v_norm_sq;
    }
    state.zeta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
    state.zeta
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Builds the initial per-AP state: random analog phases, a channel-matched
/// digital stage normalized to the power budget, consensus copies at the
/// composite beam, a feasible notch copy, zero duals, and surrogate-pattern
/// auxiliaries chosen so the beampattern budget is attainable.
pub fn initialize_state(
    channel: &DMatrix<Complex64>,
    spec: &BeampatternSpec,
    energy: f64,
    n_rf: usize,
    seed: u64,
) -> Result<ApSolverState, SolverError> {
    let n_tx = channel.nrows();
    let n_users = channel.ncols();
    if n_rf == 0 || n_rf > n_tx || n_users > n_rf {
        return Err(SolverError::InvalidParameter(format!(
            "invalid sizes: N_T={n_tx}, N_RF={n_rf}, users={n_users}"
        )));
    }
    if !(energy > 0.0) {
        return Err(SolverError::InvalidParameter("power budget must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f_a = DMatrix::from_fn(n_tx, n_rf, |_, _| {
        Complex64::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU)
    });
    let gram = f_a.adjoint() * &f_a;
    let matched = gram.clone().lu().solve(&(f_a.adjoint() * channel));
    let mut f_d = match matched {
        Some(s) if s.iter().all(|z| z.is_finite()) => s,
        _ => DMatrix::zeros(n_rf, n_users),
    };
    if (&f_a * &f_d).norm() == 0.0 {
        // Zero channel: fall back to an identity-patterned digital stage.
        f_d = DMatrix::from_fn(n_rf, n_users, |r, c| {
            if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        });
    }
    let norm = (&f_a * &f_d).norm();
    f_d *= Complex64::new(energy.sqrt() / norm, 0.0);
    let hbf = HbfState { f_a, f_d };
    let product = hbf.composite();

    let a_notch = DMatrix::from_fn(n_tx, spec.notch_angles.len(), |r, c| {
        steering_vector(spec.notch_angles[c], n_tx)[r]
    });
    let l = spec.grid_angles.len();
    let a_grid = DMatrix::from_fn(n_tx, l, |r, c| steering_vector(spec.grid_angles[c], n_tx)[r]);
    let mut k = DMatrix::zeros(n_tx, n_tx);
    for col in 0..l {
        let a = a_grid.column(col);
        let w = Complex64::new(spec.weights[col] / l as f64, 0.0);
        k += a * a.adjoint() * w;
    }
    let grid_eigen = hermitian_eigen(&k);

    let mut state = ApSolverState {
        t: product.clone(),
        u_mat: product.clone(),
        z: DMatrix::zeros(n_users, spec.notch_angles.len()),
        v: DMatrix::zeros(n_users, l),
        zeta: 0.0,
        dual_t: DMatrix::zeros(n_tx, n_users),
        dual_u: DMatrix::zeros(n_tx, n_users),
        dual_z: DMatrix::zeros(n_users, spec.notch_angles.len()),
        a_notch,
        a_grid,
        grid_eigen,
        energy,
        degenerate: false,
        hbf,
    };
    update_z(&mut state, spec.notch_budget);
    update_v(&mut state, spec);
    update_zeta(&mut state, spec);
    // Shrink the surrogate amplitude until the matching budget is reachable;
    // the minimum achievable error scales as zeta^2.
    let reachable = min_achievable_mse(&state, spec);
    if reachable > spec.mse_budget && reachable > 0.0 {
        state.zeta *= (0.99 * spec.mse_budget / reachable).sqrt();
    }
    // Start from a pattern copy that meets its budget: the amplitude update
    // in later iterations re-optimizes against the current copy, so a copy
    // inside the budget keeps the budget reachable at every iteration.
    update_u(&mut state, spec)?;
    Ok(state)
}

/// The message an AP broadcasts: the channel-compressed consensus copy.
pub fn exchange_message(
    channel: &DMatrix<Complex64>,
    state: &ApSolverState,
    sender: usize,
) -> ExchangeMessage {
    ExchangeMessage { xi: channel.adjoint() * &state.t, sender }
}
