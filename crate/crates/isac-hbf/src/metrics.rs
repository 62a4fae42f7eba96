//! Performance metrics: per-user rates, transmit beampatterns, and the
//! cooperative detection chain (radar SINR, GLRT, thresholds, analytic and
//! Monte-Carlo detection probability).
//!
//! All functions take composite precoders `F = F_A * F_D` (one N_T x U matrix
//! per AP) so the metrics layer stays independent of how beams were factored.

use crate::linalg::{complex_gaussian, derive_seed, vec_cols};
use crate::scene::{angle_to_point, path_loss_db, steering_vector, NetworkScene};
use crate::SolverError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

// ---------------------------------------------------------------------------
// Communication rates
// ---------------------------------------------------------------------------

/// Network-wide effective channel: entry (u, v) is the gain from user v's
/// streams onto user u, summed over APs: [sum_a H_a^H F_a]_{u,v}.
pub fn effective_channel(
    channels: &[DMatrix<Complex64>],
    beams: &[DMatrix<Complex64>],
) -> Result<DMatrix<Complex64>, SolverError> {
    if channels.len() != beams.len() || channels.is_empty() {
        return Err(SolverError::Dimension(format!(
            "{} channel matrices for {} beam matrices",
            channels.len(),
            beams.len()
        )));
    }
    let u = channels[0].ncols();
    let mut xi = DMatrix::zeros(u, u);
    for (h, f) in channels.iter().zip(beams.iter()) {
        if h.nrows() != f.nrows() || f.ncols() != u || h.ncols() != u {
            return Err(SolverError::Dimension(format!(
                "channel {}x{} incompatible with beam {}x{}",
                h.nrows(),
                h.ncols(),
                f.nrows(),
                f.ncols()
            )));
        }
        xi += h.adjoint() * f;
    }
    Ok(xi)
}

/// Per-user rates (bits per channel use) from an effective channel matrix.
pub fn rates_from_effective(xi: &DMatrix<Complex64>, noises: &[f64]) -> Vec<f64> {
    let u = xi.nrows();
    (0..u)
        .map(|i| {
            let signal = xi[(i, i)].norm_sqr();
            let interference: f64 =
                (0..u).filter(|&v| v != i).map(|v| xi[(i, v)].norm_sqr()).sum();
            (1.0 + signal / (interference + noises[i])).log2()
        })
        .collect()
}

/// Achievable rate of user `u` in bits per channel use.
pub fn user_rate(
    channels: &[DMatrix<Complex64>],
    beams: &[DMatrix<Complex64>],
    u: usize,
    noise: f64,
) -> Result<f64, SolverError> {
    let xi = effective_channel(channels, beams)?;
    let mut noises = vec![noise; xi.nrows()];
    noises[u] = noise;
    Ok(rates_from_effective(&xi, &noises)[u])
}

/// Weighted sum rate over all users, bits per channel use.
pub fn weighted_sum_rate(
    channels: &[DMatrix<Complex64>],
    beams: &[DMatrix<Complex64>],
    weights: &[f64],
    noises: &[f64],
) -> Result<f64, SolverError> {
    let xi = effective_channel(channels, beams)?;
    if weights.len() != xi.nrows() || noises.len() != xi.nrows() {
        return Err(SolverError::Dimension(
            "weights/noises length must equal the user count".into(),
        ));
    }
    Ok(rates_from_effective(&xi, noises)
        .iter()
        .zip(weights.iter())
        .map(|(r, w)| w * r)
        .sum())
}

// ---------------------------------------------------------------------------
// Transmit beampattern
// ---------------------------------------------------------------------------

/// Radiated power of one AP toward `angle`: ||a_T^H(angle) F||^2.
pub fn transmit_beampattern(beam: &DMatrix<Complex64>, angle: f64) -> f64 {
    let a = steering_vector(angle, beam.nrows());
    (beam.adjoint() * a).norm_squared()
}

/// Beampattern evaluated on a list of angles.
pub fn beampattern_profile(beam: &DMatrix<Complex64>, angles: &[f64]) -> Vec<f64> {
    angles.iter().map(|&t| transmit_beampattern(beam, t)).collect()
}

/// Weighted beampattern matching error against a scaled desired spectrum:
/// (1/L) sum_l mu_l |P(theta_l) - psi p_l|^2.
pub fn beampattern_mse(beam: &DMatrix<Complex64>, spec: &crate::scene::BeampatternSpec, psi: f64) -> f64 {
    let l = spec.grid_angles.len();
    let mut acc = 0.0;
    for i in 0..l {
        let p = transmit_beampattern(beam, spec.grid_angles[i]);
        let d = p - psi * spec.desired_spectrum[i];
        acc += spec.weights[i] * d * d;
    }
    acc / l as f64
}

/// Least-squares optimal spectrum scaling for a fixed beam:
/// sum(mu P p) / sum(mu p^2), or 0 when the desired spectrum is empty.
pub fn optimal_beampattern_scale(
    beam: &DMatrix<Complex64>,
    spec: &crate::scene::BeampatternSpec,
) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..spec.grid_angles.len() {
        let p = transmit_beampattern(beam, spec.grid_angles[i]);
        num += spec.weights[i] * p * spec.desired_spectrum[i];
        den += spec.weights[i] * spec.desired_spectrum[i] * spec.desired_spectrum[i];
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Radiated power toward each listed direction (for notch monitoring).
pub fn notch_powers(beam: &DMatrix<Complex64>, angles: &[f64]) -> Vec<f64> {
    beampattern_profile(beam, angles)
}

// ---------------------------------------------------------------------------
// Detection model
// ---------------------------------------------------------------------------

/// Per-AP monostatic sensing description. Response bases are N_R x N_T
/// matrices nu * a_R(phi) a_T^H(phi) including the two-hop amplitude gain; the
/// full response to a beam F is vec(base * F) in the stacked per-stream
/// receive space of dimension U * N_R.
#[derive(Debug, Clone)]
pub struct ApDetection {
    pub target_bases: Vec<DMatrix<Complex64>>,
    /// Deterministic target reflection amplitudes.
    pub target_amplitudes: Vec<Complex64>,
    pub clutter_bases: Vec<DMatrix<Complex64>>,
    /// Clutter reflection-coefficient variances.
    pub clutter_variances: Vec<f64>,
    /// Waveform autocorrelation amplitude factor per clutter source, in [0, 1].
    pub clutter_autocorrelation: Vec<f64>,
    /// Receive combiner over the stacked receive space, length U * N_R.
    pub weights: DVector<Complex64>,
}

/// Cooperative detection model across all APs.
#[derive(Debug, Clone)]
pub struct DetectionModel {
    pub per_ap: Vec<ApDetection>,
    /// Equivalent post-matched-filter noise power (receiver noise divided by
    /// the time-bandwidth product), mW.
    pub noise_power: f64,
}

impl DetectionModel {
    /// Builds the model from scene geometry: every AP senses every target and
    /// clutter scatterer monostatically, with two-hop gain equal to the
    /// product of the per-leg linear amplitude gains. Reflection amplitudes
    /// and clutter variances default to 1, autocorrelation to 1, and each
    /// receive combiner to the target-0 receive steering repeated per stream.
    pub fn from_scene(scene: &NetworkScene, time_bandwidth: f64) -> Result<Self, SolverError> {
        scene.validate()?;
        if scene.target_positions.is_empty() {
            return Err(SolverError::InvalidParameter(
                "detection model needs at least one target".into(),
            ));
        }
        if !(time_bandwidth > 0.0) {
            return Err(SolverError::InvalidParameter("time_bandwidth must be positive".into()));
        }
        let response = |a: usize, p: [f64; 2]| -> Result<DMatrix<Complex64>, SolverError> {
            let ap = scene.ap_positions[a];
            let d = ((p[0] - ap[0]).powi(2) + (p[1] - ap[1]).powi(2)).sqrt();
            let leg_db = path_loss_db(scene.reference_pathloss_db, d)?;
            // Two legs of the same length: amplitude gain per leg is
            // 10^(-leg_db/20), so the round trip contributes 10^(-leg_db/10).
            let nu = 10f64.powf(-leg_db / 10.0);
            let phi = angle_to_point(scene, a, p)?;
            let ar = steering_vector(phi, scene.n_rx);
            let at = steering_vector(phi, scene.n_tx);
            Ok(ar * at.adjoint() * Complex64::new(nu, 0.0))
        };
        let mut per_ap = Vec::with_capacity(scene.n_aps());
        for a in 0..scene.n_aps() {
            let target_bases: Vec<_> = scene
                .target_positions
                .iter()
                .map(|&p| response(a, p))
                .collect::<Result<_, _>>()?;
            let clutter_bases: Vec<_> = scene
                .clutter_positions
                .iter()
                .map(|&p| response(a, p))
                .collect::<Result<_, _>>()?;
            let phi0 = angle_to_point(scene, a, scene.target_positions[0])?;
            let ar0 = steering_vector(phi0, scene.n_rx);
            let stacked = DMatrix::from_fn(scene.n_rx, scene.n_users(), |r, _| ar0[r]);
            let mut w = vec_cols(&stacked);
            w /= Complex64::new(w.norm(), 0.0);
            per_ap.push(ApDetection {
                target_amplitudes: vec![Complex64::new(1.0, 0.0); target_bases.len()],
                target_bases,
                clutter_variances: vec![1.0; clutter_bases.len()],
                clutter_autocorrelation: vec![1.0; clutter_bases.len()],
                clutter_bases,
                weights: w,
            });
        }
        Ok(DetectionModel {
            per_ap,
            noise_power: scene.noise_power_radar / time_bandwidth,
        })
    }

    /// Checks positivity and range invariants.
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.noise_power > 0.0) {
            return Err(SolverError::InvalidParameter("detection noise power must be positive".into()));
        }
        for (a, ap) in self.per_ap.iter().enumerate() {
            if ap.clutter_variances.iter().any(|&v| !(v > 0.0)) {
                return Err(SolverError::InvalidParameter(format!(
                    "AP {a}: clutter variances must be positive"
                )));
            }
            if ap.clutter_autocorrelation.iter().any(|&i| !(0.0..=1.0).contains(&i)) {
                return Err(SolverError::InvalidParameter(format!(
                    "AP {a}: autocorrelation must lie in [0, 1]"
                )));
            }
        }
        Ok(())
    }

    /// Replaces every AP's receive combiner with the SINR-optimal one for
    /// `target` under the given beams.
    pub fn set_mvdr_weights(
        &mut self,
        beams: &[DMatrix<Complex64>],
        target: usize,
    ) -> Result<(), SolverError> {
        for a in 0..self.per_ap.len() {
            let w = mvdr_receive_beamformer(self, beams, a, target)?;
            self.per_ap[a].weights = w;
        }
        Ok(())
    }
}

/// Interference responses of AP `a` for detecting `target`: every clutter
/// source plus every other target, as (std of random amplitude, response) pairs.
fn interference_responses(
    ap: &ApDetection,
    beam: &DMatrix<Complex64>,
    target: usize,
) -> Vec<(f64, DVector<Complex64>)> {
    let mut out = Vec::new();
    for q in 0..ap.clutter_bases.len() {
        let y = vec_cols(&(&ap.clutter_bases[q] * beam));
        let std = ap.clutter_variances[q].sqrt() * ap.clutter_autocorrelation[q];
        out.push((std, y));
    }
    for (t, base) in ap.target_bases.iter().enumerate() {
        if t != target {
            let y = vec_cols(&(base * beam));
            out.push((ap.target_amplitudes[t].norm(), y));
        }
    }
    out
}

/// Post-combining sensing SINR of AP `a` for `target`; other targets count as
/// clutter.
pub fn radar_sinr(
    model: &DetectionModel,
    beams: &[DMatrix<Complex64>],
    a: usize,
    target: usize,
) -> Result<f64, SolverError> {
    let ap = &model.per_ap[a];
    let w = &ap.weights;
    let wn = w.norm_squared();
    if wn == 0.0 {
        return Err(SolverError::InvalidParameter(format!("AP {a}: zero receive combiner")));
    }
    let beam = &beams[a];
    let y0 = vec_cols(&(&ap.target_bases[target] * beam));
    let num = ap.target_amplitudes[target].norm_sqr() * w.dotc(&y0).norm_sqr();
    let mut den = model.noise_power * wn;
    for (std, y) in interference_responses(ap, beam, target) {
        den += std * std * w.dotc(&y).norm_sqr();
    }
    Ok(num / den)
}

/// SINR-optimal receive combiner for AP `a` and `target`, unit norm:
/// solves (noise I + sum interference covariances) w = target response.
pub fn mvdr_receive_beamformer(
    model: &DetectionModel,
    beams: &[DMatrix<Complex64>],
    a: usize,
    target: usize,
) -> Result<DVector<Complex64>, SolverError> {
    let ap = &model.per_ap[a];
    let beam = &beams[a];
    let y0 = vec_cols(&(&ap.target_bases[target] * beam));
    let dim = y0.len();
    let mut sigma = DMatrix::identity(dim, dim) * Complex64::new(model.noise_power, 0.0);
    for (std, y) in interference_responses(ap, beam, target) {
        let scaled = &y * Complex64::new(std, 0.0);
        sigma += &scaled * scaled.adjoint();
    }
    let w = sigma
        .lu()
        .solve(&y0)
        .ok_or_else(|| SolverError::InvalidParameter(format!("AP {a}: singular interference covariance")))?;
    let n = w.norm();
    if n == 0.0 {
        return Err(SolverError::InvalidParameter(format!(
            "AP {a}: target response is zero under the current beam"
        )));
    }
    Ok(w / Complex64::new(n, 0.0))
}

// ---------------------------------------------------------------------------
// GLRT detector
// ---------------------------------------------------------------------------

/// Cooperative GLRT statistic: sum_a |y_a|^2 / sigma2_a.
pub fn glrt_statistic(samples: &[Complex64], powers: &[f64]) -> Result<f64, SolverError> {
    if samples.len() != powers.len() {
        return Err(SolverError::Dimension("one power per sample required".into()));
    }
    if powers.iter().any(|&p| !(p > 0.0)) {
        return Err(SolverError::InvalidParameter(
            "interference-plus-noise powers must be positive".into(),
        ));
    }
    Ok(samples.iter().zip(powers.iter()).map(|(y, p)| y.norm_sqr() / p).sum())
}

/// Chi-square quantile: the x with P(chi2_dof <= x) = p, by bisection on the
/// regularized incomplete gamma function.
pub fn chi2_quantile(dof: usize, p: f64) -> Result<f64, SolverError> {
    if dof == 0 {
        return Err(SolverError::InvalidParameter("dof must be positive".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(SolverError::InvalidParameter(format!("quantile level {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let cdf = |x: f64| gamma_lr(dof as f64 / 2.0, x / 2.0);
    let mut hi = (2 * dof) as f64 + 20.0;
    while cdf(hi) < p {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(SolverError::InvalidParameter(format!("quantile level {p} too extreme")));
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-10 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// GLRT threshold for A cooperating APs at a target false-alarm rate:
/// half the (1 - pr_fa) quantile of chi-square with 2A degrees of freedom.
pub fn detection_threshold(pr_fa: f64, n_aps: usize) -> Result<f64, SolverError> {
    if !(pr_fa > 0.0 && pr_fa < 1.0) {
        return Err(SolverError::InvalidParameter(format!("pr_fa {pr_fa} outside (0, 1)")));
    }
    Ok(0.5 * chi2_quantile(2 * n_aps, 1.0 - pr_fa)?)
}

/// Generalized Marcum Q of integer order M >= 1: the noncentral chi-square
/// upper tail, evaluated as a Poisson mixture of regularized gamma tails.
/// Terms are accumulated outward from the Poisson mode until the remaining
/// mixture mass is below 1e-12.
pub fn marcum_q(order: usize, a: f64, b: f64) -> Result<f64, SolverError> {
    if order == 0 {
        return Err(SolverError::InvalidParameter("Marcum Q order must be >= 1".into()));
    }
    if !(a >= 0.0) || !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(SolverError::InvalidParameter(format!("invalid Marcum arguments a={a}, b={b}")));
    }
    let s = 0.5 * a * a;
    let y = 0.5 * b * b;
    if y == 0.0 {
        return Ok(1.0);
    }
    if s == 0.0 {
        return Ok(gamma_ur(order as f64, y));
    }
    let tail = |k: u64| gamma_ur(order as f64 + k as f64, y);
    // Start at the Poisson mode and walk outward with stable recurrences.
    let k0 = s.floor() as u64;
    let p0 = (-s + k0 as f64 * s.ln() - ln_gamma(k0 as f64 + 1.0)).exp();
    let mut q = p0 * tail(k0);
    let mut mass = p0;
    let (mut kd, mut pd) = (k0, p0);
    let (mut ku, mut pu) = (k0, p0);
    let mut guard = 0u64;
    while mass < 1.0 - 1e-12 {
        if kd > 0 {
            pd *= kd as f64 / s;
            kd -= 1;
            q += pd * tail(kd);
            mass += pd;
        }
        pu *= s / (ku + 1) as f64;
        ku += 1;
        q += pu * tail(ku);
        mass += pu;
        guard += 1;
        if guard > 50_000_000 {
            break; // residual mass bounds the truncation error
        }
    }
    Ok(q.min(1.0))
}

/// Analytic cooperative detection probability at a given false-alarm rate:
/// Marcum Q of order A with noncentrality from the summed per-AP SINRs.
pub fn detection_probability(sum_sinr: f64, pr_fa: f64, n_aps: usize) -> Result<f64, SolverError> {
    if !(sum_sinr >= 0.0) {
        return Err(SolverError::InvalidParameter(format!("negative SINR sum {sum_sinr}")));
    }
    let b = chi2_quantile(2 * n_aps, 1.0 - pr_fa)?.sqrt();
    marcum_q(n_aps, (2.0 * sum_sinr).sqrt(), b)
}

// ---------------------------------------------------------------------------
// Monte-Carlo detection
// ---------------------------------------------------------------------------

/// Empirical detection and false-alarm rates from simulation.
#[derive(Debug, Clone, Copy)]
pub struct DetectionSimulation {
    pub pr_d: f64,
    pub pr_fa: f64,
    pub trials: usize,
}

/// Per-AP scalars precomputed for simulation: the deterministic target
/// component, interference (std, combined response) pairs collapsed to scalar
/// amplitudes, the noise std, and the clairvoyant normalization power.
struct SimAp {
    target_mean: Complex64,
    interference: Vec<(f64, Complex64)>,
    noise_std: f64,
    sigma_e: f64,
}

fn prepare_simulation(
    model: &DetectionModel,
    beams: &[DMatrix<Complex64>],
    target: usize,
) -> Result<Vec<SimAp>, SolverError> {
    model.validate()?;
    if beams.len() != model.per_ap.len() {
        return Err(SolverError::Dimension("one beam matrix per AP required".into()));
    }
    let mut out = Vec::with_capacity(model.per_ap.len());
    for (a, ap) in model.per_ap.iter().enumerate() {
        let w = &ap.weights;
        let wn = w.norm_squared();
        if wn == 0.0 {
            return Err(SolverError::InvalidParameter(format!("AP {a}: zero receive combiner")));
        }
        let beam = &beams[a];
        let y0 = vec_cols(&(&ap.target_bases[target] * beam));
        let target_mean = ap.target_amplitudes[target] * w.dotc(&y0);
        let interference: Vec<(f64, Complex64)> = interference_responses(ap, beam, target)
            .into_iter()
            .map(|(std, y)| (std, w.dotc(&y)))
            .collect();
        let var: f64 = interference.iter().map(|(s, x)| s * s * x.norm_sqr()).sum::<f64>()
            + model.noise_power * wn;
        out.push(SimAp {
            target_mean,
            interference,
            noise_std: (model.noise_power * wn).sqrt(),
            sigma_e: var,
        });
    }
    Ok(out)
}

fn simulate_statistic(aps: &[SimAp], with_target: bool, rng: &mut ChaCha8Rng) -> f64 {
    let mut stat = 0.0;
    for ap in aps {
        let mut y = Complex64::new(0.0, 0.0);
        // Each interferer keeps its own random reflection coefficient so the
        // simulation exercises the physical model, not just its aggregate
        // variance.
        for &(std, x) in &ap.interference {
            y += complex_gaussian(rng) * x * Complex64::new(std, 0.0);
        }
        y += complex_gaussian(rng) * Complex64::new(ap.noise_std, 0.0);
        if with_target {
            y += ap.target_mean;
        }
        stat += y.norm_sqr() / ap.sigma_e;
    }
    stat
}

/// Draws GLRT statistics under one hypothesis (target present or absent).
pub fn simulate_glrt_statistics(
    model: &DetectionModel,
    beams: &[DMatrix<Complex64>],
    target: usize,
    with_target: bool,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, SolverError> {
    let aps = prepare_simulation(model, beams, target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    Ok((0..trials).map(|_| simulate_statistic(&aps, with_target, &mut rng)).collect())
}

/// Simulates the detector under both hypotheses and reports the empirical
/// exceedance rates. Trials are partitioned into fixed blocks with derived
/// RNG streams, so results are independent of thread count.
pub fn monte_carlo_detection(
    model: &DetectionModel,
    beams: &[DMatrix<Complex64>],
    target: usize,
    threshold: f64,
    trials: usize,
    seed: u64,
) -> Result<DetectionSimulation, SolverError> {
    if trials == 0 {
        return Err(SolverError::InvalidParameter("trials must be positive".into()));
    }
    let aps = prepare_simulation(model, beams, target)?;
    const BLOCK: usize = 8192;
    let blocks = trials.div_ceil(BLOCK);
    let counts: (u64, u64) = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let n = BLOCK.min(trials - b * BLOCK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1 + b as u64));
            let mut fa = 0u64;
            let mut det = 0u64;
            for _ in 0..n {
                if simulate_statistic(&aps, false, &mut rng) > threshold {
                    fa += 1;
                }
                if simulate_statistic(&aps, true, &mut rng) > threshold {
                    det += 1;
                }
            }
            (fa, det)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(DetectionSimulation {
        pr_fa: counts.0 as f64 / trials as f64,
        pr_d: counts.1 as f64 / trials as f64,
        trials,
    })
}
