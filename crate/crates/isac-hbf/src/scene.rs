//! Network geometry, array steering, path loss, stochastic channel draws, and
//! beampattern grid specifications.
//!
//! All angles are radians internally and measured against each access point's
//! broadside direction; powers are linear milliwatts.

use crate::linalg::{complex_gaussian, derive_seed};
use crate::SolverError;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Static description of a cooperative multi-AP deployment.
#[derive(Debug, Clone)]
pub struct NetworkScene {
    /// Access point positions, metres.
    pub ap_positions: Vec<[f64; 2]>,
    /// User positions, metres.
    pub ue_positions: Vec<[f64; 2]>,
    /// Sensing target positions, metres.
    pub target_positions: Vec<[f64; 2]>,
    /// Clutter scatterer positions, metres.
    pub clutter_positions: Vec<[f64; 2]>,
    /// Transmit antennas per AP.
    pub n_tx: usize,
    /// Receive antennas per AP.
    pub n_rx: usize,
    /// RF chains per AP.
    pub n_rf: usize,
    /// Per-AP transmit power budget, mW.
    pub tx_power_budget: f64,
    /// Per-user communication noise power, mW.
    pub noise_power_comm: Vec<f64>,
    /// Radar receive noise power, mW (before any coherent-processing gain).
    pub noise_power_radar: f64,
    /// Rician K-factor of the line-of-sight path.
    pub rician_factor: f64,
    /// Number of propagation paths per channel (1 line-of-sight + rest scattered).
    pub n_paths: usize,
    /// Path loss at 1 m, dB.
    pub reference_pathloss_db: f64,
    /// Per-AP broadside direction, radians counterclockwise from +x.
    pub broadside: Vec<f64>,
}

impl NetworkScene {
    pub fn n_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn n_users(&self) -> usize {
        self.ue_positions.len()
    }

    /// Checks structural consistency of the scene description.
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.ap_positions.is_empty() {
            return Err(SolverError::InvalidParameter("at least one AP required".into()));
        }
        if self.ue_positions.is_empty() {
            return Err(SolverError::InvalidParameter("at least one user required".into()));
        }
        if self.n_rf == 0 || self.n_tx == 0 || self.n_rx == 0 {
            return Err(SolverError::InvalidParameter(
                "antenna and RF-chain counts must be positive".into(),
            ));
        }
        if self.n_rf > self.n_tx {
            return Err(SolverError::InvalidParameter(format!(
                "RF chains ({}) cannot exceed transmit antennas ({})",
                self.n_rf, self.n_tx
            )));
        }
        if self.n_users() > self.n_rf {
            return Err(SolverError::InvalidParameter(format!(
                "users ({}) cannot exceed RF chains ({})",
                self.n_users(),
                self.n_rf
            )));
        }
        if self.noise_power_comm.len() != self.n_users() {
            return Err(SolverError::Dimension(format!(
                "noise_power_comm has {} entries for {} users",
                self.noise_power_comm.len(),
                self.n_users()
            )));
        }
        if self.broadside.len() != self.n_aps() {
            return Err(SolverError::Dimension(format!(
                "broadside has {} entries for {} APs",
                self.broadside.len(),
                self.n_aps()
            )));
        }
        if !(self.tx_power_budget > 0.0) {
            return Err(SolverError::InvalidParameter("tx_power_budget must be positive".into()));
        }
        if self.noise_power_comm.iter().any(|&s| !(s > 0.0)) || !(self.noise_power_radar > 0.0) {
            return Err(SolverError::InvalidParameter("noise powers must be positive".into()));
        }
        if !(self.rician_factor >= 0.0) {
            return Err(SolverError::InvalidParameter("rician_factor must be nonnegative".into()));
        }
        if self.n_paths == 0 {
            return Err(SolverError::InvalidParameter("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

/// Downlink channels for every AP: entry `a` is the N_T x U matrix whose
/// column u is the channel from AP `a` to user u.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub per_ap: Vec<DMatrix<Complex64>>,
    pub seed: u64,
}

/// Discretized beampattern requirements for one AP.
#[derive(Debug, Clone)]
pub struct BeampatternSpec {
    /// Uniform angle grid over [-pi/2, pi/2], radians.
    pub grid_angles: Vec<f64>,
    /// Desired power spectrum on the grid (1 in mainlobes, 0 elsewhere).
    pub desired_spectrum: Vec<f64>,
    /// Per-angle weights for the matching error.
    pub weights: Vec<f64>,
    /// Directions that must be notched (toward clutter and other APs), radians.
    pub notch_angles: Vec<f64>,
    /// Beampattern matching error budget (linear).
    pub mse_budget: f64,
    /// Maximum radiated power toward each notch direction, mW.
    pub notch_budget: f64,
}

/// Half-wavelength uniform linear array steering vector: entry m is
/// exp(j pi m sin(angle)), m = 0..n-1.
pub fn steering_vector(angle: f64, n: usize) -> DVector<Complex64> {
    let s = angle.sin();
    DVector::from_fn(n, |m, _| Complex64::from_polar(1.0, std::f64::consts::PI * m as f64 * s))
}

/// Log-distance path loss in dB: reference loss at 1 m plus 20 dB per decade.
pub fn path_loss_db(reference_db: f64, distance_m: f64) -> Result<f64, SolverError> {
    if !(distance_m > 0.0) {
        return Err(SolverError::InvalidParameter(format!(
            "path loss undefined for distance {distance_m} m"
        )));
    }
    Ok(reference_db + 20.0 * distance_m.log10())
}

/// Direction from AP `a` to `point`, measured from the AP's broadside and
/// folded into [-pi/2, pi/2] (a linear array cannot tell front from back).
pub fn angle_to_point(scene: &NetworkScene, a: usize, point: [f64; 2]) -> Result<f64, SolverError> {
    let ap = scene.ap_positions[a];
    let d = [point[0] - ap[0], point[1] - ap[1]];
    if d[0] == 0.0 && d[1] == 0.0 {
        return Err(SolverError::InvalidParameter(format!(
            "point coincides with AP {a}; direction undefined"
        )));
    }
    let beta = scene.broadside[a];
    // Unit broadside b and array-axis t = b rotated by -90 degrees.
    let along_broadside = d[0] * beta.cos() + d[1] * beta.sin();
    let along_axis = d[0] * beta.sin() - d[1] * beta.cos();
    let raw = along_axis.atan2(along_broadside);
    Ok(raw.sin().asin())
}

/// Angles of every scene object as seen from AP `a`.
#[derive(Debug, Clone)]
pub struct SceneAngles {
    pub targets: Vec<f64>,
    pub clutter: Vec<f64>,
    pub other_aps: Vec<f64>,
    pub users: Vec<f64>,
}

/// Computes target, clutter, peer-AP, and user directions from AP `a`.
pub fn scene_angles(scene: &NetworkScene, a: usize) -> Result<SceneAngles, SolverError> {
    let map = |pts: &[[f64; 2]]| -> Result<Vec<f64>, SolverError> {
        pts.iter().map(|&p| angle_to_point(scene, a, p)).collect()
    };
    let other: Vec<[f64; 2]> = scene
        .ap_positions
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != a)
        .map(|(_, &p)| p)
        .collect();
    Ok(SceneAngles {
        targets: map(&scene.target_positions)?,
        clutter: map(&scene.clutter_positions)?,
        other_aps: map(&other)?,
        users: map(&scene.ue_positions)?,
    })
}

/// Draws one narrowband multipath channel from AP `a` to user `u`: a Rician
/// line-of-sight ray toward the user plus `n_paths - 1` scattered rays at
/// uniform random angles, scaled by the distance-based path gain.
pub fn generate_sv_channel(
    scene: &NetworkScene,
    a: usize,
    u: usize,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<Complex64>, SolverError> {
    let ap = scene.ap_positions[a];
    let ue = scene.ue_positions[u];
    let dist = ((ue[0] - ap[0]).powi(2) + (ue[1] - ap[1]).powi(2)).sqrt();
    let loss_db = path_loss_db(scene.reference_pathloss_db, dist)?;
    let gain = 10f64.powf(-loss_db / 10.0);
    let kappa = scene.rician_factor;
    let w_los = (kappa / (1.0 + kappa)).sqrt();
    let w_nlos = (1.0 / (1.0 + kappa)).sqrt();
    let phi0 = angle_to_point(scene, a, ue)?;
    let mut h = steering_vector(phi0, scene.n_tx) * Complex64::new(w_los, 0.0);
    for _ in 1..scene.n_paths {
        let phi: f64 = rand::Rng::random_range(rng, -std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
        let fade = complex_gaussian(rng);
        h += steering_vector(phi, scene.n_tx) * (fade * w_nlos);
    }
    Ok(h * Complex64::new((gain / scene.n_paths as f64).sqrt(), 0.0))
}

/// Draws the full channel set deterministically from `seed`; the substream for
/// each (AP, user) pair is independent of draw order.
pub fn generate_channels(scene: &NetworkScene, seed: u64) -> Result<ChannelSet, SolverError> {
    scene.validate()?;
    let mut per_ap = Vec::with_capacity(scene.n_aps());
    for a in 0..scene.n_aps() {
        let mut h = DMatrix::zeros(scene.n_tx, scene.n_users());
        for u in 0..scene.n_users() {
            let sub = derive_seed(seed, (a as u64) << 32 | u as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(sub);
            h.set_column(u, &generate_sv_channel(scene, a, u, &mut rng)?);
        }
        per_ap.push(h);
    }
    Ok(ChannelSet { per_ap, seed })
}

/// Builds the discretized beampattern requirement for AP `a`: unit desired
/// power within `mainlobe_halfwidth` of each target direction, zero elsewhere,
/// and notch directions at grid points within `notch_halfwidth` of any clutter
/// scatterer or peer AP (mainlobe points are never notched).
///
/// `mse_budget` and `notch_budget` are specified relative to the transmit
/// power budget (i.e. for a beam normalized to unit total power) and are
/// stored scaled to absolute beam units, so the same budget numbers describe
/// the same pattern shape at any transmit power.
#[allow(clippy::too_many_arguments)]
pub fn build_beampattern_spec(
    scene: &NetworkScene,
    a: usize,
    mainlobe_halfwidth: f64,
    notch_halfwidth: f64,
    mse_budget: f64,
    notch_budget: f64,
    grid_points: usize,
) -> Result<BeampatternSpec, SolverError> {
    if grid_points < 2 {
        return Err(SolverError::InvalidParameter("grid needs at least 2 points".into()));
    }
    let angles = scene_angles(scene, a)?;
    let half = std::f64::consts::FRAC_PI_2;
    let step = 2.0 * half / (grid_points - 1) as f64;
    let grid_angles: Vec<f64> = (0..grid_points).map(|l| -half + step * l as f64).collect();
    // Strict-inequality guard half a grid step wide so boundary points land
    // deterministically despite floating-point grid construction.
    let eps = 0.5 * step * 1e-9;
    let near = |theta: f64, centers: &[f64], width: f64| {
        centers.iter().any(|&c| (theta - c).abs() <= width + eps)
    };
    let desired_spectrum: Vec<f64> = grid_angles
        .iter()
        .map(|&t| if near(t, &angles.targets, mainlobe_halfwidth) { 1.0 } else { 0.0 })
        .collect();
    let weights = vec![1.0; grid_points];
    let mut suppress = angles.clutter.clone();
    suppress.extend_from_slice(&angles.other_aps);
    let notch_angles: Vec<f64> = grid_angles
        .iter()
        .zip(desired_spectrum.iter())
        .filter(|&(&t, &p)| p == 0.0 && near(t, &suppress, notch_halfwidth))
        .map(|(&t, _)| t)
        .collect();
    Ok(BeampatternSpec {
        grid_angles,
        desired_spectrum,
        weights,
        notch_angles,
        mse_budget: mse_budget * scene.tx_power_budget,
        notch_budget: notch_budget * scene.tx_power_budget,
    })
}
