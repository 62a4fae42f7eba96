//! Experiment configuration: TOML schema, validation, and conversion into
//! the library's scene/solver types. Angle keys are degrees (`_deg`), power
//! keys are milliwatts (`_mw`) or dBm (`_dbm`), and every conversion to the
//! internal radian/mW units happens here. Pattern budgets are relative: the
//! matching-error budget `mse_budget` is for a beam normalized to unit total
//! power, and `notch_budget_db` converts as 10^(dB/10) on the same relative
//! scale.

use crate::commands::{CliError, CliResult};
use isac_hbf::panda_core::PenaltyConfig;
use isac_hbf::runtime::RunOptions;
use isac_hbf::scene::{build_beampattern_spec, BeampatternSpec, NetworkScene};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene: SceneConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub detection: DetectionConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    /// Transmitter sites, meters.
    pub ap_positions_m: Vec<[f64; 2]>,
    /// User sites, meters.
    pub ue_positions_m: Vec<[f64; 2]>,
    /// Sensing target sites, meters.
    pub target_positions_m: Vec<[f64; 2]>,
    /// Clutter scatterer sites, meters.
    #[serde(default)]
    pub clutter_positions_m: Vec<[f64; 2]>,
    #[serde(default = "default_n_tx")]
    pub n_tx: usize,
    /// Receive antennas; defaults to `n_tx` when omitted.
    #[serde(default)]
    pub n_rx: Option<usize>,
    #[serde(default = "default_n_rf")]
    pub n_rf: usize,
    #[serde(default = "default_tx_power_mw")]
    pub tx_power_mw: f64,
    /// Per-user communication noise power, applied to every user.
    #[serde(default = "default_noise_dbm")]
    pub noise_comm_dbm: f64,
    #[serde(default = "default_noise_dbm")]
    pub noise_radar_dbm: f64,
    #[serde(default = "default_rician_factor")]
    pub rician_factor: f64,
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Path loss at 1 m, dB.
    #[serde(default = "default_reference_pathloss_db")]
    pub reference_pathloss_db: f64,
    /// Array broadside bearing, applied to every transmitter.
    #[serde(default = "default_broadside_deg")]
    pub broadside_deg: f64,
    /// Beampattern grid resolution over [-90, 90] degrees.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_mainlobe_halfwidth_deg")]
    pub mainlobe_halfwidth_deg: f64,
    #[serde(default = "default_notch_halfwidth_deg")]
    pub notch_halfwidth_deg: f64,
    /// Pattern matching-error budget, relative to unit total transmit power.
    #[serde(default = "default_mse_budget")]
    pub mse_budget: f64,
    /// Notch power cap in dB on the same power-relative scale.
    #[serde(default = "default_notch_budget_db")]
    pub notch_budget_db: f64,
    /// Rate weights, one per user; all-ones when omitted.
    #[serde(default)]
    pub user_weights: Option<Vec<f64>>,
}

fn default_n_tx() -> usize {
    32
}
fn default_n_rf() -> usize {
    4
}
fn default_tx_power_mw() -> f64 {
    100.0
}
fn default_noise_dbm() -> f64 {
    -90.0
}
fn default_rician_factor() -> f64 {
    6.0
}
fn default_n_paths() -> usize {
    10
}
fn default_reference_pathloss_db() -> f64 {
    60.0
}
fn default_broadside_deg() -> f64 {
    90.0
}
fn default_grid_points() -> usize {
    181
}
fn default_mainlobe_halfwidth_deg() -> f64 {
    4.0
}
fn default_notch_halfwidth_deg() -> f64 {
    2.0
}
fn default_mse_budget() -> f64 {
    4.0
}
fn default_notch_budget_db() -> f64 {
    -30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Distributed,
    Centralized,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_penalty")]
    pub rho: f64,
    #[serde(default = "default_penalty")]
    pub varrho: f64,
    #[serde(default = "default_penalty")]
    pub lambda: f64,
    #[serde(default = "default_max_outer_iters")]
    pub max_outer_iters: usize,
    #[serde(default = "default_primal_tolerance")]
    pub primal_tolerance: f64,
    #[serde(default = "default_al_change_tolerance")]
    pub al_change_tolerance: f64,
    #[serde(default = "default_bsum_inner_iters")]
    pub bsum_inner_iters: usize,
    #[serde(default = "default_stall_window")]
    pub stall_window: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
}

fn default_penalty() -> f64 {
    1.0
}
fn default_max_outer_iters() -> usize {
    1200
}
fn default_primal_tolerance() -> f64 {
    1e-3
}
fn default_al_change_tolerance() -> f64 {
    1e-5
}
fn default_bsum_inner_iters() -> usize {
    30
}
fn default_stall_window() -> usize {
    25
}
fn default_algorithm() -> Algorithm {
    Algorithm::Distributed
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: default_penalty(),
            varrho: default_penalty(),
            lambda: default_penalty(),
            max_outer_iters: default_max_outer_iters(),
            primal_tolerance: default_primal_tolerance(),
            al_change_tolerance: default_al_change_tolerance(),
            bsum_inner_iters: default_bsum_inner_iters(),
            stall_window: default_stall_window(),
            seed: 0,
            algorithm: default_algorithm(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "gamma")]
    Gamma,
    #[serde(rename = "Gamma_notch")]
    GammaNotch,
    #[serde(rename = "n_tx")]
    NTx,
    #[serde(rename = "n_rf")]
    NRf,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::Gamma => "gamma",
            SweepVariable::GammaNotch => "Gamma_notch",
            SweepVariable::NTx => "n_tx",
            SweepVariable::NRf => "n_rf",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    /// Sweep points: linear budget for `gamma`, dB for `Gamma_notch`,
    /// positive integers for the antenna counts.
    pub values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinrSource {
    /// Output SINR of the designed beams through the adaptive receive
    /// combiner.
    Solve,
    /// A fixed SINR sum from `fixed_sum_sinr`; the simulation model is
    /// rescaled to match it.
    Fixed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    /// False-alarm targets for the ROC and calibration commands.
    #[serde(default = "default_pr_fa")]
    pub pr_fa: Vec<f64>,
    #[serde(default = "default_mc_trials")]
    pub mc_trials: usize,
    /// Waveform time-bandwidth product entering the echo model.
    #[serde(default = "default_time_bandwidth")]
    pub time_bandwidth: f64,
    #[serde(default = "default_sinr_source")]
    pub sinr_source: SinrSource,
    #[serde(default)]
    pub fixed_sum_sinr: Option<f64>,
}

fn default_pr_fa() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1]
}
fn default_mc_trials() -> usize {
    100_000
}
fn default_time_bandwidth() -> f64 {
    1.0
}
fn default_sinr_source() -> SinrSource {
    SinrSource::Solve
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            pr_fa: default_pr_fa(),
            mc_trials: default_mc_trials(),
            time_bandwidth: default_time_bandwidth(),
            sinr_source: default_sinr_source(),
            fixed_sum_sinr: None,
        }
    }
}

/// Parsed configuration plus the content digest stamped into every output.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub cfg: ExperimentConfig,
    /// SHA-256 of the raw config file bytes, lowercase hex.
    pub hash_hex: String,
}

pub fn load(path: &Path) -> CliResult<LoadedConfig> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("config {} is not UTF-8", path.display())))?;
    let cfg: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    validate(&cfg)?;
    let digest = Sha256::digest(&bytes);
    let hash_hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(LoadedConfig { cfg, hash_hex })
}

fn bad(field: &str, message: String) -> CliError {
    CliError::Config(format!("{field}: {message}"))
}

fn validate(cfg: &ExperimentConfig) -> CliResult<()> {
    let s = &cfg.scene;
    if s.ap_positions_m.is_empty() {
        return Err(bad("scene.ap_positions_m", "at least one transmitter required".into()));
    }
    if s.ue_positions_m.is_empty() {
        return Err(bad("scene.ue_positions_m", "at least one user required".into()));
    }
    if s.target_positions_m.is_empty() {
        return Err(bad("scene.target_positions_m", "at least one target required".into()));
    }
    if s.n_tx == 0 {
        return Err(bad("scene.n_tx", "must be positive".into()));
    }
    if s.n_rx == Some(0) {
        return Err(bad("scene.n_rx", "must be positive".into()));
    }
    if s.n_rf == 0 || s.n_rf > s.n_tx {
        return Err(bad(
            "scene.n_rf",
            format!("must be in 1..={} (got {})", s.n_tx, s.n_rf),
        ));
    }
    if !(s.tx_power_mw > 0.0) || !s.tx_power_mw.is_finite() {
        return Err(bad("scene.tx_power_mw", format!("must be positive ({})", s.tx_power_mw)));
    }
    if !(s.rician_factor >= 0.0) {
        return Err(bad("scene.rician_factor", format!("must be nonnegative ({})", s.rician_factor)));
    }
    if s.n_paths == 0 {
        return Err(bad("scene.n_paths", "must be positive".into()));
    }
    if s.grid_points < 2 {
        return Err(bad("scene.grid_points", format!("needs at least 2 points ({})", s.grid_points)));
    }
    if !(s.mainlobe_halfwidth_deg >= 0.0) {
        return Err(bad("scene.mainlobe_halfwidth_deg", "must be nonnegative".into()));
    }
    if !(s.notch_halfwidth_deg >= 0.0) {
        return Err(bad("scene.notch_halfwidth_deg", "must be nonnegative".into()));
    }
    if !(s.mse_budget > 0.0) || !s.mse_budget.is_finite() {
        return Err(bad("scene.mse_budget", format!("must be positive ({})", s.mse_budget)));
    }
    if !s.notch_budget_db.is_finite() {
        return Err(bad("scene.notch_budget_db", format!("must be finite ({})", s.notch_budget_db)));
    }
    if let Some(w) = &s.user_weights {
        if w.len() != s.ue_positions_m.len() {
            return Err(bad(
                "scene.user_weights",
                format!("{} weights for {} users", w.len(), s.ue_positions_m.len()),
            ));
        }
        if w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(bad("scene.user_weights", "all weights must be positive".into()));
        }
    }

    let v = &cfg.solver;
    for (name, value) in
        [("solver.rho", v.rho), ("solver.varrho", v.varrho), ("solver.lambda", v.lambda)]
    {
        if !(value > 0.0) || !value.is_finite() {
            return Err(bad(name, format!("must be positive ({value})")));
        }
    }
    if v.max_outer_iters == 0 {
        return Err(bad("solver.max_outer_iters", "must be positive".into()));
    }
    if !(v.primal_tolerance > 0.0) {
        return Err(bad("solver.primal_tolerance", format!("must be positive ({})", v.primal_tolerance)));
    }
    if !(v.al_change_tolerance > 0.0) {
        return Err(bad(
            "solver.al_change_tolerance",
            format!("must be positive ({})", v.al_change_tolerance),
        ));
    }
    if v.bsum_inner_iters == 0 {
        return Err(bad("solver.bsum_inner_iters", "must be positive".into()));
    }
    if v.stall_window < 2 {
        return Err(bad("solver.stall_window", format!("must be at least 2 ({})", v.stall_window)));
    }

    if let Some(sw) = &cfg.sweep {
        if sw.values.is_empty() {
            return Err(bad("sweep.values", "must not be empty".into()));
        }
        if sw.trials == 0 {
            return Err(bad("sweep.trials", "must be at least 1".into()));
        }
        match sw.variable {
            SweepVariable::Gamma => {
                if sw.values.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                    return Err(bad("sweep.values", "pattern budgets must be positive".into()));
                }
            }
            SweepVariable::GammaNotch => {
                if sw.values.iter().any(|x| !x.is_finite()) {
                    return Err(bad("sweep.values", "notch caps in dB must be finite".into()));
                }
            }
            SweepVariable::NTx | SweepVariable::NRf => {
                if sw.values.iter().any(|x| x.fract() != 0.0 || *x < 1.0 || *x > 4096.0) {
                    return Err(bad(
                        "sweep.values",
                        "antenna counts must be positive integers".into(),
                    ));
                }
                if sw.variable == SweepVariable::NRf
                    && sw.values.iter().any(|x| *x > s.n_tx as f64)
                {
                    return Err(bad(
                        "sweep.values",
                        format!("RF chain counts must not exceed scene.n_tx = {}", s.n_tx),
                    ));
                }
            }
        }
    }

    let d = &cfg.detection;
    if d.pr_fa.is_empty() {
        return Err(bad("detection.pr_fa", "must not be empty".into()));
    }
    if d.pr_fa.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(bad("detection.pr_fa", "false-alarm targets must lie in (0, 1)".into()));
    }
    if d.mc_trials == 0 {
        return Err(bad("detection.mc_trials", "must be at least 1".into()));
    }
    if !(d.time_bandwidth > 0.0) || !d.time_bandwidth.is_finite() {
        return Err(bad("detection.time_bandwidth", format!("must be positive ({})", d.time_bandwidth)));
    }
    match (d.sinr_source, d.fixed_sum_sinr) {
        (SinrSource::Fixed, None) => {
            return Err(bad(
                "detection.fixed_sum_sinr",
                "required when detection.sinr_source = \"fixed\"".into(),
            ));
        }
        (SinrSource::Fixed, Some(x)) if !(x >= 0.0) || !x.is_finite() => {
            return Err(bad("detection.fixed_sum_sinr", format!("must be nonnegative ({x})")));
        }
        _ => {}
    }
    Ok(())
}

impl ExperimentConfig {
    /// Internal-unit scene for the configured geometry and antenna counts.
    pub fn scene(&self) -> NetworkScene {
        let s = &self.scene;
        let a = s.ap_positions_m.len();
        NetworkScene {
            ap_positions: s.ap_positions_m.clone(),
            ue_positions: s.ue_positions_m.clone(),
            target_positions: s.target_positions_m.clone(),
            clutter_positions: s.clutter_positions_m.clone(),
            n_tx: s.n_tx,
            n_rx: s.n_rx.unwrap_or(s.n_tx),
            n_rf: s.n_rf,
            tx_power_budget: s.tx_power_mw,
            noise_power_comm: vec![dbm_to_mw(s.noise_comm_dbm); s.ue_positions_m.len()],
            noise_power_radar: dbm_to_mw(s.noise_radar_dbm),
            rician_factor: s.rician_factor,
            n_paths: s.n_paths,
            reference_pathloss_db: s.reference_pathloss_db,
            broadside: vec![s.broadside_deg.to_radians(); a],
        }
    }

    /// Per-transmitter pattern specs for a scene derived from this config,
    /// with overridable budgets (used by the sweep command).
    pub fn specs_with_budgets(
        &self,
        scene: &NetworkScene,
        mse_budget: f64,
        notch_budget_linear: f64,
    ) -> CliResult<Vec<BeampatternSpec>> {
        (0..scene.n_aps())
            .map(|a| {
                build_beampattern_spec(
                    scene,
                    a,
                    self.scene.mainlobe_halfwidth_deg.to_radians(),
                    self.scene.notch_halfwidth_deg.to_radians(),
                    mse_budget,
                    notch_budget_linear,
                    self.scene.grid_points,
                )
                .map_err(|e| CliError::Config(format!("scene (transmitter {a}): {e}")))
            })
            .collect()
    }

    pub fn specs(&self, scene: &NetworkScene) -> CliResult<Vec<BeampatternSpec>> {
        self.specs_with_budgets(scene, self.scene.mse_budget, db_to_linear(self.scene.notch_budget_db))
    }

    pub fn run_options(&self, n_users: usize, seed: u64) -> RunOptions {
        let v = &self.solver;
        RunOptions {
            penalties: PenaltyConfig {
                rho: v.rho,
                varrho: v.varrho,
                lambda: v.lambda,
                max_outer_iters: v.max_outer_iters,
                primal_tolerance: v.primal_tolerance,
                al_change_tolerance: v.al_change_tolerance,
            },
            bsum_inner_iters: v.bsum_inner_iters,
            seed,
            user_weights: self
                .scene
                .user_weights
                .clone()
                .unwrap_or_else(|| vec![1.0; n_users]),
            stall_window: v.stall_window,
        }
    }
}
