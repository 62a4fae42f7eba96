//! The four experiment commands: `design` (one solve, per-iteration
//! diagnostics and beampatterns), `sweep` (rate versus a scene or budget
//! parameter over trials), `roc` (analytic and Monte-Carlo detection curves
//! for the designed beams), and `detect-mc` (threshold calibration at the
//! configured operating points).

use crate::config::{db_to_linear, Algorithm, ExperimentConfig, SinrSource, SweepVariable};
use crate::output::{fmt, CsvFile};
use isac_hbf::metrics::{
    detection_probability, detection_threshold, monte_carlo_detection, radar_sinr,
    transmit_beampattern, DetectionModel,
};
use isac_hbf::runtime::{run_centralized_admm, run_panda_distributed, SolveResult, Termination};
use isac_hbf::scene::{generate_channels, BeampatternSpec, ChannelSet, NetworkScene};
use isac_hbf::{Complex64, SolverError};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::PathBuf;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

/// Command-level failure, carrying the process exit code: configuration
/// problems exit 2, an infeasible pattern budget exits 3, hitting the
/// iteration cap without meeting the residual tolerance exits 4, I/O exits 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    NonConverged(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::NonConverged(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::NonConverged(m) => write!(f, "not converged: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn solver_error(e: SolverError) -> CliError {
    match e {
        SolverError::InfeasibleMseBudget { .. } => CliError::Infeasible(e.to_string()),
        other => CliError::Config(other.to_string()),
    }
}

/// Everything a command needs: the validated config, its content hash, the
/// output directory, and the effective seed (CLI override or config).
pub struct Context {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub out: PathBuf,
    pub seed: u64,
}

// ---------------------------------------------------------------------------
// Shared solve plumbing
// ---------------------------------------------------------------------------

fn solve(
    cfg: &ExperimentConfig,
    scene: &NetworkScene,
    channels: &ChannelSet,
    specs: &[BeampatternSpec],
    seed: u64,
) -> CliResult<SolveResult> {
    let opts = cfg.run_options(scene.n_users(), seed);
    let run = match cfg.solver.algorithm {
        Algorithm::Distributed => run_panda_distributed(scene, channels, specs, &opts),
        Algorithm::Centralized => run_centralized_admm(scene, channels, specs, &opts),
    };
    run.map_err(solver_error)
}

/// The residual tolerance is judged on the final report: a run that stops at
/// the iteration cap but meets the tolerance is still a converged design.
fn meets_residual_tolerance(cfg: &ExperimentConfig, scene: &NetworkScene, run: &SolveResult) -> bool {
    let limit = cfg.solver.primal_tolerance * scene.tx_power_budget.sqrt();
    run.reports
        .last()
        .map(|r| r.core.primal_residuals.iter().all(|&x| x < limit))
        .unwrap_or(false)
}

fn nonconvergence_error(run: &SolveResult) -> CliError {
    CliError::NonConverged(format!(
        "iteration cap {} reached with primal residuals above tolerance; raise \
         solver.max_outer_iters or loosen solver.primal_tolerance",
        run.reports.len()
    ))
}

fn composite_beams(run: &SolveResult) -> Vec<DMatrix<Complex64>> {
    run.states.iter().map(|s| s.hbf.composite()).collect()
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Residual => "residual",
        Termination::AlStall => "objective-stall",
        Termination::IterationCap => "iteration-cap",
    }
}

// ---------------------------------------------------------------------------
// design
// ---------------------------------------------------------------------------

pub fn cmd_design(ctx: &Context) -> CliResult<()> {
    let scene = ctx.cfg.scene();
    let channels = generate_channels(&scene, ctx.seed).map_err(solver_error)?;
    let specs = ctx.cfg.specs(&scene)?;
    let run = solve(&ctx.cfg, &scene, &channels, &specs, ctx.seed)?;
    let a_count = scene.n_aps();

    // Per-iteration diagnostics.
    let mut columns = vec![
        "iter".to_string(),
        "augmented_lagrangian".to_string(),
        "weighted_sum_rate_bits".to_string(),
    ];
    for prefix in ["residual_t_ap", "residual_u_ap", "residual_z_ap", "pattern_mse_ap", "notch_power_ap"] {
        for a in 0..a_count {
            columns.push(format!("{prefix}{a}"));
        }
    }
    let mut diag = CsvFile::create(
        &ctx.out,
        "design_iterations.csv",
        &ctx.hash,
        ctx.seed,
        &["pattern_mse and notch_power are normalized by the transmit power budget"],
        &columns,
    )?;
    for (i, rep) in run.reports.iter().enumerate() {
        let mut row = vec![
            (i + 1).to_string(),
            fmt(rep.core.augmented_lagrangian),
            fmt(rep.weighted_sum_rate),
        ];
        row.extend(rep.core.primal_residuals.iter().map(|&x| fmt(x)));
        row.extend(rep.pattern_residuals.iter().map(|&x| fmt(x)));
        row.extend(rep.notch_residuals.iter().map(|&x| fmt(x)));
        row.extend(rep.pattern_mse_per_ap.iter().map(|&x| fmt(x)));
        row.extend(rep.notch_power_per_ap.iter().map(|&x| fmt(x)));
        diag.row(&row)?;
    }
    let diag_name = diag.finish()?;

    // Per-transmitter beampatterns on the design grid, dB relative to peak.
    let beams = composite_beams(&run);
    for (a, beam) in beams.iter().enumerate() {
        let angles = &specs[a].grid_angles;
        let powers: Vec<f64> = angles.iter().map(|&t| transmit_beampattern(beam, t)).collect();
        let peak = powers.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
        let mut file = CsvFile::create(
            &ctx.out,
            &format!("beampattern_ap{a}.csv"),
            &ctx.hash,
            ctx.seed,
            &["power_db is transmit power normalized to its peak over this grid (peak = 0 dB)"],
            &["angle_deg".to_string(), "power_db".to_string()],
        )?;
        for (&t, &p) in angles.iter().zip(&powers) {
            let db = 10.0 * (p / peak).max(1e-30).log10();
            file.row(&[fmt(t.to_degrees()), fmt(db)])?;
        }
        file.finish()?;
    }

    let last = run.reports.last().expect("at least one iteration");
    let mut summary = String::new();
    let _ = write!(
        summary,
        "design: {} iterations ({}), rate {:.4} bits, wrote {diag_name} and {} beampattern files",
        run.reports.len(),
        termination_name(run.termination),
        last.weighted_sum_rate,
        a_count
    );
    println!("{summary}");

    if !meets_residual_tolerance(&ctx.cfg, &scene, &run) {
        return Err(nonconvergence_error(&run));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

struct SweepRow {
    param: f64,
    trial: usize,
    wsr: f64,
    min_sum_sinr: f64,
    iterations: usize,
    wall_ms: f64,
    converged: bool,
}

/// Smallest over targets of the network-summed output SINR through adaptive
/// receive combiners.
fn min_sum_sinr(
    cfg: &ExperimentConfig,
    scene: &NetworkScene,
    beams: &[DMatrix<Complex64>],
) -> CliResult<f64> {
    let mut model =
        DetectionModel::from_scene(scene, cfg.detection.time_bandwidth).map_err(solver_error)?;
    let mut best = f64::INFINITY;
    for t in 0..scene.target_positions.len() {
        model.set_mvdr_weights(beams, t).map_err(solver_error)?;
        let mut sum = 0.0;
        for a in 0..scene.n_aps() {
            sum += radar_sinr(&model, beams, a, t).map_err(solver_error)?;
        }
        best = best.min(sum);
    }
    Ok(best)
}

fn sweep_job(ctx: &Context, variable: SweepVariable, value: f64, trial: usize) -> CliResult<SweepRow> {
    let mut scene = ctx.cfg.scene();
    let mut mse_budget = ctx.cfg.scene.mse_budget;
    let mut notch_linear = db_to_linear(ctx.cfg.scene.notch_budget_db);
    match variable {
        SweepVariable::Gamma => mse_budget = value,
        SweepVariable::GammaNotch => notch_linear = db_to_linear(value),
        SweepVariable::NTx => {
            scene.n_tx = value as usize;
            if ctx.cfg.scene.n_rx.is_none() {
                scene.n_rx = value as usize;
            }
            if scene.n_rf > scene.n_tx {
                return Err(CliError::Config(format!(
                    "sweep.values: n_tx = {value} below scene.n_rf = {}",
                    scene.n_rf
                )));
            }
        }
        SweepVariable::NRf => scene.n_rf = value as usize,
    }
    let seed = ctx.seed.wrapping_add(trial as u64);
    let channels = generate_channels(&scene, seed).map_err(solver_error)?;
    let specs = ctx.cfg.specs_with_budgets(&scene, mse_budget, notch_linear)?;
    let run = solve(&ctx.cfg, &scene, &channels, &specs, seed)?;
    let beams = composite_beams(&run);
    Ok(SweepRow {
        param: value,
        trial,
        wsr: run.reports.last().expect("at least one iteration").weighted_sum_rate,
        min_sum_sinr: min_sum_sinr(&ctx.cfg, &scene, &beams)?,
        iterations: run.reports.len(),
        wall_ms: run.wall_clock_ms.iter().sum(),
        converged: meets_residual_tolerance(&ctx.cfg, &scene, &run),
    })
}

pub fn cmd_sweep(ctx: &Context) -> CliResult<()> {
    let sweep = ctx
        .cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("sweep: section required for the sweep command".into()))?;
    let jobs: Vec<(f64, usize)> = sweep
        .values
        .iter()
        .flat_map(|&v| (0..sweep.trials).map(move |t| (v, t)))
        .collect();
    // Worker pool computes; rows are written by this single thread in the
    // deterministic (param, trial) order of `jobs`.
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(v, t)| sweep_job(ctx, sweep.variable, v, t))
        .collect::<CliResult<Vec<_>>>()?;
    let mut file = CsvFile::create(
        &ctx.out,
        "sweep.csv",
        &ctx.hash,
        ctx.seed,
        &[&format!("param is {}", sweep.variable.name())],
        &["param", "trial", "wsr", "min_sum_sinr", "iterations", "wall_ms"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    )?;
    for r in &rows {
        file.row(&[
            fmt(r.param),
            r.trial.to_string(),
            fmt(r.wsr),
            fmt(r.min_sum_sinr),
            r.iterations.to_string(),
            fmt(r.wall_ms),
        ])?;
    }
    let name = file.finish()?;
    let stragglers = rows.iter().filter(|r| !r.converged).count();
    println!(
        "sweep: {} rows ({} values x {} trials) wrote {name}",
        rows.len(),
        sweep.values.len(),
        sweep.trials
    );
    if stragglers > 0 {
        return Err(CliError::NonConverged(format!(
            "{stragglers} of {} trials hit the iteration cap above the residual tolerance \
             (rows are still recorded)",
            rows.len()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// roc and detect-mc
// ---------------------------------------------------------------------------

struct DetectionSetup {
    model: DetectionModel,
    beams: Vec<DMatrix<Complex64>>,
    sum_sinr: f64,
    n_aps: usize,
}

/// Designs beams per the config, builds the echo model, points the receive
/// combiners at the first target, and pins the summed output SINR (either
/// the designed value or the configured fixed value).
fn detection_setup(ctx: &Context) -> CliResult<DetectionSetup> {
    let scene = ctx.cfg.scene();
    let channels = generate_channels(&scene, ctx.seed).map_err(solver_error)?;
    let specs = ctx.cfg.specs(&scene)?;
    let run = solve(&ctx.cfg, &scene, &channels, &specs, ctx.seed)?;
    if !meets_residual_tolerance(&ctx.cfg, &scene, &run) {
        return Err(nonconvergence_error(&run));
    }
    let beams = composite_beams(&run);
    let mut model =
        DetectionModel::from_scene(&scene, ctx.cfg.detection.time_bandwidth).map_err(solver_error)?;
    model.set_mvdr_weights(&beams, 0).map_err(solver_error)?;
    let designed: f64 = (0..scene.n_aps())
        .map(|a| radar_sinr(&model, &beams, a, 0).map_err(solver_error))
        .sum::<CliResult<f64>>()?;
    let sum_sinr = match ctx.cfg.detection.sinr_source {
        SinrSource::Solve => designed,
        SinrSource::Fixed => {
            let wanted = ctx.cfg.detection.fixed_sum_sinr.expect("validated");
            if designed <= 0.0 && wanted > 0.0 {
                return Err(CliError::Config(
                    "detection.fixed_sum_sinr: designed SINR is zero, cannot rescale the \
                     echo model to a positive value"
                        .into(),
                ));
            }
            // Output SINR scales with the squared target amplitude at fixed
            // combiners, so one rescale pins the sum exactly.
            let scale = if wanted > 0.0 { (wanted / designed).sqrt() } else { 0.0 };
            for ap in &mut model.per_ap {
                ap.target_amplitudes[0] *= Complex64::new(scale, 0.0);
            }
            wanted
        }
    };
    Ok(DetectionSetup { model, beams, sum_sinr, n_aps: scene.n_aps() })
}

fn sorted_pr_fa(ctx: &Context) -> Vec<f64> {
    let mut grid = ctx.cfg.detection.pr_fa.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    grid
}

pub fn cmd_roc(ctx: &Context) -> CliResult<()> {
    let setup = detection_setup(ctx)?;
    let trials = ctx.cfg.detection.mc_trials;
    let mut file = CsvFile::create(
        &ctx.out,
        "roc.csv",
        &ctx.hash,
        ctx.seed,
        &[&format!("sum output SINR = {}", setup.sum_sinr)],
        &["pr_fa", "pr_d_analytic", "pr_d_mc", "mc_stderr"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    )?;
    for pr_fa in sorted_pr_fa(ctx) {
        let analytic =
            detection_probability(setup.sum_sinr, pr_fa, setup.n_aps).map_err(solver_error)?;
        let threshold = detection_threshold(pr_fa, setup.n_aps).map_err(solver_error)?;
        let sim = monte_carlo_detection(&setup.model, &setup.beams, 0, threshold, trials, ctx.seed)
            .map_err(solver_error)?;
        let stderr = (sim.pr_d * (1.0 - sim.pr_d) / trials as f64).sqrt();
        file.row(&[fmt(pr_fa), fmt(analytic), fmt(sim.pr_d), fmt(stderr)])?;
    }
    let name = file.finish()?;
    println!(
        "roc: {} operating points at SINR sum {:.4}, wrote {name}",
        ctx.cfg.detection.pr_fa.len(),
        setup.sum_sinr
    );
    Ok(())
}

pub fn cmd_detect_mc(ctx: &Context) -> CliResult<()> {
    let setup = detection_setup(ctx)?;
    let trials = ctx.cfg.detection.mc_trials;
    let mut file = CsvFile::create(
        &ctx.out,
        "detect_mc.csv",
        &ctx.hash,
        ctx.seed,
        &[&format!("sum output SINR = {}", setup.sum_sinr)],
        &["pr_fa", "threshold", "pr_fa_mc", "pr_d_mc", "pr_d_analytic", "trials"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>(),
    )?;
    for pr_fa in sorted_pr_fa(ctx) {
        let threshold = detection_threshold(pr_fa, setup.n_aps).map_err(solver_error)?;
        let analytic =
            detection_probability(setup.sum_sinr, pr_fa, setup.n_aps).map_err(solver_error)?;
        let sim = monte_carlo_detection(&setup.model, &setup.beams, 0, threshold, trials, ctx.seed)
            .map_err(solver_error)?;
        file.row(&[
            fmt(pr_fa),
            fmt(threshold),
            fmt(sim.pr_fa),
            fmt(sim.pr_d),
            fmt(analytic),
            trials.to_string(),
        ])?;
    }
    let name = file.finish()?;
    println!(
        "detect-mc: {} thresholds calibrated over {trials} trials each, wrote {name}",
        ctx.cfg.detection.pr_fa.len()
    );
    Ok(())
}
