//! End-to-end pipelines behind the CLI: simulate to files, estimate from
//! logs, replay against GPS tracks, and Monte Carlo parameter sweeps.
//!
//! Ground truth travels in a sidecar JSON next to the read log, never inside
//! it, so the estimator cannot peek. All outputs are deterministic functions
//! of (scenario, seed).

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{apply_lever_arm, distance, geo_to_local, local_to_geo, GeoFix, LeverArm, Trajectory, Vec3};
use crate::logio::{
    export_map, load_scenario_str, parse_gps_log, parse_read_log, parse_read_log_lenient,
    write_gps_log, write_read_log, MapFormat, ScenarioConfig,
};
use crate::mle::{
    compute_block_likelihood_map, compute_likelihood_map, find_peaks, fuse_tag_maps,
    misalignment_report, refine_peaks, resolve_estimate, EstimateResult, GridSpec, LikelihoodMap,
    MotionModel, SidePrior,
};

/// How many ranked peaks the pipeline keeps before side-prior resolution.
/// Trajectory noise can stack several sidelobes above the far-side main
/// peak, so this stays well above 2.
const PEAK_SEARCH_COUNT: usize = 32;
use crate::sim::{simulate_reads, ReadEvent};

// ---------------------------------------------------------------------------
// Bundled scenarios
// ---------------------------------------------------------------------------

/// The scenario files shipped with the repository.
pub mod bundled {
    use super::*;

    pub const LAB_JSON: &str = include_str!("../../../scenarios/lab.json");
    pub const FIELD_JSON: &str = include_str!("../../../scenarios/field.json");

    /// Indoor track: 1.5 m pass, 5 mm steps, 0.1 s dwell, tag 0.2 m off the
    /// track line.
    pub fn lab() -> ScenarioConfig {
        load_scenario_str(LAB_JSON).expect("bundled lab scenario parses")
    }

    /// Outdoor drive-by: 10 m straight pass at 2 m/s with GPS-derived motion.
    pub fn field() -> ScenarioConfig {
        load_scenario_str(FIELD_JSON).expect("bundled field scenario parses")
    }
}

// ---------------------------------------------------------------------------
// Ground-truth sidecar
// ---------------------------------------------------------------------------

/// Scoring data written next to a simulated read log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSidecar {
    pub true_start: [f64; 3],
    pub tag_positions: BTreeMap<String, [f64; 3]>,
    pub seed: u64,
}

/// Sidecar path for a read log: `reads.csv` -> `reads.truth.json`.
pub fn sidecar_path(log_path: &Path) -> PathBuf {
    let stem = log_path.file_stem().unwrap_or_default().to_string_lossy();
    log_path.with_file_name(format!("{stem}.truth.json"))
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// In-memory simulation output.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub events: Vec<ReadEvent>,
    pub truth: TruthSidecar,
    /// Synthetic GPS track, present when the scenario has a `gps` section.
    pub gps_fixes: Option<Vec<GeoFix>>,
}

/// Run the simulator for a scenario, including GPS track synthesis for
/// field-style scenarios.
pub fn simulate_scenario(cfg: &ScenarioConfig, seed_override: Option<u64>) -> Result<SimOutput> {
    let sim = cfg.build_sim(seed_override)?;
    let events = simulate_reads(&sim)?;
    let start = sim.trajectory.first_position();
    let truth = TruthSidecar {
        true_start: [start.x, start.y, start.z],
        tag_positions: sim
            .tags
            .iter()
            .map(|t| (t.epc.clone(), [t.position.x, t.position.y, t.position.z]))
            .collect(),
        seed: sim.seed,
    };
    let gps_fixes = if cfg.gps.is_some() {
        Some(synthesize_gps(cfg, sim.seed)?)
    } else {
        None
    };
    Ok(SimOutput { events, truth, gps_fixes })
}

/// Synthesize a noisy GPS track observing the scenario's true trajectory:
/// the GPS antenna rides the lever arm away from the RFID antenna, fixes
/// arrive at `gps.rate_hz`, and each axis gets independent Gaussian noise of
/// `gps.sigma_m`. A final fix at the trajectory end guarantees coverage of
/// every read timestamp.
pub fn synthesize_gps(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<GeoFix>> {
    let gps = cfg
        .gps
        .as_ref()
        .ok_or_else(|| Error::Config("scenario has no gps section".into()))?;
    let traj = cfg.build_trajectory()?;
    let arm = cfg.lever_arm()?;
    let origin = cfg.origin_fix()?;
    let offset = arm.world_offset();

    let mut times: Vec<f64> = Vec::new();
    let n = ((traj.span() * gps.rate_hz) + 1e-9).floor() as u64;
    for k in 0..=n {
        times.push(traj.start_time() + k as f64 / gps.rate_hz);
    }
    if *times.last().unwrap() < traj.end_time() {
        times.push(traj.end_time());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ScenarioConfig::gps_noise_seed(seed));
    let normal = Normal::new(0.0, gps.sigma_m.max(f64::MIN_POSITIVE)).expect("sigma validated");
    let mut fixes = Vec::with_capacity(times.len());
    for t in times {
        let rfid = traj.position_at(t)?;
        let gps_true = rfid - offset;
        let noisy = if gps.sigma_m > 0.0 {
            Vec3::new(
                gps_true.x + normal.sample(&mut rng),
                gps_true.y + normal.sample(&mut rng),
                gps_true.z + normal.sample(&mut rng),
            )
        } else {
            gps_true
        };
        fixes.push(local_to_geo(noisy, t, &origin));
    }
    Ok(fixes)
}

/// Rebuild the RFID antenna trajectory from parsed GPS fixes: project about
/// the scenario origin, then apply the lever arm (heading either configured
/// or derived from the track).
pub fn trajectory_from_gps(cfg: &ScenarioConfig, fixes: &[GeoFix]) -> Result<Trajectory> {
    let gps = cfg
        .gps
        .as_ref()
        .ok_or_else(|| Error::Config("scenario has no gps section".into()))?;
    let origin = cfg.origin_fix()?;
    let gps_traj = geo_to_local(fixes, &origin)?;
    let arm = if gps.heading_from_track {
        let heading = crate::geometry::heading_from_track(&gps_traj, 0.5)?;
        LeverArm::new(
            Vec3::new(gps.lever_arm.offset[0], gps.lever_arm.offset[1], gps.lever_arm.offset[2]),
            heading,
        )?
    } else {
        cfg.lever_arm()?
    };
    Ok(apply_lever_arm(&gps_traj, &arm))
}

/// Files written by [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateArtifacts {
    pub log_path: PathBuf,
    pub truth_path: PathBuf,
    pub gps_path: Option<PathBuf>,
    pub events_written: usize,
}

/// Simulate a scenario and write `reads.csv`, `reads.truth.json`, and (for
/// GPS scenarios) `gps.csv` under `out_dir`.
pub fn cmd_simulate(
    cfg: &ScenarioConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> Result<SimulateArtifacts> {
    let out = simulate_scenario(cfg, seed_override)?;
    fs::create_dir_all(out_dir)?;

    let log_path = out_dir.join("reads.csv");
    let mut w = BufWriter::new(fs::File::create(&log_path)?);
    write_read_log(&out.events, &mut w)?;
    w.flush()?;

    let truth_path = sidecar_path(&log_path);
    let mut json = serde_json::to_string_pretty(&out.truth).expect("sidecar serializes");
    json.push('\n');
    fs::write(&truth_path, json)?;

    let gps_path = match &out.gps_fixes {
        Some(fixes) => {
            let p = out_dir.join("gps.csv");
            let mut w = BufWriter::new(fs::File::create(&p)?);
            write_gps_log(fixes, &mut w)?;
            w.flush()?;
            Some(p)
        }
        None => None,
    };

    Ok(SimulateArtifacts { log_path, truth_path, gps_path, events_written: out.events.len() })
}

// ---------------------------------------------------------------------------
// Estimation pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    pub map_format: MapFormat,
    /// Replace the resolution of every searched grid axis.
    pub grid_resolution_m: Option<f64>,
    pub prior_override: Option<SidePrior>,
    /// Skip and count malformed log rows instead of failing.
    pub lenient: bool,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            map_format: MapFormat::Csv,
            grid_resolution_m: None,
            prior_override: None,
            lenient: false,
        }
    }
}

/// The serialized result of an estimate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimate: EstimateResult,
    /// Euclidean error against the sidecar ground truth, when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_start: Option<[f64; 3]>,
    pub reads_total: usize,
    pub tags_used: Vec<String>,
    pub grid_cells: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped_rows: Option<usize>,
}

/// Apply a resolution override to every searched axis of the scenario grid.
pub fn override_grid_resolution(cfg: &mut ScenarioConfig, resolution_m: f64) {
    for axis in [&mut cfg.grid.x, &mut cfg.grid.y, &mut cfg.grid.z] {
        if axis.min.is_some() && axis.max.is_some() {
            axis.resolution_m = Some(resolution_m);
        }
    }
}

/// Core estimation: score the grid against the given events and antenna
/// trajectory, resolve peaks, and decompose misalignment.
///
/// Returns the report and the exported map (the fused fine map, or the
/// coarse map when the two-pass mode handled refinement).
pub fn estimate_events(
    cfg: &ScenarioConfig,
    trajectory: &Trajectory,
    events: &[ReadEvent],
    truth: Option<&TruthSidecar>,
    opts: &EstimateOptions,
) -> Result<(EstimateReport, LikelihoodMap)> {
    let radio = cfg.radio()?;
    let mut cfg_grid = cfg.clone();
    if let Some(res) = opts.grid_resolution_m {
        override_grid_resolution(&mut cfg_grid, res);
    }
    let grid = cfg_grid.grid_spec()?;
    grid.validate()?;
    let prior = opts.prior_override.unwrap_or(cfg.side_prior);
    let motion = MotionModel::from_trajectory(trajectory);

    // Group events by tag, keeping the scenario's tag order.
    let mut by_tag: BTreeMap<&str, Vec<ReadEvent>> = BTreeMap::new();
    for e in events {
        by_tag.entry(e.epc.as_str()).or_default().push(e.clone());
    }
    for epc in by_tag.keys() {
        if !cfg.tags.iter().any(|t| t.epc == *epc) {
            return Err(Error::Format(format!(
                "log epc '{epc}' does not appear in the scenario"
            )));
        }
    }

    let mut used: Vec<(&crate::logio::TagSection, Vec<ReadEvent>)> = Vec::new();
    let mut per_tag_read_counts = BTreeMap::new();
    for tag in &cfg.tags {
        if let Some(reads) = by_tag.remove(tag.epc.as_str()) {
            per_tag_read_counts.insert(tag.epc.clone(), reads.len());
            if reads.len() >= 2 {
                used.push((tag, reads));
            }
        }
    }
    if used.is_empty() {
        return Err(Error::InsufficientData(
            "no tag has the two or more reads a map needs".into(),
        ));
    }

    let compute_fused = |g: &GridSpec| -> Result<LikelihoodMap> {
        let maps = used
            .iter()
            .map(|(tag, reads)| {
                let pos = Vec3::new(tag.position[0], tag.position[1], tag.position[2]);
                compute_likelihood_map(reads, &motion, pos, &radio, g)
            })
            .collect::<Result<Vec<_>>>()?;
        fuse_tag_maps(&maps)
    };
    // Coarse stage of the two-pass mode: block-incoherent envelope with
    // blocks spanning about a quarter wavelength of motion, smooth enough
    // to sample on a centimeter lattice.
    let (_, t_end) = motion.time_range();
    let aperture = motion.displacement(t_end).map(|d| d.norm()).unwrap_or(0.0);
    let n_blocks = ((4.0 * aperture / radio.wavelength_m()).ceil() as usize).max(1);
    let compute_fused_blocks = |g: &GridSpec| -> Result<LikelihoodMap> {
        let maps = used
            .iter()
            .map(|(tag, reads)| {
                let pos = Vec3::new(tag.position[0], tag.position[1], tag.position[2]);
                let blocks = n_blocks.min(reads.len() / 4).max(1);
                compute_block_likelihood_map(reads, &motion, pos, &radio, g, blocks)
            })
            .collect::<Result<Vec<_>>>()?;
        fuse_tag_maps(&maps)
    };

    let est = &cfg.estimation;
    let (peaks, export_map) = if est.two_pass {
        let peaks = refine_peaks(
            compute_fused,
            compute_fused_blocks,
            &grid,
            est.coarse_resolution_m,
            est.refine_radius_m,
            PEAK_SEARCH_COUNT,
            est.peak_min_separation_m,
        )?;
        let coarse = {
            let mut c = cfg_grid.clone();
            override_grid_resolution(&mut c, est.coarse_resolution_m);
            compute_fused_blocks(&c.grid_spec()?)?
        };
        (peaks, coarse)
    } else {
        let fused = compute_fused(&grid)?;
        (find_peaks(&fused, PEAK_SEARCH_COUNT, est.peak_min_separation_m), fused)
    };

    // Any tag position works for the mirror-side test; they share the motion line side convention.
    let tag0 = &used[0].0.position;
    let mut estimate = resolve_estimate(&peaks, prior, &motion, Vec3::new(tag0[0], tag0[1], tag0[2]))?;
    estimate.per_tag_read_counts = per_tag_read_counts;
    if !estimate.ambiguous {
        let (lat, vert) = misalignment_report(&estimate, &cfg.coil_frame())?;
        estimate.lateral_offset_m = Some(lat);
        estimate.vertical_offset_m = Some(vert);
    }

    let (error_m, true_start) = match truth {
        Some(t) => {
            let ts = Vec3::new(t.true_start[0], t.true_start[1], t.true_start[2]);
            (Some(distance(estimate.best, ts)), Some(t.true_start))
        }
        None => (None, None),
    };

    let report = EstimateReport {
        estimate,
        error_m,
        true_start,
        reads_total: events.len(),
        tags_used: used.iter().map(|(t, _)| t.epc.clone()).collect(),
        grid_cells: grid.n_cells(),
        skipped_rows: None,
    };
    Ok((report, export_map))
}

/// Files written by [`cmd_estimate`] / [`cmd_replay`].
#[derive(Debug, Clone)]
pub struct EstimateArtifacts {
    pub report: EstimateReport,
    pub result_path: PathBuf,
    pub map_paths: Vec<PathBuf>,
}

fn read_log_file(log_path: &Path, lenient: bool) -> Result<(Vec<ReadEvent>, Option<usize>)> {
    let file = BufReader::new(fs::File::open(log_path)?);
    if lenient {
        let (events, skipped) = parse_read_log_lenient(file)?;
        Ok((events, Some(skipped)))
    } else {
        Ok((parse_read_log(file)?, None))
    }
}

fn read_sidecar(log_path: &Path) -> Result<Option<TruthSidecar>> {
    let path = sidecar_path(log_path);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    let truth: TruthSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("sidecar {}: {e}", path.display())))?;
    Ok(Some(truth))
}

fn write_outputs(
    report: EstimateReport,
    map: &LikelihoodMap,
    out_dir: &Path,
    format: MapFormat,
) -> Result<EstimateArtifacts> {
    fs::create_dir_all(out_dir)?;
    let mut map_paths = Vec::new();
    let (_, _, nz) = map.grid.counts();
    if map.grid.z.is_search() {
        for iz in 0..nz {
            let slice = map.slice_z(iz)?;
            let p = out_dir.join(format!("map_z{iz:03}.{}", format.extension()));
            let mut w = BufWriter::new(fs::File::create(&p)?);
            export_map(&slice, format, &mut w)?;
            w.flush()?;
            map_paths.push(p);
        }
    } else {
        let p = out_dir.join(format!("map.{}", format.extension()));
        let mut w = BufWriter::new(fs::File::create(&p)?);
        export_map(map, format, &mut w)?;
        w.flush()?;
        map_paths.push(p);
    }

    let result_path = out_dir.join("estimate.json");
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    fs::write(&result_path, json)?;
    Ok(EstimateArtifacts { report, result_path, map_paths })
}

/// Estimate from a read log using the scenario's own (known) trajectory.
pub fn cmd_estimate(
    cfg: &ScenarioConfig,
    log_path: &Path,
    out_dir: &Path,
    opts: &EstimateOptions,
) -> Result<EstimateArtifacts> {
    let (events, skipped) = read_log_file(log_path, opts.lenient)?;
    let truth = read_sidecar(log_path)?;
    let trajectory = cfg.build_trajectory()?;
    let (mut report, map) = estimate_events(cfg, &trajectory, &events, truth.as_ref(), opts)?;
    report.skipped_rows = skipped;
    write_outputs(report, &map, out_dir, opts.map_format)
}

/// Estimate from a read log using a GPS-derived trajectory.
pub fn cmd_replay(
    cfg: &ScenarioConfig,
    gps_path: &Path,
    log_path: &Path,
    out_dir: &Path,
    opts: &EstimateOptions,
) -> Result<EstimateArtifacts> {
    let (events, skipped) = read_log_file(log_path, opts.lenient)?;
    let truth = read_sidecar(log_path)?;
    let fixes = parse_gps_log(BufReader::new(fs::File::open(gps_path)?))?;
    let trajectory = trajectory_from_gps(cfg, &fixes)?;
    if let (Some(first), Some(last)) = (events.first(), events.last()) {
        if first.t_s < trajectory.start_time() || last.t_s > trajectory.end_time() {
            return Err(Error::Range(format!(
                "GPS track [{}, {}] does not cover read timestamps [{}, {}]",
                trajectory.start_time(),
                trajectory.end_time(),
                first.t_s,
                last.t_s
            )));
        }
    }
    let (mut report, map) = estimate_events(cfg, &trajectory, &events, truth.as_ref(), opts)?;
    report.skipped_rows = skipped;
    write_outputs(report, &map, out_dir, opts.map_format)
}

// ---------------------------------------------------------------------------
// Parameter sweeps
// ---------------------------------------------------------------------------

/// Which scenario knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    PhaseSigma,
    ReadRate,
    GridResolution,
    Speed,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::PhaseSigma => "phase_sigma",
            SweepParam::ReadRate => "read_rate",
            SweepParam::GridResolution => "grid_resolution",
            SweepParam::Speed => "speed",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "phase_sigma" => Ok(SweepParam::PhaseSigma),
            "read_rate" => Ok(SweepParam::ReadRate),
            "grid_resolution" => Ok(SweepParam::GridResolution),
            "speed" => Ok(SweepParam::Speed),
            other => Err(Error::Config(format!(
                "unknown sweep parameter '{other}' (expected phase_sigma, read_rate, grid_resolution, or speed)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub scenario: ScenarioConfig,
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub trials: u32,
    pub seed_base: u64,
}

/// Error statistics for one swept value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub trials: u32,
    pub median_m: f64,
    pub mean_m: f64,
    pub p90_m: f64,
    pub max_m: f64,
}

pub const SWEEP_CSV_HEADER: &str = "param,value,trials,median_m,mean_m,p90_m,max_m";

fn apply_sweep_value(cfg: &ScenarioConfig, param: SweepParam, value: f64) -> Result<ScenarioConfig> {
    let mut cfg = cfg.clone();
    match param {
        SweepParam::PhaseSigma => {
            if !(value >= 0.0) {
                return Err(Error::Config(format!("phase_sigma {value} must be >= 0")));
            }
            cfg.noise.phase_sigma_deg = value;
        }
        SweepParam::ReadRate => {
            if !(value > 0.0) {
                return Err(Error::Config(format!("read_rate {value} must be > 0")));
            }
            cfg.read_rate_hz = value;
        }
        SweepParam::GridResolution => {
            if !(value > 0.0) {
                return Err(Error::Config(format!("grid_resolution {value} must be > 0")));
            }
            override_grid_resolution(&mut cfg, value);
        }
        SweepParam::Speed => {
            if !(value > 0.0) {
                return Err(Error::Config(format!("speed {value} must be > 0")));
            }
            // Hold the path fixed and rescale time, so faster passes see
            // fewer reads over the same aperture.
            match &mut cfg.trajectory {
                crate::logio::TrajectorySection::Stepped { step, dwell_s, .. } => {
                    let step_len = Vec3::new(step[0], step[1], step[2]).norm();
                    if step_len == 0.0 {
                        return Err(Error::Config("cannot sweep speed of a zero step".into()));
                    }
                    *dwell_s = step_len / value;
                }
                crate::logio::TrajectorySection::Line { velocity, duration_s, .. } => {
                    let v = Vec3::new(velocity[0], velocity[1], velocity[2]);
                    let old = v.norm();
                    if old == 0.0 {
                        return Err(Error::Config("cannot sweep speed of zero velocity".into()));
                    }
                    let k = value / old;
                    *velocity = [v.x * k, v.y * k, v.z * k];
                    *duration_s *= old / value;
                }
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn with_context(e: Error, ctx: &str) -> Error {
    match e {
        Error::Argument(m) => Error::Argument(format!("{ctx}: {m}")),
        Error::Range(m) => Error::Range(format!("{ctx}: {m}")),
        Error::Config(m) => Error::Config(format!("{ctx}: {m}")),
        Error::Format(m) => Error::Format(format!("{ctx}: {m}")),
        Error::InsufficientData(m) => Error::InsufficientData(format!("{ctx}: {m}")),
        Error::PriorViolation(m) => Error::PriorViolation(format!("{ctx}: {m}")),
        Error::Ambiguous(m) => Error::Ambiguous(format!("{ctx}: {m}")),
        Error::Parse { line, message } => {
            Error::Parse { line, message: format!("{ctx}: {message}") }
        }
        Error::Io(e) => Error::Io(e),
    }
}

/// One simulate + estimate trial; returns the start-position error in meters.
fn run_trial(cfg: &ScenarioConfig, seed: u64) -> Result<f64> {
    let sim_out = simulate_scenario(cfg, Some(seed))?;
    let trajectory = match &sim_out.gps_fixes {
        Some(fixes) => trajectory_from_gps(cfg, fixes)?,
        None => cfg.build_trajectory()?,
    };
    let opts = EstimateOptions::default();
    let (report, _) =
        estimate_events(cfg, &trajectory, &sim_out.events, Some(&sim_out.truth), &opts)?;
    report
        .error_m
        .ok_or_else(|| Error::InsufficientData("trial produced no error".into()))
}

/// Run `trials` seeded simulate+estimate rounds per swept value and collect
/// error statistics. Trials are independent; seeds are assigned up front so
/// parallel execution cannot change the result.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    if sweep.trials == 0 {
        return Err(Error::Config("sweep needs trials >= 1".into()));
    }
    if sweep.values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut values = sweep.values.clone();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mut rows = Vec::with_capacity(values.len());
    for &value in &values {
        let cfg = apply_sweep_value(&sweep.scenario, sweep.param, value)
            .map_err(|e| with_context(e, &format!("sweep {}={value}", sweep.param.name())))?;
        let results: Vec<Result<f64>> = (0..sweep.trials)
            .into_par_iter()
            .map(|trial| run_trial(&cfg, sweep.seed_base + trial as u64))
            .collect();
        let mut errors = Vec::with_capacity(results.len());
        for (trial, r) in results.into_iter().enumerate() {
            let seed = sweep.seed_base + trial as u64;
            errors.push(r.map_err(|e| {
                with_context(
                    e,
                    &format!(
                        "sweep {}={value} trial {trial} (seed {seed})",
                        sweep.param.name()
                    ),
                )
            })?);
        }
        rows.push(stats_row(sweep.param.name(), value, &errors));
    }
    Ok(rows)
}

fn stats_row(param: &str, value: f64, errors: &[f64]) -> SweepRow {
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let p90 = sorted[((0.9 * n as f64).ceil() as usize).clamp(1, n) - 1];
    let mean = sorted.iter().sum::<f64>() / n as f64;
    SweepRow {
        param: param.to_string(),
        value,
        trials: n as u32,
        median_m: median,
        mean_m: mean,
        p90_m: p90,
        max_m: sorted[n - 1],
    }
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: &mut W) -> Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.6},{},{:.6},{:.6},{:.6},{:.6}",
            r.param, r.value, r.trials, r.median_m, r.mean_m, r.p90_m, r.max_m
        )?;
    }
    Ok(())
}

/// Run a sweep and write `sweep.csv` under `out_dir`.
pub fn cmd_sweep(sweep: &SweepConfig, out_dir: &Path) -> Result<(Vec<SweepRow>, PathBuf)> {
    let rows = run_sweep(sweep)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("sweep.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    write_sweep_csv(&rows, &mut w)?;
    w.flush()?;
    Ok((rows, path))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
