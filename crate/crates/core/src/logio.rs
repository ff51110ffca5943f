//! File formats: reader logs, GPS tracks, scenario configs, and likelihood
//! map exports. Writers are deterministic byte-for-byte for equal inputs.
//!
//! - read log: CSV `epc,t_s,phase_deg,rssi_dbm,channel_mhz`, 6 decimals, LF
//! - GPS track: CSV `t_s,lat_deg,lon_deg,alt_m`, strictly increasing time
//! - scenario: JSON, unknown keys rejected, documented defaults filled in
//! - map export: CSV `x_m,y_m,likelihood` (row-major) or 16-bit binary PGM

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{stepped_trajectory, GeoFix, LeverArm, Trajectory, Vec3};
use crate::mle::{Axis, CoilFrame, GridSpec, LikelihoodMap, SidePrior, DEFAULT_CELL_BUDGET};
use crate::phase::{mix_seed, FoldedPhaseDeg, NoiseModel, PhaseOffsets, RadioConfig};
use crate::sim::{MultipathModel, ReadEvent, RssiParams, SimScenario, TagSpec};

pub const READ_LOG_HEADER: &str = "epc,t_s,phase_deg,rssi_dbm,channel_mhz";
pub const GPS_LOG_HEADER: &str = "t_s,lat_deg,lon_deg,alt_m";
pub const MAP_CSV_HEADER: &str = "x_m,y_m,likelihood";

// RNG stream tags for values derived from the scenario seed.
const STREAM_TAG_OFFSET: u64 = 0x5441_474F; // "TAGO"
const STREAM_NOISE: u64 = 0x4E4F_4953; // "NOIS"
const STREAM_GPS: u64 = 0x4750_534E; // "GPSN"

// ---------------------------------------------------------------------------
// Read logs
// ---------------------------------------------------------------------------

/// Write events as CSV. Events must already be time-ordered.
pub fn write_read_log<W: Write>(events: &[ReadEvent], w: &mut W) -> Result<()> {
    for pair in events.windows(2) {
        if pair[1].t_s < pair[0].t_s {
            return Err(Error::Argument("read log events must be time-ordered".into()));
        }
    }
    writeln!(w, "{READ_LOG_HEADER}")?;
    for e in events {
        // Keep the rounded value inside [0, 180) for the parser.
        let phase = e.phase.value().min(179.999999);
        writeln!(
            w,
            "{},{:.6},{:.6},{:.6},{:.6}",
            e.epc,
            e.t_s,
            phase,
            e.rssi_dbm,
            e.channel_hz / 1e6
        )?;
    }
    Ok(())
}

/// Strict parse: any malformed row is an error naming its 1-based line.
pub fn parse_read_log<R: BufRead>(r: R) -> Result<Vec<ReadEvent>> {
    let (events, skipped) = parse_read_log_inner(r, false)?;
    debug_assert_eq!(skipped, 0);
    Ok(events)
}

/// Lenient parse for real-world logs: malformed rows are skipped and counted
/// instead of failing the load. The header must still match.
pub fn parse_read_log_lenient<R: BufRead>(r: R) -> Result<(Vec<ReadEvent>, usize)> {
    parse_read_log_inner(r, true)
}

fn parse_read_log_inner<R: BufRead>(r: R, lenient: bool) -> Result<(Vec<ReadEvent>, usize)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty read log: missing header".into()))?;
    if header.trim_end() != READ_LOG_HEADER {
        return Err(Error::Format(format!(
            "read log header mismatch: expected '{READ_LOG_HEADER}', got '{header}'"
        )));
    }

    let mut events = Vec::new();
    let mut skipped = 0usize;
    let mut prev_t = f64::NEG_INFINITY;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2; // 1-based, after the header
        let line = line?;
        if line.is_empty() {
            continue;
        }
        match parse_read_row(&line, line_no, prev_t) {
            Ok(e) => {
                prev_t = e.t_s;
                events.push(e);
            }
            Err(err) if lenient => {
                let _ = err;
                skipped += 1;
            }
            Err(err) => return Err(err),
        }
    }
    Ok((events, skipped))
}

fn parse_read_row(line: &str, line_no: usize, prev_t: f64) -> Result<ReadEvent> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 5 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("expected 5 fields, got {}", fields.len()),
        });
    }
    let epc = fields[0].to_string();
    if epc.is_empty() {
        return Err(Error::Parse { line: line_no, message: "field epc: empty".into() });
    }
    let t_s = parse_f64(fields[1], "t_s", line_no)?;
    let phase_deg = parse_f64(fields[2], "phase_deg", line_no)?;
    let rssi_dbm = parse_f64(fields[3], "rssi_dbm", line_no)?;
    let channel_mhz = parse_f64(fields[4], "channel_mhz", line_no)?;
    let phase = FoldedPhaseDeg::new(phase_deg).map_err(|_| Error::Parse {
        line: line_no,
        message: format!("field phase_deg: {phase_deg} outside [0, 180)"),
    })?;
    if t_s < prev_t {
        return Err(Error::Parse {
            line: line_no,
            message: format!("field t_s: {t_s} decreases (previous {prev_t})"),
        });
    }
    Ok(ReadEvent { epc, t_s, phase, rssi_dbm, channel_hz: channel_mhz * 1e6 })
}

fn parse_f64(s: &str, field: &str, line_no: usize) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("field {field}: '{s}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            message: format!("field {field}: non-finite value"),
        });
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// GPS tracks
// ---------------------------------------------------------------------------

/// Write GPS fixes as CSV. Latitude/longitude carry 9 decimals (about 0.1 mm
/// of ground distance) so centimeter geometry survives the round trip.
pub fn write_gps_log<W: Write>(fixes: &[GeoFix], w: &mut W) -> Result<()> {
    writeln!(w, "{GPS_LOG_HEADER}")?;
    for f in fixes {
        writeln!(w, "{:.6},{:.9},{:.9},{:.6}", f.t, f.lat_deg, f.lon_deg, f.alt_m)?;
    }
    Ok(())
}

pub fn parse_gps_log<R: BufRead>(r: R) -> Result<Vec<GeoFix>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty GPS log: missing header".into()))?;
    if header.trim_end() != GPS_LOG_HEADER {
        return Err(Error::Format(format!(
            "GPS log header mismatch: expected '{GPS_LOG_HEADER}', got '{header}'"
        )));
    }
    let mut fixes: Vec<GeoFix> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let t = parse_f64(fields[0], "t_s", line_no)?;
        let lat = parse_f64(fields[1], "lat_deg", line_no)?;
        let lon = parse_f64(fields[2], "lon_deg", line_no)?;
        let alt = parse_f64(fields[3], "alt_m", line_no)?;
        let fix = GeoFix::new(t, lat, lon, alt).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if let Some(prev) = fixes.last() {
            if fix.t <= prev.t {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "field t_s: {} not strictly increasing (previous {})",
                        fix.t, prev.t
                    ),
                });
            }
        }
        fixes.push(fix);
    }
    Ok(fixes)
}

// ---------------------------------------------------------------------------
// Scenario configuration
// ---------------------------------------------------------------------------

/// A full end-to-end scenario: radio, tags, motion, noise, grid, priors.
/// Every field beyond `tags` and `trajectory` has a documented default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub radio: RadioSection,
    pub tags: Vec<TagSection>,
    pub trajectory: TrajectorySection,
    #[serde(default = "default_read_rate")]
    pub read_rate_hz: f64,
    #[serde(default = "default_max_range")]
    pub max_range_m: f64,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub miss_probability: f64,
    #[serde(default)]
    pub multipath: MultipathModel,
    #[serde(default)]
    pub rssi: RssiParams,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "default_side_prior")]
    pub side_prior: SidePrior,
    #[serde(default)]
    pub coil: CoilSection,
    #[serde(default)]
    pub estimation: EstimationSection,
    /// GPS ingestion/synthesis parameters; present for field-style scenarios.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gps: Option<GpsSection>,
}

fn default_read_rate() -> f64 {
    100.0
}
fn default_max_range() -> f64 {
    5.0
}
fn default_side_prior() -> SidePrior {
    SidePrior::None
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioSection {
    pub frequency_hz: f64,
    pub tx_power_dbm: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        RadioSection { frequency_hz: 910e6, tx_power_dbm: 25.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagSection {
    pub epc: String,
    pub position: [f64; 3],
    /// Lumped per-tag phase offset in radians; omitted means "draw a fresh
    /// uniform offset from the run seed", which is the realistic setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_offset_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySection {
    /// Stop-and-dwell motion along a fixed step vector (the lab track).
    Stepped { start: [f64; 3], step: [f64; 3], dwell_s: f64, n_steps: usize },
    /// Constant-velocity pass sampled at `sample_dt_s` (the field drive-by).
    Line {
        start: [f64; 3],
        velocity: [f64; 3],
        duration_s: f64,
        #[serde(default = "default_sample_dt")]
        sample_dt_s: f64,
    },
}

fn default_sample_dt() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub phase_sigma_deg: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { phase_sigma_deg: 10.0 }
    }
}

/// One grid axis in config form; either `{min, max, resolution_m}` for a
/// searched axis or `{fixed}` for a pinned one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<f64>,
}

impl AxisSection {
    fn to_axis(self, name: &str, default_resolution: f64) -> Result<Axis> {
        match (self.min, self.max, self.fixed) {
            (Some(min), Some(max), None) => Ok(Axis::Search {
                min,
                max,
                resolution: self.resolution_m.unwrap_or(default_resolution),
            }),
            (None, None, Some(v)) => {
                if self.resolution_m.is_some() {
                    return Err(Error::Config(format!(
                        "grid.{name}: 'resolution_m' does not apply to a fixed axis"
                    )));
                }
                Ok(Axis::Fixed(v))
            }
            _ => Err(Error::Config(format!(
                "grid.{name}: give either 'min' and 'max' or 'fixed'"
            ))),
        }
    }

    fn search(min: f64, max: f64, resolution_m: f64) -> Self {
        AxisSection { min: Some(min), max: Some(max), resolution_m: Some(resolution_m), fixed: None }
    }

    fn fixed(v: f64) -> Self {
        AxisSection { min: None, max: None, resolution_m: None, fixed: Some(v) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x: AxisSection,
    pub y: AxisSection,
    pub z: AxisSection,
    #[serde(default = "default_cell_budget")]
    pub cell_budget: usize,
}

fn default_cell_budget() -> usize {
    DEFAULT_CELL_BUDGET
}

impl Default for GridSection {
    /// 2.5 mm planar search, +-0.75 m along-track, one-sided cross-track.
    fn default() -> Self {
        GridSection {
            x: AxisSection::search(-0.75, 0.75, 0.0025),
            y: AxisSection::search(0.05, 0.65, 0.0025),
            z: AxisSection::fixed(0.0),
            cell_budget: DEFAULT_CELL_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilSection {
    pub center: [f64; 3],
    pub lateral_axis: [f64; 3],
    pub vertical_axis: [f64; 3],
}

impl Default for CoilSection {
    fn default() -> Self {
        CoilSection {
            center: [0.0, 0.0, 0.0],
            lateral_axis: [0.0, 1.0, 0.0],
            vertical_axis: [0.0, 0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSection {
    /// Minimum distance between reported peaks.
    pub peak_min_separation_m: f64,
    /// Enable the coarse-to-fine two-pass search.
    pub two_pass: bool,
    pub coarse_resolution_m: f64,
    pub refine_radius_m: f64,
}

impl Default for EstimationSection {
    fn default() -> Self {
        EstimationSection {
            peak_min_separation_m: 0.05,
            two_pass: false,
            coarse_resolution_m: 0.025,
            refine_radius_m: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpsSection {
    #[serde(default = "default_gps_rate")]
    pub rate_hz: f64,
    /// Per-axis Gaussian position noise used when synthesizing tracks.
    #[serde(default = "default_gps_sigma")]
    pub sigma_m: f64,
    pub origin: OriginSection,
    pub lever_arm: LeverArmSection,
    /// Derive heading from the track instead of `lever_arm.heading_rad`.
    #[serde(default)]
    pub heading_from_track: bool,
}

fn default_gps_rate() -> f64 {
    10.0
}
fn default_gps_sigma() -> f64 {
    0.02
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OriginSection {
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeverArmSection {
    pub offset: [f64; 3],
    #[serde(default)]
    pub heading_rad: f64,
}

/// Parse and validate a scenario JSON document.
pub fn load_scenario<R: std::io::Read>(r: R) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        serde_json::from_reader(r).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scenario_str(s: &str) -> Result<ScenarioConfig> {
    load_scenario(s.as_bytes())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radio.frequency_hz > 0.0) {
            return Err(Error::Config(format!(
                "radio.frequency_hz must be > 0, got {}",
                self.radio.frequency_hz
            )));
        }
        if !(self.read_rate_hz > 0.0) {
            return Err(Error::Config("read_rate_hz must be > 0".into()));
        }
        if !(self.max_range_m > 0.0) {
            return Err(Error::Config("max_range_m must be > 0".into()));
        }
        if !(self.noise.phase_sigma_deg >= 0.0) {
            return Err(Error::Config("noise.phase_sigma_deg must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err(Error::Config("miss_probability must be in [0, 1]".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, t) in self.tags.iter().enumerate() {
            if t.epc.is_empty() || t.epc.len() > 24 {
                return Err(Error::Config(format!(
                    "tags[{i}].epc must be 1..=24 characters"
                )));
            }
            if !t.epc.chars().all(|c| c.is_ascii_hexdigit()) {
                return Err(Error::Config(format!("tags[{i}].epc must be hex")));
            }
            if !seen.insert(t.epc.as_str()) {
                return Err(Error::Config(format!("tags[{i}].epc duplicates '{}'", t.epc)));
            }
            if let Some(off) = t.phase_offset_rad {
                PhaseOffsets::new(off).map_err(|e| {
                    Error::Config(format!("tags[{i}].phase_offset_rad: {e}"))
                })?;
            }
        }
        match &self.trajectory {
            TrajectorySection::Stepped { dwell_s, n_steps, .. } => {
                if *n_steps == 0 {
                    return Err(Error::Config("trajectory.n_steps must be >= 1".into()));
                }
                if !(*dwell_s > 0.0) {
                    return Err(Error::Config("trajectory.dwell_s must be > 0".into()));
                }
            }
            TrajectorySection::Line { duration_s, sample_dt_s, .. } => {
                if !(*duration_s > 0.0) || !(*sample_dt_s > 0.0) {
                    return Err(Error::Config(
                        "trajectory duration_s and sample_dt_s must be > 0".into(),
                    ));
                }
            }
        }
        self.grid_spec()?.validate()?;
        if let Some(gps) = &self.gps {
            if !(gps.rate_hz > 0.0) {
                return Err(Error::Config("gps.rate_hz must be > 0".into()));
            }
            if !(gps.sigma_m >= 0.0) {
                return Err(Error::Config("gps.sigma_m must be >= 0".into()));
            }
            GeoFix::new(0.0, gps.origin.lat_deg, gps.origin.lon_deg, gps.origin.alt_m)
                .map_err(|e| Error::Config(format!("gps.origin: {e}")))?;
            self.lever_arm()?;
        }
        Ok(())
    }

    pub fn radio(&self) -> Result<RadioConfig> {
        RadioConfig::new(self.radio.frequency_hz, self.radio.tx_power_dbm)
    }

    /// The true antenna motion described by the scenario.
    pub fn build_trajectory(&self) -> Result<Trajectory> {
        match &self.trajectory {
            TrajectorySection::Stepped { start, step, dwell_s, n_steps } => stepped_trajectory(
                Vec3::new(start[0], start[1], start[2]),
                Vec3::new(step[0], step[1], step[2]),
                *dwell_s,
                *n_steps,
            ),
            TrajectorySection::Line { start, velocity, duration_s, sample_dt_s } => {
                let n = (duration_s / sample_dt_s + 1e-9).floor() as usize + 1;
                let step = Vec3::new(velocity[0], velocity[1], velocity[2]).scale(*sample_dt_s);
                stepped_trajectory(Vec3::new(start[0], start[1], start[2]), step, *sample_dt_s, n)
            }
        }
    }

    /// Per-tag specs with offsets resolved: explicit values pass through,
    /// omitted ones draw uniform `[0, 2*pi)` keyed by `(seed, tag index)`.
    pub fn build_tags(&self, seed: u64) -> Result<Vec<TagSpec>> {
        self.tags
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let offsets = match t.phase_offset_rad {
                    Some(v) => PhaseOffsets::new(v)?,
                    None => PhaseOffsets::random(seed, STREAM_TAG_OFFSET + i as u64),
                };
                Ok(TagSpec {
                    epc: t.epc.clone(),
                    position: Vec3::new(t.position[0], t.position[1], t.position[2]),
                    offsets,
                })
            })
            .collect()
    }

    /// Assemble the full simulation input; `seed_override` replaces the
    /// scenario seed (the CLI's `--seed`).
    pub fn build_sim(&self, seed_override: Option<u64>) -> Result<SimScenario> {
        let seed = seed_override.unwrap_or(self.seed);
        Ok(SimScenario {
            radio: self.radio()?,
            tags: self.build_tags(seed)?,
            trajectory: self.build_trajectory()?,
            read_rate_hz: self.read_rate_hz,
            max_range_m: self.max_range_m,
            noise: NoiseModel::new(self.noise.phase_sigma_deg, mix_seed(seed, STREAM_NOISE))?,
            seed,
            miss_probability: self.miss_probability,
            rssi: self.rssi,
            multipath: self.multipath,
        })
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec {
            x: self.grid.x.to_axis("x", 0.0025)?,
            y: self.grid.y.to_axis("y", 0.0025)?,
            z: self.grid.z.to_axis("z", 0.005)?,
            cell_budget: self.grid.cell_budget,
        })
    }

    pub fn coil_frame(&self) -> CoilFrame {
        CoilFrame {
            center: Vec3::new(self.coil.center[0], self.coil.center[1], self.coil.center[2]),
            lateral_axis: Vec3::new(
                self.coil.lateral_axis[0],
                self.coil.lateral_axis[1],
                self.coil.lateral_axis[2],
            ),
            vertical_axis: Vec3::new(
                self.coil.vertical_axis[0],
                self.coil.vertical_axis[1],
                self.coil.vertical_axis[2],
            ),
        }
    }

    pub fn lever_arm(&self) -> Result<LeverArm> {
        let gps = self
            .gps
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no gps section".into()))?;
        LeverArm::new(
            Vec3::new(gps.lever_arm.offset[0], gps.lever_arm.offset[1], gps.lever_arm.offset[2]),
            gps.lever_arm.heading_rad,
        )
        .map_err(|e| Error::Config(format!("gps.lever_arm: {e}")))
    }

    pub fn origin_fix(&self) -> Result<GeoFix> {
        let gps = self
            .gps
            .as_ref()
            .ok_or_else(|| Error::Config("scenario has no gps section".into()))?;
        GeoFix::new(0.0, gps.origin.lat_deg, gps.origin.lon_deg, gps.origin.alt_m)
    }

    /// GPS noise stream seed for a run seed.
    pub fn gps_noise_seed(seed: u64) -> u64 {
        mix_seed(seed, STREAM_GPS)
    }

    /// Canonical JSON form (defaults materialized); stable across reloads.
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }
}

// ---------------------------------------------------------------------------
// Map export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Csv,
    Pgm,
}

impl MapFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            MapFormat::Csv => "csv",
            MapFormat::Pgm => "pgm",
        }
    }
}

impl std::str::FromStr for MapFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MapFormat::Csv),
            "pgm" => Ok(MapFormat::Pgm),
            other => Err(Error::Config(format!("unsupported map format '{other}'"))),
        }
    }
}

/// Export a 2D map. 3D maps must be sliced with [`LikelihoodMap::slice_z`]
/// first (the CLI writes one file per slice).
pub fn export_map<W: Write>(map: &LikelihoodMap, format: MapFormat, w: &mut W) -> Result<()> {
    if map.grid.dims() != 2 || map.grid.z.is_search() {
        return Err(Error::Argument(
            "map export is 2D; slice 3D maps along z first".into(),
        ));
    }
    match format {
        MapFormat::Csv => export_map_csv(map, w),
        MapFormat::Pgm => export_map_pgm(map, w),
    }
}

fn export_map_csv<W: Write>(map: &LikelihoodMap, w: &mut W) -> Result<()> {
    writeln!(w, "{MAP_CSV_HEADER}")?;
    let (nx, ny, _) = map.grid.counts();
    for iy in 0..ny {
        for ix in 0..nx {
            let v = map.values[map.grid.linear_index(ix, iy, 0)];
            writeln!(w, "{:.6},{:.6},{:.6}", map.grid.x.value(ix), map.grid.y.value(iy), v)?;
        }
    }
    Ok(())
}

/// 16-bit binary PGM (`P5`, maxval 65535, big-endian), pixel value
/// `round(65535 * L)`, top image row at maximum y.
fn export_map_pgm<W: Write>(map: &LikelihoodMap, w: &mut W) -> Result<()> {
    let (nx, ny, _) = map.grid.counts();
    write!(w, "P5\n{nx} {ny}\n65535\n")?;
    let mut row = Vec::with_capacity(nx * 2);
    for iy in (0..ny).rev() {
        row.clear();
        for ix in 0..nx {
            let v = map.values[map.grid.linear_index(ix, iy, 0)];
            let pixel = (v * 65535.0).round().clamp(0.0, 65535.0) as u16;
            row.extend_from_slice(&pixel.to_be_bytes());
        }
        w.write_all(&row)?;
    }
    Ok(())
}

/// Parse a map CSV back into `(x, y, likelihood)` rows; used by tests and
/// downstream plotting.
pub fn parse_map_csv<R: BufRead>(r: R) -> Result<Vec<(f64, f64, f64)>> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::Format("empty map csv".into()))?;
    if header.trim_end() != MAP_CSV_HEADER {
        return Err(Error::Format(format!(
            "map csv header mismatch: expected '{MAP_CSV_HEADER}', got '{header}'"
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        rows.push((
            parse_f64(fields[0], "x_m", line_no)?,
            parse_f64(fields[1], "y_m", line_no)?,
            parse_f64(fields[2], "likelihood", line_no)?,
        ));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
