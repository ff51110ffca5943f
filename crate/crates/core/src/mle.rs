//! Grid maximum-likelihood estimation of the antenna start position.
//!
//! The search space is a lattice of candidate start positions. For each cell
//! the folded phase series the reader *would* have seen along the known
//! relative motion is predicted, and the cell is scored with the coherent
//! mean phasor of doubled residuals:
//!
//! ```text
//! L = | (1/K) * sum_k exp(i * 2 * (measured_k - predicted_k)) |
//! ```
//!
//! Doubling the residuals cancels the reader's 180-degree fold, and taking
//! a phasor magnitude cancels any constant per-tag phase offset, so the map
//! needs no calibration. Straight-line motion leaves a mirror peak on the
//! far side of the motion line; a side prior resolves it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Trajectory, Vec3};
use crate::phase::{fold_to_reader_deg, round_trip_phase, FoldedPhaseDeg, RadioConfig};
use crate::sim::ReadEvent;

/// Default ceiling on grid size; larger searches are a configuration error
/// rather than a silent coarsening.
pub const DEFAULT_CELL_BUDGET: usize = 4_000_000;

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// One axis of the search lattice: either searched over `[min, max]` at a
/// fixed pitch, or pinned to a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Axis {
    Search { min: f64, max: f64, resolution: f64 },
    Fixed(f64),
}

impl Axis {
    pub fn count(&self) -> usize {
        match *self {
            Axis::Search { min, max, resolution } => {
                ((max - min) / resolution + 1e-9).floor() as usize + 1
            }
            Axis::Fixed(_) => 1,
        }
    }

    pub fn value(&self, index: usize) -> f64 {
        match *self {
            Axis::Search { min, resolution, .. } => min + index as f64 * resolution,
            Axis::Fixed(v) => v,
        }
    }

    pub fn is_search(&self) -> bool {
        matches!(self, Axis::Search { .. })
    }

    fn validate(&self, name: &str) -> Result<()> {
        match *self {
            Axis::Search { min, max, resolution } => {
                if !min.is_finite() || !max.is_finite() || !(min < max) {
                    return Err(Error::Config(format!(
                        "grid axis {name}: need finite min < max, got [{min}, {max}]"
                    )));
                }
                if !(resolution > 0.0) {
                    return Err(Error::Config(format!(
                        "grid axis {name}: resolution must be > 0, got {resolution}"
                    )));
                }
                Ok(())
            }
            Axis::Fixed(v) => {
                if !v.is_finite() {
                    return Err(Error::Config(format!("grid axis {name}: non-finite fixed value")));
                }
                Ok(())
            }
        }
    }
}

/// The searched hypothesis lattice. Two or three axes may be searched; the
/// rest are fixed. Cell centers sit at `min + i * resolution` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: Axis,
    pub y: Axis,
    pub z: Axis,
    pub cell_budget: usize,
}

impl GridSpec {
    pub fn new(x: Axis, y: Axis, z: Axis) -> Self {
        GridSpec { x, y, z, cell_budget: DEFAULT_CELL_BUDGET }
    }

    pub fn validate(&self) -> Result<()> {
        self.x.validate("x")?;
        self.y.validate("y")?;
        self.z.validate("z")?;
        let dims = [self.x, self.y, self.z].iter().filter(|a| a.is_search()).count();
        if !(2..=3).contains(&dims) {
            return Err(Error::Config(format!(
                "grid must search 2 or 3 axes, this one searches {dims}"
            )));
        }
        if self.cell_budget == 0 {
            return Err(Error::Config("cell budget must be >= 1".into()));
        }
        let cells = self.n_cells();
        if cells > self.cell_budget {
            return Err(Error::Config(format!(
                "grid has {cells} cells, over the budget of {}",
                self.cell_budget
            )));
        }
        Ok(())
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        (self.x.count(), self.y.count(), self.z.count())
    }

    pub fn n_cells(&self) -> usize {
        let (nx, ny, nz) = self.counts();
        nx * ny * nz
    }

    /// Number of searched axes (2 or 3 once validated).
    pub fn dims(&self) -> usize {
        [self.x, self.y, self.z].iter().filter(|a| a.is_search()).count()
    }

    /// Linear index layout: x fastest, then y, then z.
    pub fn linear_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        let (nx, ny, _) = self.counts();
        (iz * ny + iy) * nx + ix
    }

    pub fn cell_indices(&self, linear: usize) -> (usize, usize, usize) {
        let (nx, ny, _) = self.counts();
        let ix = linear % nx;
        let iy = (linear / nx) % ny;
        let iz = linear / (nx * ny);
        (ix, iy, iz)
    }

    pub fn cell_center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        Vec3::new(self.x.value(ix), self.y.value(iy), self.z.value(iz))
    }

    pub fn center_of(&self, linear: usize) -> Vec3 {
        let (ix, iy, iz) = self.cell_indices(linear);
        self.cell_center(ix, iy, iz)
    }
}

// ---------------------------------------------------------------------------
// Motion
// ---------------------------------------------------------------------------

/// Relative antenna displacement from its start position, derived from a
/// trajectory by subtracting the first pose. The grid hypothesis is "the
/// antenna started at p0 and then moved by displacement(t)".
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    rebased: Trajectory,
}

impl MotionModel {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let origin = traj.first_position();
        let poses = traj
            .poses()
            .iter()
            .map(|p| crate::geometry::TimedPose { t: p.t, position: p.position - origin })
            .collect();
        MotionModel { rebased: Trajectory::new(poses).expect("rebasing preserves validity") }
    }

    pub fn displacement(&self, t: f64) -> Result<Vec3> {
        self.rebased.position_at(t)
    }

    pub fn time_range(&self) -> (f64, f64) {
        (self.rebased.start_time(), self.rebased.end_time())
    }

    /// Unit vector of the net displacement, or `None` for no net motion.
    pub fn direction(&self) -> Option<Vec3> {
        let net = self.rebased.last_position();
        let n = net.norm();
        if n < 1e-12 {
            None
        } else {
            Some(net.scale(1.0 / n))
        }
    }
}

// ---------------------------------------------------------------------------
// Likelihood map
// ---------------------------------------------------------------------------

/// Per-cell likelihood values in `[0, 1]` over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodMap {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub reads_used: usize,
}

impl LikelihoodMap {
    /// Index and value of the global maximum; ties break to the lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (i, &v) in self.values.iter().enumerate() {
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    /// Extract the 2D slice at z index `iz` from a 3D map.
    pub fn slice_z(&self, iz: usize) -> Result<LikelihoodMap> {
        let (nx, ny, nz) = self.grid.counts();
        if iz >= nz {
            return Err(Error::Argument(format!("z slice {iz} out of {nz}")));
        }
        let mut values = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                values.push(self.values[self.grid.linear_index(ix, iy, iz)]);
            }
        }
        let grid = GridSpec {
            x: self.grid.x,
            y: self.grid.y,
            z: Axis::Fixed(self.grid.z.value(iz)),
            cell_budget: self.grid.cell_budget,
        };
        Ok(LikelihoodMap { grid, values, reads_used: self.reads_used })
    }
}

// ---------------------------------------------------------------------------
// Prediction and scoring
// ---------------------------------------------------------------------------

/// Folded phases a reader at start `p0` would report along the motion,
/// ignoring the per-tag offset (the likelihood cancels it anyway).
pub fn predicted_phase_series(
    p0: Vec3,
    motion: &MotionModel,
    tag_position: Vec3,
    radio: &RadioConfig,
    times: &[f64],
) -> Result<Vec<FoldedPhaseDeg>> {
    let lambda = radio.wavelength_m();
    times
        .iter()
        .map(|&t| {
            let d = distance(p0 + motion.displacement(t)?, tag_position);
            Ok(fold_to_reader_deg(round_trip_phase(d, lambda)?))
        })
        .collect()
}

/// Coherent mean-phasor likelihood of a measured series against a predicted
/// one: `|mean exp(i * 2 * delta_k)|`. Equals 1 exactly when every doubled
/// residual agrees modulo 2*pi, which is why a constant offset scores 1.
pub fn coherent_likelihood(
    measured: &[FoldedPhaseDeg],
    predicted: &[FoldedPhaseDeg],
) -> Result<f64> {
    if measured.is_empty() || measured.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "need equal non-empty series, got {} and {}",
            measured.len(),
            predicted.len()
        )));
    }
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for (m, p) in measured.iter().zip(predicted) {
        let delta = 2.0 * (m.to_radians() - p.to_radians());
        let (s, c) = delta.sin_cos();
        re += c;
        im += s;
    }
    let k = measured.len() as f64;
    Ok(((re * re + im * im).sqrt() / k).clamp(0.0, 1.0))
}

/// Score every grid cell against one tag's reads.
///
/// The inner loop fuses prediction and scoring: the measured doubled phasors
/// are precomputed once, and each cell accumulates
/// `exp(i*2*m_k) * exp(-i * 8*pi*d_k/lambda)` over reads in a fixed order, so
/// the result is independent of how cells are scheduled across threads.
pub fn compute_likelihood_map(
    reads: &[ReadEvent],
    motion: &MotionModel,
    tag_position: Vec3,
    radio: &RadioConfig,
    grid: &GridSpec,
) -> Result<LikelihoodMap> {
    grid.validate()?;
    if reads.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 reads for a likelihood map, got {}",
            reads.len()
        )));
    }
    if let Some(other) = reads.iter().find(|r| r.epc != reads[0].epc) {
        return Err(Error::Argument(format!(
            "map takes reads from one tag; saw '{}' and '{}'",
            reads[0].epc, other.epc
        )));
    }

    // Per-read precomputation shared by all cells.
    let displacements = reads
        .iter()
        .map(|r| motion.displacement(r.t_s))
        .collect::<Result<Vec<_>>>()?;
    let measured: Vec<(f64, f64)> = reads
        .iter()
        .map(|r| (2.0 * r.phase.to_radians()).sin_cos())
        .collect();
    let doubled_wavenumber = 8.0 * std::f64::consts::PI / radio.wavelength_m();
    let k = reads.len() as f64;

    let n = grid.n_cells();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|linear| {
            let p0 = grid.center_of(linear);
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for ((ms, mc), disp) in measured.iter().zip(&displacements) {
                let d = distance(p0 + *disp, tag_position);
                let (ps, pc) = (doubled_wavenumber * d).sin_cos();
                // measured phasor times conjugate of predicted phasor
                re += mc * pc + ms * ps;
                im += ms * pc - mc * ps;
            }
            ((re * re + im * im).sqrt() / k).clamp(0.0, 1.0)
        })
        .collect();

    Ok(LikelihoodMap { grid: *grid, values, reads_used: reads.len() })
}

/// Blockwise-incoherent likelihood: reads are split into `n_blocks`
/// contiguous chunks, each chunk scored coherently, and the chunk scores
/// averaged. Short chunks span little of the aperture, so the fringe
/// structure washes out and the map becomes a smooth envelope with a broad
/// basin around the true start. The coarse stage of the two-pass search uses
/// this; a plain coherent map aliases badly on a coarse lattice.
pub fn compute_block_likelihood_map(
    reads: &[ReadEvent],
    motion: &MotionModel,
    tag_position: Vec3,
    radio: &RadioConfig,
    grid: &GridSpec,
    n_blocks: usize,
) -> Result<LikelihoodMap> {
    grid.validate()?;
    if reads.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 reads for a likelihood map, got {}",
            reads.len()
        )));
    }
    if n_blocks == 0 {
        return Err(Error::Argument("n_blocks must be >= 1".into()));
    }
    let displacements = reads
        .iter()
        .map(|r| motion.displacement(r.t_s))
        .collect::<Result<Vec<_>>>()?;
    let measured: Vec<(f64, f64)> = reads
        .iter()
        .map(|r| (2.0 * r.phase.to_radians()).sin_cos())
        .collect();
    let doubled_wavenumber = 8.0 * std::f64::consts::PI / radio.wavelength_m();

    let n_blocks = n_blocks.min(reads.len());
    let bounds: Vec<(usize, usize)> = (0..n_blocks)
        .map(|b| {
            let lo = b * reads.len() / n_blocks;
            let hi = (b + 1) * reads.len() / n_blocks;
            (lo, hi)
        })
        .filter(|(lo, hi)| hi > lo)
        .collect();

    let n = grid.n_cells();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|linear| {
            let p0 = grid.center_of(linear);
            let mut total = 0.0f64;
            for &(lo, hi) in &bounds {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for k in lo..hi {
                    let (ms, mc) = measured[k];
                    let d = distance(p0 + displacements[k], tag_position);
                    let (ps, pc) = (doubled_wavenumber * d).sin_cos();
                    re += mc * pc + ms * ps;
                    im += ms * pc - mc * ps;
                }
                total += (re * re + im * im).sqrt() / (hi - lo) as f64;
            }
            (total / bounds.len() as f64).clamp(0.0, 1.0)
        })
        .collect();

    Ok(LikelihoodMap { grid: *grid, values, reads_used: reads.len() })
}

/// Pool per-tag maps on an identical grid by per-cell geometric mean
/// (equal-weight log-likelihood pooling).
pub fn fuse_tag_maps(maps: &[LikelihoodMap]) -> Result<LikelihoodMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Argument("need at least one map to fuse".into()))?;
    for m in &maps[1..] {
        if m.grid != first.grid {
            return Err(Error::Argument("fused maps must share one grid".into()));
        }
    }
    if maps.len() == 1 {
        return Ok(first.clone());
    }
    let inv_n = 1.0 / maps.len() as f64;
    let values = (0..first.values.len())
        .map(|i| {
            let mut log_sum = 0.0f64;
            for m in maps {
                let v = m.values[i];
                if v <= 0.0 {
                    return 0.0;
                }
                log_sum += v.ln();
            }
            (log_sum * inv_n).exp().clamp(0.0, 1.0)
        })
        .collect();
    Ok(LikelihoodMap {
        grid: first.grid,
        values,
        reads_used: maps.iter().map(|m| m.reads_used).sum(),
    })
}

// ---------------------------------------------------------------------------
// Peaks
// ---------------------------------------------------------------------------

/// A local maximum of a likelihood map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub position: Vec3,
    pub likelihood: f64,
}

/// Top-k local maxima, highest first, suppressing any candidate closer than
/// `min_separation_m` to an already selected peak. Ties break on cell index,
/// so the result is deterministic; fewer than `k` peaks may come back.
pub fn find_peaks(map: &LikelihoodMap, k: usize, min_separation_m: f64) -> Vec<Peak> {
    let (nx, ny, nz) = map.grid.counts();
    let mut candidates: Vec<(usize, f64)> = Vec::new();

    let neighbor_range = |n: usize, i: usize| {
        let lo = i.saturating_sub(1);
        let hi = (i + 1).min(n - 1);
        lo..=hi
    };

    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                let v = map.values[map.grid.linear_index(ix, iy, iz)];
                let mut is_max = true;
                'scan: for jz in neighbor_range(nz, iz) {
                    for jy in neighbor_range(ny, iy) {
                        for jx in neighbor_range(nx, ix) {
                            if (jx, jy, jz) == (ix, iy, iz) {
                                continue;
                            }
                            if map.values[map.grid.linear_index(jx, jy, jz)] > v {
                                is_max = false;
                                break 'scan;
                            }
                        }
                    }
                }
                if is_max {
                    candidates.push((map.grid.linear_index(ix, iy, iz), v));
                }
            }
        }
    }

    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));

    let mut peaks: Vec<Peak> = Vec::new();
    for (idx, v) in candidates {
        if peaks.len() == k {
            break;
        }
        let pos = map.grid.center_of(idx);
        let too_close = peaks.iter().any(|p| distance(p.position, pos) < min_separation_m);
        if !too_close {
            peaks.push(Peak { position: pos, likelihood: v });
        }
    }
    peaks
}

// ---------------------------------------------------------------------------
// Estimate resolution
// ---------------------------------------------------------------------------

/// External knowledge of which side of the motion line the antenna start
/// occupies, used to discard the mirror peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SidePrior {
    #[serde(rename = "left")]
    LeftOfTag,
    #[serde(rename = "right")]
    RightOfTag,
    #[serde(rename = "none")]
    None,
}

/// Two near-equal peaks with ratio above this and no prior mean the estimate
/// is reported as ambiguous instead of silently picking one.
pub const AMBIGUITY_RATIO: f64 = 0.9;

/// The resolved position estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    /// Selected cell center.
    pub best: Vec3,
    pub best_likelihood: f64,
    /// The competing (mirror) peak, when one exists.
    pub mirror: Option<Vec3>,
    pub mirror_likelihood: Option<f64>,
    /// True when two near-equal peaks could not be told apart.
    pub ambiguous: bool,
    /// Misalignment decomposition in the coil frame; absent while ambiguous.
    pub lateral_offset_m: Option<f64>,
    pub vertical_offset_m: Option<f64>,
    pub per_tag_read_counts: BTreeMap<String, usize>,
}

/// Signed lateral coordinate of `p` relative to the motion line through the
/// tag: positive on the left of the direction of travel.
fn side_of_motion_line(p: Vec3, direction: Vec3, tag_position: Vec3) -> f64 {
    let rel = p - tag_position;
    direction.x * rel.y - direction.y * rel.x
}

/// Pick the final estimate from ranked peaks.
///
/// With a side prior the best peak on that side wins and the top peak on the
/// other side is reported as the mirror. Without a prior, two peaks within
/// [`AMBIGUITY_RATIO`] of each other make the estimate ambiguous.
pub fn resolve_estimate(
    peaks: &[Peak],
    prior: SidePrior,
    motion: &MotionModel,
    tag_position: Vec3,
) -> Result<EstimateResult> {
    let top = peaks
        .first()
        .ok_or_else(|| Error::InsufficientData("no peaks in likelihood map".into()))?;

    let mut result = EstimateResult {
        best: top.position,
        best_likelihood: top.likelihood,
        mirror: None,
        mirror_likelihood: None,
        ambiguous: false,
        lateral_offset_m: None,
        vertical_offset_m: None,
        per_tag_read_counts: BTreeMap::new(),
    };

    match prior {
        SidePrior::None => {
            if let Some(second) = peaks.get(1) {
                result.mirror = Some(second.position);
                result.mirror_likelihood = Some(second.likelihood);
                let near_equal = top.likelihood <= 0.0
                    || second.likelihood > AMBIGUITY_RATIO * top.likelihood;
                result.ambiguous = near_equal;
            }
            Ok(result)
        }
        SidePrior::LeftOfTag | SidePrior::RightOfTag => {
            let direction = motion.direction().ok_or_else(|| {
                Error::Argument("no net motion; a side prior needs a motion line".into())
            })?;
            if direction.x.hypot(direction.y) < 1e-12 {
                return Err(Error::Argument(
                    "motion is vertical; a side prior needs a horizontal motion line".into(),
                ));
            }
            let on_prior_side = |p: &Peak| {
                let s = side_of_motion_line(p.position, direction, tag_position);
                match prior {
                    SidePrior::LeftOfTag => s >= 0.0,
                    SidePrior::RightOfTag => s <= 0.0,
                    SidePrior::None => unreachable!(),
                }
            };
            let best = peaks
                .iter()
                .find(|p| on_prior_side(p))
                .ok_or_else(|| {
                    Error::PriorViolation(format!(
                        "no peak on the {prior:?} side of the motion line"
                    ))
                })?;
            let mirror = peaks.iter().find(|p| !on_prior_side(p));
            result.best = best.position;
            result.best_likelihood = best.likelihood;
            result.mirror = mirror.map(|p| p.position);
            result.mirror_likelihood = mirror.map(|p| p.likelihood);
            result.ambiguous = false;
            Ok(result)
        }
    }
}

// ---------------------------------------------------------------------------
// Misalignment
// ---------------------------------------------------------------------------

/// Reference frame of the charging coil: where an aligned antenna start
/// would sit, and which directions count as lateral and vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilFrame {
    pub center: Vec3,
    pub lateral_axis: Vec3,
    pub vertical_axis: Vec3,
}

impl Default for CoilFrame {
    fn default() -> Self {
        CoilFrame {
            center: Vec3::ZERO,
            lateral_axis: Vec3::new(0.0, 1.0, 0.0),
            vertical_axis: Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

/// Lateral and vertical components of `best - coil center` in the coil frame.
pub fn misalignment_report(estimate: &EstimateResult, coil: &CoilFrame) -> Result<(f64, f64)> {
    if estimate.ambiguous {
        return Err(Error::Ambiguous(
            "cannot decompose misalignment for an ambiguous estimate".into(),
        ));
    }
    let lat_axis = unit(coil.lateral_axis, "lateral")?;
    let vert_axis = unit(coil.vertical_axis, "vertical")?;
    let rel = estimate.best - coil.center;
    Ok((rel.dot(lat_axis), rel.dot(vert_axis)))
}

fn unit(v: Vec3, name: &str) -> Result<Vec3> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Argument(format!("coil {name} axis must be non-zero")));
    }
    Ok(v.scale(1.0 / n))
}

// ---------------------------------------------------------------------------
// Coarse-to-fine refinement
// ---------------------------------------------------------------------------

/// Two-pass peak search: scan the full extent at `coarse_resolution_m` with
/// the (smooth) `coarse_compute` map, then re-scan fine sub-grids of
/// half-width `refine_radius_m` around the top coarse basins with the
/// coherent `fine_compute` map. Sub-grid centers stay on the base lattice so
/// results are comparable with a single fine pass.
pub fn refine_peaks<F, C>(
    fine_compute: F,
    coarse_compute: C,
    base_grid: &GridSpec,
    coarse_resolution_m: f64,
    refine_radius_m: f64,
    k: usize,
    min_separation_m: f64,
) -> Result<Vec<Peak>>
where
    F: Fn(&GridSpec) -> Result<LikelihoodMap>,
    C: Fn(&GridSpec) -> Result<LikelihoodMap>,
{
    base_grid.validate()?;
    let coarse_grid = GridSpec {
        x: coarsen(base_grid.x, coarse_resolution_m),
        y: coarsen(base_grid.y, coarse_resolution_m),
        z: coarsen(base_grid.z, coarse_resolution_m),
        cell_budget: base_grid.cell_budget,
    };
    let coarse_map = coarse_compute(&coarse_grid)?;
    // Top basins on both sides of the motion line survive with a separation
    // floor of one coarse cell.
    let coarse_peaks = find_peaks(&coarse_map, 4, min_separation_m.max(coarse_resolution_m));
    if coarse_peaks.is_empty() {
        return Ok(Vec::new());
    }

    let mut refined: Vec<Peak> = Vec::new();
    for cp in &coarse_peaks {
        let sub_grid = GridSpec {
            x: window(base_grid.x, cp.position.x, refine_radius_m),
            y: window(base_grid.y, cp.position.y, refine_radius_m),
            z: window(base_grid.z, cp.position.z, refine_radius_m),
            cell_budget: base_grid.cell_budget,
        };
        let sub_map = fine_compute(&sub_grid)?;
        refined.extend(find_peaks(&sub_map, 1, min_separation_m));
    }
    refined.sort_by(|a, b| b.likelihood.partial_cmp(&a.likelihood).unwrap());
    // Windows can overlap and rediscover the same cell.
    refined.dedup_by(|a, b| a.position == b.position);
    refined.truncate(k);
    Ok(refined)
}

fn coarsen(axis: Axis, resolution: f64) -> Axis {
    match axis {
        Axis::Search { min, max, .. } => Axis::Search { min, max, resolution },
        fixed => fixed,
    }
}

/// Restrict a searched axis to `center +- radius`, snapped onto the base
/// lattice so fine cells coincide with single-pass cells.
fn window(axis: Axis, center: f64, radius: f64) -> Axis {
    match axis {
        Axis::Search { min, max, resolution } => {
            let lo = (center - radius).max(min);
            let hi = (center + radius).min(max);
            let i0 = ((lo - min) / resolution - 1e-9).ceil().max(0.0);
            let i1 = ((hi - min) / resolution + 1e-9).floor();
            let snapped_min = min + i0 * resolution;
            let snapped_max = min + i1.max(i0) * resolution;
            if snapped_max > snapped_min {
                Axis::Search { min: snapped_min, max: snapped_max, resolution }
            } else {
                Axis::Fixed(snapped_min)
            }
        }
        fixed => fixed,
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
