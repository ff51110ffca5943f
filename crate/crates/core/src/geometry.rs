//! Positions, timed trajectories, GPS conversion, and lever-arm transforms.
//!
//! Everything lives in a local right-handed metric frame: `x` along-track,
//! `y` lateral, `z` vertical up. GPS fixes are mapped into this frame with an
//! equirectangular East-North-Up projection, which is centimeter-accurate
//! over the sub-100 m spans this toolkit works at.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the ENU projection.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

// ---------------------------------------------------------------------------
// Vectors
// ---------------------------------------------------------------------------

/// A point or displacement in the local metric frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn scale(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }
}

/// Euclidean distance between two points.
pub fn distance(a: Vec3, b: Vec3) -> f64 {
    (a - b).norm()
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// One antenna phase-center position at a point in time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    /// Seconds on a monotone clock, non-negative.
    pub t: f64,
    pub position: Vec3,
}

/// A time-ordered sequence of antenna poses.
///
/// Construction enforces at least one pose and strictly increasing
/// timestamps; positions between poses are linearly interpolated and
/// queries outside the time span are rejected (no extrapolation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<TimedPose>,
}

impl Trajectory {
    pub fn new(poses: Vec<TimedPose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::Argument("trajectory needs at least one pose".into()));
        }
        for (i, p) in poses.iter().enumerate() {
            if !p.t.is_finite() || p.t < 0.0 {
                return Err(Error::Argument(format!(
                    "pose {i}: timestamp must be finite and non-negative, got {}",
                    p.t
                )));
            }
            if !p.position.is_finite() {
                return Err(Error::Argument(format!("pose {i}: non-finite position")));
            }
            if i > 0 && p.t <= poses[i - 1].t {
                return Err(Error::Argument(format!(
                    "pose {i}: timestamps must be strictly increasing ({} after {})",
                    p.t,
                    poses[i - 1].t
                )));
            }
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[TimedPose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        false // invariant: >= 1 pose
    }

    pub fn start_time(&self) -> f64 {
        self.poses[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.poses[self.poses.len() - 1].t
    }

    /// Duration covered by the poses, in seconds.
    pub fn span(&self) -> f64 {
        self.end_time() - self.start_time()
    }

    pub fn first_position(&self) -> Vec3 {
        self.poses[0].position
    }

    pub fn last_position(&self) -> Vec3 {
        self.poses[self.poses.len() - 1].position
    }

    /// Antenna position at time `t`, linearly interpolated between poses.
    ///
    /// Exact at pose timestamps; `t` outside the span is a range error.
    pub fn position_at(&self, t: f64) -> Result<Vec3> {
        if !t.is_finite() || t < self.start_time() || t > self.end_time() {
            return Err(Error::Range(format!(
                "t = {t} outside trajectory span [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        // Index of the first pose with pose.t > t; t lies in segment [idx-1, idx].
        let idx = self.poses.partition_point(|p| p.t <= t);
        if idx == self.poses.len() {
            return Ok(self.last_position());
        }
        let a = &self.poses[idx - 1];
        let b = &self.poses[idx];
        let alpha = (t - a.t) / (b.t - a.t);
        Ok(a.position + (b.position - a.position).scale(alpha))
    }
}

/// Build the stop-and-dwell trajectory used on the lab track: pose `k` sits
/// at `start + k * step_vector` at time `k * dwell`.
pub fn stepped_trajectory(
    start: Vec3,
    step_vector: Vec3,
    dwell_s: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::Argument("n_steps must be >= 1".into()));
    }
    if !(dwell_s > 0.0) {
        return Err(Error::Argument(format!("dwell must be > 0, got {dwell_s}")));
    }
    let poses = (0..n_steps)
        .map(|k| {
            let kf = k as f64;
            TimedPose {
                t: kf * dwell_s,
                position: start + step_vector.scale(kf),
            }
        })
        .collect();
    Trajectory::new(poses)
}

// ---------------------------------------------------------------------------
// GPS ingestion
// ---------------------------------------------------------------------------

/// A WGS-84 GPS fix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoFix {
    pub t: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub alt_m: f64,
}

impl GeoFix {
    pub fn new(t: f64, lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::Range(format!("latitude {lat_deg} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(Error::Range(format!("longitude {lon_deg} outside [-180, 180]")));
        }
        if !t.is_finite() || !alt_m.is_finite() {
            return Err(Error::Argument("non-finite GPS fix field".into()));
        }
        Ok(GeoFix { t, lat_deg, lon_deg, alt_m })
    }
}

/// Project GPS fixes into the local frame with an equirectangular ENU
/// projection about `origin`: east maps to `x`, north to `y`, up to `z`.
pub fn geo_to_local(fixes: &[GeoFix], origin: &GeoFix) -> Result<Trajectory> {
    if fixes.is_empty() {
        return Err(Error::Format("GPS track has no fixes".into()));
    }
    for w in fixes.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::Format(format!(
                "GPS timestamps must be strictly increasing ({} after {})",
                w[1].t, w[0].t
            )));
        }
    }
    let lat0 = origin.lat_deg.to_radians();
    let poses = fixes
        .iter()
        .map(|f| {
            let east = EARTH_RADIUS_M * lat0.cos() * (f.lon_deg - origin.lon_deg).to_radians();
            let north = EARTH_RADIUS_M * (f.lat_deg - origin.lat_deg).to_radians();
            let up = f.alt_m - origin.alt_m;
            TimedPose { t: f.t, position: Vec3::new(east, north, up) }
        })
        .collect();
    Trajectory::new(poses)
}

/// Inverse of [`geo_to_local`] for a single point; used when synthesizing
/// GPS tracks from a known local trajectory.
pub fn local_to_geo(p: Vec3, t: f64, origin: &GeoFix) -> GeoFix {
    let lat0 = origin.lat_deg.to_radians();
    GeoFix {
        t,
        lat_deg: origin.lat_deg + (p.y / EARTH_RADIUS_M).to_degrees(),
        lon_deg: origin.lon_deg + (p.x / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        alt_m: origin.alt_m + p.z,
    }
}

// ---------------------------------------------------------------------------
// Lever arm
// ---------------------------------------------------------------------------

/// Rigid offset from the GPS antenna to the RFID antenna in the vehicle body
/// frame, plus the vehicle yaw that rotates it into the local frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeverArm {
    pub offset: Vec3,
    /// Vehicle yaw in radians, measured from +x about +z, in [-pi, pi].
    pub heading_rad: f64,
}

impl LeverArm {
    pub fn new(offset: Vec3, heading_rad: f64) -> Result<Self> {
        if !offset.is_finite() {
            return Err(Error::Argument("lever arm offset must be finite".into()));
        }
        if !heading_rad.is_finite() || heading_rad.abs() > std::f64::consts::PI {
            return Err(Error::Argument(format!(
                "heading {heading_rad} outside [-pi, pi]"
            )));
        }
        Ok(LeverArm { offset, heading_rad })
    }

    /// The body-frame offset rotated into the local frame.
    pub fn world_offset(&self) -> Vec3 {
        let (s, c) = self.heading_rad.sin_cos();
        Vec3::new(
            c * self.offset.x - s * self.offset.y,
            s * self.offset.x + c * self.offset.y,
            self.offset.z,
        )
    }
}

/// Shift every pose by the lever arm rotated about z; timestamps unchanged.
pub fn apply_lever_arm(traj: &Trajectory, arm: &LeverArm) -> Trajectory {
    let shift = arm.world_offset();
    let poses = traj
        .poses()
        .iter()
        .map(|p| TimedPose { t: p.t, position: p.position + shift })
        .collect();
    Trajectory { poses }
}

/// Vehicle heading derived from the track itself: the bearing of the first
/// displacement spanning at least `min_baseline_s` seconds. Finite-difference
/// headings over short baselines are noise-dominated, hence the floor.
pub fn heading_from_track(traj: &Trajectory, min_baseline_s: f64) -> Result<f64> {
    let first = traj.poses()[0];
    for p in traj.poses().iter().skip(1) {
        if p.t - first.t >= min_baseline_s {
            let d = p.position - first.position;
            if d.x.hypot(d.y) == 0.0 {
                return Err(Error::Argument(
                    "track has no horizontal displacement; heading undefined".into(),
                ));
            }
            return Ok(d.y.atan2(d.x));
        }
    }
    Err(Error::Argument(format!(
        "track shorter than the {min_baseline_s} s heading baseline"
    )))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
