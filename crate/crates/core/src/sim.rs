//! Reader log simulation: generate (ID, RSS, phase, timestamp) reads for
//! fixed tags observed from a moving antenna.
//!
//! Read attempts fire at a uniform `1/read_rate` interval over the trajectory
//! span, round-robin across tags. An attempt succeeds when the tag is within
//! `max_range` (and survives the optional Bernoulli miss draw); each success
//! emits the folded, noise-perturbed observed phase and a two-way path-loss
//! RSSI. Identical scenarios produce identical event lists.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{distance, Trajectory, Vec3};
use crate::phase::{
    add_phase_noise, fold_to_reader_deg, mix_seed, observed_phase, round_trip_phase, wrap_tau,
    FoldedPhaseDeg, NoiseModel, PhaseOffsets, RadioConfig,
};

// RNG stream tags so independent draws never share a sequence.
const STREAM_MISS: u64 = 0x4D49_5353; // "MISS"

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// One fixed tag in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSpec {
    /// EPC identifier, hex, at most 24 characters, unique per scenario.
    pub epc: String,
    pub position: Vec3,
    pub offsets: PhaseOffsets,
}

/// One successful reader observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadEvent {
    pub epc: String,
    pub t_s: f64,
    pub phase: FoldedPhaseDeg,
    pub rssi_dbm: f64,
    pub channel_hz: f64,
}

/// RSSI model anchors: power `p0` at reference distance `d0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RssiParams {
    pub d0_m: f64,
    pub p0_dbm: f64,
}

impl Default for RssiParams {
    fn default() -> Self {
        // Typical UHF monostatic values; RSS never feeds the estimator.
        RssiParams { d0_m: 1.0, p0_dbm: -55.0 }
    }
}

/// Optional ground-bounce multipath, off by default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultipathModel {
    pub ground_reflection: bool,
    /// Amplitude of the reflected phasor relative to the direct path.
    pub reflection_coeff: f64,
}

impl Default for MultipathModel {
    fn default() -> Self {
        MultipathModel { ground_reflection: false, reflection_coeff: 0.3 }
    }
}

/// Everything `simulate_reads` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub radio: RadioConfig,
    pub tags: Vec<TagSpec>,
    pub trajectory: Trajectory,
    pub read_rate_hz: f64,
    pub max_range_m: f64,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Probability an in-range attempt still fails (link-loss knob).
    pub miss_probability: f64,
    pub rssi: RssiParams,
    pub multipath: MultipathModel,
}

impl SimScenario {
    fn validate(&self) -> Result<()> {
        if !(self.read_rate_hz > 0.0) {
            return Err(Error::Argument(format!(
                "read_rate must be > 0, got {}",
                self.read_rate_hz
            )));
        }
        if !(self.max_range_m > 0.0) {
            return Err(Error::Argument(format!(
                "max_range must be > 0, got {}",
                self.max_range_m
            )));
        }
        if !(0.0..=1.0).contains(&self.miss_probability) {
            return Err(Error::Argument(format!(
                "miss_probability {} outside [0, 1]",
                self.miss_probability
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for tag in &self.tags {
            if tag.epc.is_empty() || tag.epc.len() > 24 {
                return Err(Error::Argument(format!(
                    "epc '{}' must be 1..=24 characters",
                    tag.epc
                )));
            }
            if !seen.insert(tag.epc.as_str()) {
                return Err(Error::Argument(format!("duplicate epc '{}'", tag.epc)));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Generate the full read log for a scenario.
///
/// Attempt `k` fires at `start + k/read_rate` and targets tag `k % n_tags`;
/// the schedule covers the half-open trajectory span so a 30 s pass at
/// 100 reads/s yields exactly 3000 attempts. Events come out sorted by
/// `(t, epc)` and are byte-identical for equal scenarios.
pub fn simulate_reads(s: &SimScenario) -> Result<Vec<ReadEvent>> {
    s.validate()?;
    if s.tags.is_empty() {
        return Ok(Vec::new());
    }
    let span = s.trajectory.span();
    let t0 = s.trajectory.start_time();
    // +1e-9 guards the float representation of span * rate at integer values.
    let n_attempts = ((span * s.read_rate_hz) + 1e-9).floor() as u64;
    let n_attempts = n_attempts.max(1); // a zero-span trajectory still gets one attempt
    let lambda = s.radio.wavelength_m();

    let mut events = Vec::new();
    let mut miss_rng = (s.miss_probability > 0.0)
        .then(|| ChaCha8Rng::seed_from_u64(mix_seed(s.seed, STREAM_MISS)));

    for k in 0..n_attempts {
        let t = t0 + k as f64 / s.read_rate_hz;
        let miss = miss_rng
            .as_mut()
            .map(|rng| rng.gen::<f64>() < s.miss_probability)
            .unwrap_or(false);
        let tag = &s.tags[(k % s.tags.len() as u64) as usize];
        let antenna = s.trajectory.position_at(t)?;
        let d = distance(antenna, tag.position);
        if d > s.max_range_m || miss {
            continue;
        }
        let raw = if s.multipath.ground_reflection {
            composite_ground_phase(antenna, tag.position, lambda, tag.offsets, s.multipath)?
        } else {
            observed_phase(d, &s.radio, tag.offsets)?
        };
        let phase = add_phase_noise(fold_to_reader_deg(raw), &s.noise, k);
        let rssi_dbm = rssi_model(d, s.rssi.d0_m, s.rssi.p0_dbm)?;
        events.push(ReadEvent {
            epc: tag.epc.clone(),
            t_s: t,
            phase,
            rssi_dbm,
            channel_hz: s.radio.frequency_hz,
        });
    }

    // Attempts are already in time order; the sort pins (t, epc) tie-breaking.
    events.sort_by(|a, b| {
        a.t_s
            .partial_cmp(&b.t_s)
            .unwrap()
            .then_with(|| a.epc.cmp(&b.epc))
    });
    Ok(events)
}

/// Two-way log-distance path loss: `p0 - 40 log10(d / d0)` dBm.
pub fn rssi_model(d_m: f64, d0_m: f64, p0_dbm: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::Argument(format!("distance must be > 0, got {d_m}")));
    }
    if !(d0_m > 0.0) {
        return Err(Error::Argument(format!("d0 must be > 0, got {d0_m}")));
    }
    Ok(p0_dbm - 40.0 * (d_m / d0_m).log10())
}

/// Extra one-way path length of the ground-bounce ray (reflection off the
/// z = 0 plane) relative to the direct ray. Zero when both endpoints sit on
/// the ground; assumes both z coordinates are non-negative.
pub fn two_ray_excess_path(antenna: Vec3, tag: Vec3) -> f64 {
    let dx = antenna.x - tag.x;
    let dy = antenna.y - tag.y;
    let horiz_sq = dx * dx + dy * dy;
    let h_sum = antenna.z + tag.z;
    let h_diff = antenna.z - tag.z;
    (h_sum * h_sum + horiz_sq).sqrt() - (h_diff * h_diff + horiz_sq).sqrt()
}

/// Direct + ground-reflected phasor sum, with the reflected ray carrying the
/// round-trip excess path and a reflection sign flip. Returns the composite
/// phase in `[0, 2*pi)`.
fn composite_ground_phase(
    antenna: Vec3,
    tag: Vec3,
    lambda: f64,
    offsets: PhaseOffsets,
    multipath: MultipathModel,
) -> Result<f64> {
    let d = distance(antenna, tag);
    let direct = round_trip_phase(d, lambda)? + offsets.combined_rad();
    let excess = two_ray_excess_path(antenna, tag);
    let reflected = direct + 4.0 * std::f64::consts::PI * excess / lambda + std::f64::consts::PI;
    let rho = multipath.reflection_coeff;
    let re = direct.cos() + rho * reflected.cos();
    let im = direct.sin() + rho * reflected.sin();
    Ok(wrap_tau(im.atan2(re)))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::stepped_trajectory;
    use proptest::prelude::*;

    fn lab_scenario(sigma_deg: f64, seed: u64) -> SimScenario {
        SimScenario {
            radio: RadioConfig::default(),
            tags: vec![TagSpec {
                epc: "E20034120000000000000001".into(),
                position: Vec3::new(0.75, 0.0, 0.0),
                offsets: PhaseOffsets::new(1.25).unwrap(),
            }],
            trajectory: stepped_trajectory(
                Vec3::new(0.0, 0.2, 0.0),
                Vec3::new(0.005, 0.0, 0.0),
                0.1,
                301,
            )
            .unwrap(),
            read_rate_hz: 100.0,
            max_range_m: 5.0,
            noise: NoiseModel::new(sigma_deg, seed).unwrap(),
            seed,
            miss_probability: 0.0,
            rssi: RssiParams::default(),
            multipath: MultipathModel::default(),
        }
    }

    #[test]
    fn lab_scenario_yields_3000_reads() {
        let events = simulate_reads(&lab_scenario(0.0, 0)).unwrap();
        assert_eq!(events.len(), 3000);
        assert_eq!(events[0].t_s, 0.0);
        let last = events.last().unwrap();
        assert!((last.t_s - 29.99).abs() < 1e-9);
    }

    #[test]
    fn zero_tags_zero_events() {
        let mut s = lab_scenario(0.0, 0);
        s.tags.clear();
        assert!(simulate_reads(&s).unwrap().is_empty());
    }

    #[test]
    fn out_of_range_tag_never_read() {
        let mut s = lab_scenario(0.0, 0);
        s.tags[0].position = Vec3::new(100.0, 0.0, 0.0);
        assert!(simulate_reads(&s).unwrap().is_empty());
    }

    #[test]
    fn noise_free_phase_matches_analytic_model() {
        let s = lab_scenario(0.0, 0);
        let events = simulate_reads(&s).unwrap();
        for e in &events {
            let antenna = s.trajectory.position_at(e.t_s).unwrap();
            let d = distance(antenna, s.tags[0].position);
            let expected =
                fold_to_reader_deg(observed_phase(d, &s.radio, s.tags[0].offsets).unwrap());
            assert_eq!(e.phase.value(), expected.value(), "t = {}", e.t_s);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = simulate_reads(&lab_scenario(10.0, 42)).unwrap();
        let b = simulate_reads(&lab_scenario(10.0, 42)).unwrap();
        assert_eq!(a, b);
        let c = simulate_reads(&lab_scenario(10.0, 43)).unwrap();
        assert_eq!(a.len(), c.len());
        assert_ne!(a, c);
    }

    #[test]
    fn events_strictly_time_ordered_and_bounded() {
        let s = lab_scenario(10.0, 1);
        let events = simulate_reads(&s).unwrap();
        let bound = (s.trajectory.span() * s.read_rate_hz).floor() as usize + 1;
        assert!(events.len() <= bound);
        for w in events.windows(2) {
            assert!(w[1].t_s > w[0].t_s);
        }
    }

    #[test]
    fn emitted_reads_respect_max_range() {
        let mut s = lab_scenario(0.0, 5);
        s.max_range_m = 0.55; // mid-track passes within range, the ends do not
        let events = simulate_reads(&s).unwrap();
        assert!(!events.is_empty());
        assert!(events.len() < 3000);
        for e in &events {
            let antenna = s.trajectory.position_at(e.t_s).unwrap();
            assert!(distance(antenna, s.tags[0].position) <= s.max_range_m);
        }
    }

    #[test]
    fn miss_probability_thins_reads_deterministically() {
        let mut s = lab_scenario(0.0, 9);
        s.miss_probability = 0.5;
        let a = simulate_reads(&s).unwrap();
        let b = simulate_reads(&s).unwrap();
        assert_eq!(a, b);
        assert!(a.len() > 1000 && a.len() < 2000, "len = {}", a.len());
    }

    #[test]
    fn round_robin_covers_all_tags() {
        let mut s = lab_scenario(0.0, 0);
        s.tags.push(TagSpec {
            epc: "E20034120000000000000002".into(),
            position: Vec3::new(1.0, -0.1, 0.0),
            offsets: PhaseOffsets::ZERO,
        });
        let events = simulate_reads(&s).unwrap();
        let first: usize = events.iter().filter(|e| e.epc.ends_with('1')).count();
        let second = events.len() - first;
        assert_eq!(first, 1500);
        assert_eq!(second, 1500);
    }

    #[test]
    fn duplicate_epc_rejected() {
        let mut s = lab_scenario(0.0, 0);
        let dup = s.tags[0].clone();
        s.tags.push(dup);
        assert!(matches!(simulate_reads(&s), Err(Error::Argument(_))));
    }

    #[test]
    fn ground_multipath_perturbs_phase() {
        let mut s = lab_scenario(0.0, 0);
        s.tags[0].position = Vec3::new(0.75, 0.0, 0.1);
        let mut traj_start = Vec3::new(0.0, 0.2, 0.0);
        traj_start.z = 0.3;
        s.trajectory =
            stepped_trajectory(traj_start, Vec3::new(0.005, 0.0, 0.0), 0.1, 301).unwrap();
        let clean = simulate_reads(&s).unwrap();
        s.multipath.ground_reflection = true;
        let bounced = simulate_reads(&s).unwrap();
        assert_eq!(clean.len(), bounced.len());
        let differing = clean
            .iter()
            .zip(&bounced)
            .filter(|(a, b)| a.phase.value() != b.phase.value())
            .count();
        assert!(differing > clean.len() / 2);
    }

    // ----- RSSI -------------------------------------------------------------

    #[test]
    fn rssi_reference_distance() {
        assert_eq!(rssi_model(1.0, 1.0, -55.0).unwrap(), -55.0);
    }

    #[test]
    fn rssi_doubling_costs_12db() {
        let r = rssi_model(2.0, 1.0, -55.0).unwrap();
        assert!((r - (-55.0 - 12.04)).abs() < 5e-3, "r = {r}");
    }

    #[test]
    fn rssi_decade_costs_40db() {
        let r = rssi_model(10.0, 1.0, -55.0).unwrap();
        assert!((r - (-95.0)).abs() < 1e-9);
        assert!(rssi_model(0.0, 1.0, -55.0).is_err());
    }

    // ----- two-ray ----------------------------------------------------------

    #[test]
    fn two_ray_on_ground_is_zero() {
        let e = two_ray_excess_path(Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(e, 0.0);
    }

    #[test]
    fn two_ray_equal_heights() {
        let e = two_ray_excess_path(Vec3::new(0.0, 0.0, 0.2), Vec3::new(1.0, 0.0, 0.2));
        assert!((e - 0.0770).abs() < 5e-5, "e = {e}");
    }

    #[test]
    fn two_ray_unequal_heights() {
        let e = two_ray_excess_path(Vec3::new(0.0, 0.0, 0.3), Vec3::new(1.0, 0.0, 0.1));
        assert!((e - 0.0572).abs() < 5e-5, "e = {e}");
    }

    proptest! {
        #[test]
        fn two_ray_non_negative_and_monotone(za in 0.01..3.0f64, zt in 0.01..3.0f64) {
            let mut prev = f64::INFINITY;
            for i in 1..60 {
                let x = i as f64 * 0.25;
                let e = two_ray_excess_path(
                    Vec3::new(0.0, 0.0, za),
                    Vec3::new(x, 0.0, zt),
                );
                prop_assert!(e >= 0.0);
                prop_assert!(e <= prev + 1e-12, "x = {x}: {e} > {prev}");
                prev = e;
            }
        }
    }
}
