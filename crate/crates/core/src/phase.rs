//! Backscatter phase physics: round-trip propagation phase, the reader's
//! fold to (0, 180) degrees, normalization, and phase-noise modeling.
//!
//! A reader observing a tag at distance `d` sees the round-trip phase
//! `4*pi*d / lambda` plus a per-tag constant offset (transmit chain, tag
//! reflection, receive chain), all modulo 2*pi. Reader firmware then reports
//! that phase folded into half a cycle, `[0, 180)` degrees. The estimator
//! relies on one identity proved here: doubling commutes with folding, so
//! doubled phase residuals are free of the fold ambiguity.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

const TAU: f64 = std::f64::consts::TAU;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Reader RF configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadioConfig {
    pub frequency_hz: f64,
    pub tx_power_dbm: f64,
}

impl RadioConfig {
    pub fn new(frequency_hz: f64, tx_power_dbm: f64) -> Result<Self> {
        if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
            return Err(Error::Argument(format!(
                "frequency must be positive, got {frequency_hz}"
            )));
        }
        Ok(RadioConfig { frequency_hz, tx_power_dbm })
    }

    /// Carrier wavelength c/f in meters.
    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / self.frequency_hz
    }
}

impl Default for RadioConfig {
    /// 910 MHz at 25 dBm, the reader settings used throughout.
    fn default() -> Self {
        RadioConfig { frequency_hz: 910e6, tx_power_dbm: 25.0 }
    }
}

/// A phase as reported by the reader: degrees folded into `[0, 180)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FoldedPhaseDeg(f64);

impl FoldedPhaseDeg {
    pub fn new(deg: f64) -> Result<Self> {
        if !deg.is_finite() || !(0.0..180.0).contains(&deg) {
            return Err(Error::Range(format!("folded phase {deg} outside [0, 180)")));
        }
        Ok(FoldedPhaseDeg(deg))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn to_radians(self) -> f64 {
        self.0.to_radians()
    }
}

/// The lumped per-tag constant phase offset (transmit antenna + tag
/// reflection + receive antenna), radians in `[0, 2*pi)`.
///
/// The split between the three physical contributions is unobservable and
/// the estimator is invariant to the total, so one constant carries it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseOffsets {
    combined_rad: f64,
}

impl PhaseOffsets {
    pub const ZERO: PhaseOffsets = PhaseOffsets { combined_rad: 0.0 };

    pub fn new(combined_rad: f64) -> Result<Self> {
        if !combined_rad.is_finite() || !(0.0..TAU).contains(&combined_rad) {
            return Err(Error::Range(format!(
                "phase offset {combined_rad} outside [0, 2*pi)"
            )));
        }
        Ok(PhaseOffsets { combined_rad })
    }

    pub fn combined_rad(self) -> f64 {
        self.combined_rad
    }

    /// Uniform draw over `[0, 2*pi)`, keyed by (seed, stream).
    pub fn random(seed: u64, stream: u64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream));
        PhaseOffsets { combined_rad: rng.gen_range(0.0..TAU) }
    }
}

/// Wrapped-Gaussian jitter applied to each folded phase read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Standard deviation of the folded phase, degrees. Zero disables noise.
    pub phase_sigma_deg: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(phase_sigma_deg: f64, seed: u64) -> Result<Self> {
        if !(phase_sigma_deg >= 0.0) {
            return Err(Error::Argument(format!(
                "phase sigma must be >= 0, got {phase_sigma_deg}"
            )));
        }
        Ok(NoiseModel { phase_sigma_deg, seed })
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Carrier wavelength for a frequency in Hz.
pub fn wavelength(frequency_hz: f64) -> Result<f64> {
    if !(frequency_hz > 0.0) || !frequency_hz.is_finite() {
        return Err(Error::Argument(format!(
            "frequency must be positive, got {frequency_hz}"
        )));
    }
    Ok(SPEED_OF_LIGHT_M_S / frequency_hz)
}

/// Reader-to-tag-to-reader propagation phase `(4*pi*d / lambda) mod 2*pi`.
pub fn round_trip_phase(d_m: f64, wavelength_m: f64) -> Result<f64> {
    if !(d_m >= 0.0) {
        return Err(Error::Argument(format!("distance must be >= 0, got {d_m}")));
    }
    if !(wavelength_m > 0.0) {
        return Err(Error::Argument(format!(
            "wavelength must be > 0, got {wavelength_m}"
        )));
    }
    Ok(wrap_tau(4.0 * std::f64::consts::PI * d_m / wavelength_m))
}

/// The phase the reader actually observes: propagation plus the lumped
/// per-tag offset, modulo 2*pi.
pub fn observed_phase(d_m: f64, radio: &RadioConfig, offsets: PhaseOffsets) -> Result<f64> {
    let prop = round_trip_phase(d_m, radio.wavelength_m())?;
    Ok(wrap_tau(prop + offsets.combined_rad))
}

/// Fold a phase in radians into the reader's `[0, 180)` degree output range.
pub fn fold_to_reader_deg(phase_rad: f64) -> FoldedPhaseDeg {
    FoldedPhaseDeg(wrap_deg_180(phase_rad.to_degrees()))
}

/// Map a folded phase affinely onto `[-1, 1)`: `p/90 - 1`.
pub fn normalize_phase(p: FoldedPhaseDeg) -> f64 {
    p.0 / 90.0 - 1.0
}

/// Inverse of [`normalize_phase`].
pub fn denormalize_phase(n: f64) -> Result<FoldedPhaseDeg> {
    FoldedPhaseDeg::new((n + 1.0) * 90.0)
}

/// Add wrapped-Gaussian noise to a folded phase.
///
/// Deterministic for a given `(model.seed, draw_index)` pair, so reads can be
/// generated in any order or in parallel. `phase_sigma_deg == 0` returns the
/// input bit-for-bit.
pub fn add_phase_noise(p: FoldedPhaseDeg, model: &NoiseModel, draw_index: u64) -> FoldedPhaseDeg {
    if model.phase_sigma_deg == 0.0 {
        return p;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(model.seed, draw_index));
    let normal = Normal::new(0.0, model.phase_sigma_deg).expect("sigma validated >= 0");
    let jitter: f64 = normal.sample(&mut rng);
    FoldedPhaseDeg(wrap_deg_180(p.0 + jitter))
}

/// Wrap into `[0, 2*pi)`, guarding the `rem_euclid` edge where a tiny
/// negative input rounds up to the modulus itself.
pub(crate) fn wrap_tau(x: f64) -> f64 {
    let v = x.rem_euclid(TAU);
    if v >= TAU {
        0.0
    } else {
        v
    }
}

pub(crate) fn wrap_deg_180(x: f64) -> f64 {
    let v = x.rem_euclid(180.0);
    if v >= 180.0 {
        0.0
    } else {
        v
    }
}

/// Derive an independent RNG stream from a base seed. SplitMix64 finalizer;
/// distinct (seed, stream) pairs give uncorrelated ChaCha seeds.
pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // ----- wavelength -------------------------------------------------------

    #[test]
    fn wavelength_910_mhz() {
        let w = wavelength(910e6).unwrap();
        assert!((w - 0.329442).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn wavelength_identities() {
        assert_eq!(wavelength(SPEED_OF_LIGHT_M_S).unwrap(), 1.0);
        assert_eq!(wavelength(1.0).unwrap(), SPEED_OF_LIGHT_M_S);
        assert!(wavelength(0.0).is_err());
        assert!(wavelength(-910e6).is_err());
    }

    // ----- round-trip phase -------------------------------------------------

    #[test]
    fn round_trip_zero_distance() {
        assert_eq!(round_trip_phase(0.0, 0.329442).unwrap(), 0.0);
    }

    #[test]
    fn round_trip_half_wavelength_wraps() {
        let lambda = 0.329442;
        let p = round_trip_phase(lambda / 2.0, lambda).unwrap();
        // 4*pi*(lambda/2)/lambda = 2*pi -> wraps to 0.
        assert!(p.abs() < 1e-12 || (TAU - p) < 1e-12, "p = {p}");
    }

    #[test]
    fn round_trip_lab_distance() {
        let p = round_trip_phase(0.2, 0.329442).unwrap();
        assert!((p - 1.3457).abs() < 1e-4, "p = {p}");
    }

    #[test]
    fn round_trip_rejects_negative_distance() {
        assert!(round_trip_phase(-0.1, 0.3).is_err());
    }

    // ----- observed phase ---------------------------------------------------

    #[test]
    fn observed_phase_offsets() {
        let radio = RadioConfig::default();
        assert_eq!(observed_phase(0.0, &radio, PhaseOffsets::ZERO).unwrap(), 0.0);
        let off = PhaseOffsets::new(1.0).unwrap();
        assert_eq!(observed_phase(0.0, &radio, off).unwrap(), 1.0);
    }

    #[test]
    fn observed_phase_matches_round_trip_without_offset() {
        let radio = RadioConfig::default();
        let p = observed_phase(0.2, &radio, PhaseOffsets::ZERO).unwrap();
        let q = round_trip_phase(0.2, radio.wavelength_m()).unwrap();
        assert_eq!(p, q);
        assert!((p - 1.3457).abs() < 1e-4);
    }

    // ----- folding ----------------------------------------------------------

    #[test]
    fn fold_mod_180() {
        let p = fold_to_reader_deg(200f64.to_radians());
        assert!((p.value() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn fold_lab_values() {
        assert!((fold_to_reader_deg(1.3457).value() - 77.10).abs() < 5e-3);
        assert!((fold_to_reader_deg(5.1601).value() - 115.65).abs() < 5e-3);
    }

    #[test]
    fn fold_negative_phase() {
        let p = fold_to_reader_deg(-0.1f64.to_radians());
        assert!(p.value() >= 0.0 && p.value() < 180.0);
        assert!((p.value() - 179.9).abs() < 1e-12);
    }

    // ----- normalization ----------------------------------------------------

    #[test]
    fn normalize_anchors() {
        assert_eq!(normalize_phase(FoldedPhaseDeg::new(0.0).unwrap()), -1.0);
        assert_eq!(normalize_phase(FoldedPhaseDeg::new(90.0).unwrap()), 0.0);
        let n = normalize_phase(FoldedPhaseDeg::new(77.10).unwrap());
        assert!((n - (-0.1433)).abs() < 5e-5, "n = {n}");
    }

    // ----- noise ------------------------------------------------------------

    #[test]
    fn zero_sigma_is_identity() {
        let model = NoiseModel::new(0.0, 7).unwrap();
        let p = FoldedPhaseDeg::new(123.456).unwrap();
        assert_eq!(add_phase_noise(p, &model, 42).value(), p.value());
    }

    #[test]
    fn noise_is_deterministic_per_draw() {
        let model = NoiseModel::new(5.0, 99).unwrap();
        let p = FoldedPhaseDeg::new(10.0).unwrap();
        let a = add_phase_noise(p, &model, 3);
        let b = add_phase_noise(p, &model, 3);
        assert_eq!(a.value(), b.value());
        let c = add_phase_noise(p, &model, 4);
        assert_ne!(a.value(), c.value());
    }

    #[test]
    fn noise_circular_std_matches_sigma() {
        // Estimate the wrapped-Gaussian sigma from 1e5 folded draws via the
        // doubled-angle resultant: sigma_hat = sqrt(-2 ln R) / 2.
        let sigma = 10.0;
        let model = NoiseModel::new(sigma, 2024).unwrap();
        let p = FoldedPhaseDeg::new(90.0).unwrap();
        let n = 100_000u64;
        let (mut re, mut im) = (0.0f64, 0.0f64);
        for k in 0..n {
            let noisy = add_phase_noise(p, &model, k);
            let (s, c) = (2.0 * noisy.to_radians()).sin_cos();
            re += c;
            im += s;
        }
        let r = (re * re + im * im).sqrt() / n as f64;
        let sigma_hat = ((-2.0 * r.ln()).sqrt() / 2.0).to_degrees();
        assert!(
            (sigma_hat - sigma).abs() / sigma < 0.02,
            "sigma_hat = {sigma_hat}"
        );
    }

    // ----- properties -------------------------------------------------------

    proptest! {
        #[test]
        fn half_wavelength_periodicity(d in 0.0..10.0f64) {
            let lambda = 0.329442;
            let a = round_trip_phase(d, lambda).unwrap();
            let b = round_trip_phase(d + lambda / 2.0, lambda).unwrap();
            let diff = (a - b).abs();
            let diff = diff.min(TAU - diff);
            prop_assert!(diff < 1e-12, "diff = {diff}");
        }

        #[test]
        fn folding_commutes_with_doubling(phase_rad in -50.0..50.0f64) {
            // (2 * fold(phi)) mod 360 must equal (2 * phi_deg) mod 360 exactly;
            // this is what makes the doubled-residual likelihood fold-proof.
            let deg = phase_rad.to_degrees();
            let lhs = (2.0 * fold_to_reader_deg(phase_rad).value()).rem_euclid(360.0);
            let rhs = (2.0 * deg).rem_euclid(360.0);
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn normalize_is_a_bijection(deg in 0.0..180.0f64) {
            let p = FoldedPhaseDeg::new(deg).unwrap();
            let n = normalize_phase(p);
            prop_assert!((-1.0..1.0).contains(&n));
            let back = denormalize_phase(n).unwrap();
            prop_assert!((back.value() - deg).abs() < 1e-12);
        }

        #[test]
        fn noisy_phase_stays_folded(deg in 0.0..180.0f64, sigma in 0.0..90.0f64, draw in 0u64..1000) {
            let model = NoiseModel::new(sigma, 11).unwrap();
            let p = add_phase_noise(FoldedPhaseDeg::new(deg).unwrap(), &model, draw);
            prop_assert!((0.0..180.0).contains(&p.value()));
        }
    }
}
