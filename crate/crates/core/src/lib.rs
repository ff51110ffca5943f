//! RFID coherent-phase coil alignment toolkit.
//!
//! Simulates UHF backscatter phase reads for an antenna moving past fixed
//! tags, and recovers the antenna's start position (and hence lateral and
//! vertical coil misalignment) by grid maximum-likelihood estimation over
//! wrapped, reader-folded phase series.
//!
//! Module map:
//! - [`geometry`]: metric frame, trajectories, GPS projection, lever arms
//! - [`phase`]: propagation phase, reader folding, normalization, noise
//! - [`sim`]: reader log generation (ID, RSS, phase, timestamp)
//! - [`mle`]: grid likelihood maps, peak finding, mirror disambiguation
//! - [`logio`]: CSV/JSON/PGM file formats
//! - [`harness`]: simulate / estimate / replay / sweep pipelines

// `!(v > 0.0)` is the NaN-rejecting validation idiom used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod logio;
pub mod mle;
pub mod phase;
pub mod sim;

pub use error::{Error, Result};
pub use geometry::{distance, GeoFix, LeverArm, TimedPose, Trajectory, Vec3};
pub use mle::{EstimateResult, GridSpec, LikelihoodMap, MotionModel, SidePrior};
pub use phase::{FoldedPhaseDeg, NoiseModel, PhaseOffsets, RadioConfig};
pub use sim::{ReadEvent, SimScenario, TagSpec};
