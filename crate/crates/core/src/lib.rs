//! Physics-conformance scoring for 2D object trajectories.
//!
//! The pipeline takes tracked object positions (from video or from the
//! built-in simulator), gates out unusable tracks, and scores the rest in
//! two ways:
//!
//! * the **Physical Invariance** score, from the windowed stability of
//!   quantities that the experiment's physics conserves ([`invariants`]);
//! * the **Dynamical** score, from how well a network constrained by the
//!   experiment's equation of motion reproduces the track ([`dynscore`]).
//!
//! [`bench`] ties the stages together for batches of trajectory files.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several parallel arrays with one counter.
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod dynscore;
pub mod error;
pub mod gate;
pub mod invariants;
pub mod kinematics;
pub mod simulate;
pub mod trajectory;

pub use dynscore::{PinnConfig, PinnFit};
pub use error::{Error, Result};
pub use gate::{GateConfig, GateReason, GateVerdict};
pub use invariants::{InvariantKind, InvariantSeries, ScoreConfig};
pub use kinematics::{KinematicSeries, KinematicsConfig};
pub use simulate::{Corruption, SimSpec};
pub use trajectory::{ExperimentKind, ExperimentSpec, Sample, Trajectory, Unit, YAxis};
