//! Trajectory data model shared by every stage of the pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six benchmark experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FallingBall,
    BouncingBall,
    Projectile,
    HolonomicPendulum,
    NonHolonomicPendulum,
    DoublePendulum,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::FallingBall,
        ExperimentKind::BouncingBall,
        ExperimentKind::Projectile,
        ExperimentKind::HolonomicPendulum,
        ExperimentKind::NonHolonomicPendulum,
        ExperimentKind::DoublePendulum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::FallingBall => "falling_ball",
            ExperimentKind::BouncingBall => "bouncing_ball",
            ExperimentKind::Projectile => "projectile",
            ExperimentKind::HolonomicPendulum => "holonomic_pendulum",
            ExperimentKind::NonHolonomicPendulum => "non_holonomic_pendulum",
            ExperimentKind::DoublePendulum => "double_pendulum",
        }
    }

    pub fn is_ball(self) -> bool {
        matches!(
            self,
            ExperimentKind::FallingBall | ExperimentKind::BouncingBall | ExperimentKind::Projectile
        )
    }

    pub fn is_single_pendulum(self) -> bool {
        matches!(
            self,
            ExperimentKind::HolonomicPendulum | ExperimentKind::NonHolonomicPendulum
        )
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Pixels,
    Meters,
}

/// Direction of the vertical axis in the stored coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YAxis {
    /// Image convention: y grows downwards.
    Down,
    /// Physics convention: y grows upwards.
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub visible: bool,
    pub object_count: u32,
}

/// A timestamped 2D track of one object.
///
/// Coordinates are stored in their native unit and axis convention; the
/// `metric_*` accessors return meters with y pointing up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Position of the intermediate joint (upper bob) for double pendulums.
    pub joint: Option<Vec<[f64; 2]>>,
    pub fps: f64,
    pub unit: Unit,
    pub pixels_per_meter: Option<f64>,
    pub y_axis: YAxis,
    pub experiment: ExperimentKind,
    /// Known pivot location, in the same units as the samples.
    pub pivot: Option<[f64; 2]>,
}

impl Trajectory {
    /// Metric, y-up trajectory with every sample visible and a single object.
    pub fn from_metric(experiment: ExperimentKind, fps: f64, t: &[f64], pos: &[[f64; 2]]) -> Self {
        let samples = t
            .iter()
            .zip(pos)
            .map(|(&t, p)| Sample {
                t,
                x: p[0],
                y: p[1],
                visible: true,
                object_count: 1,
            })
            .collect();
        Trajectory {
            samples,
            joint: None,
            fps,
            unit: Unit::Meters,
            pixels_per_meter: None,
            y_axis: YAxis::Up,
            experiment,
            pivot: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn all_visible(&self) -> bool {
        self.samples.iter().all(|s| s.visible)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Validation("trajectory has no samples".into()));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Validation(format!("fps must be positive, got {}", self.fps)));
        }
        if self.unit == Unit::Pixels {
            match self.pixels_per_meter {
                Some(ppm) if ppm.is_finite() && ppm > 0.0 => {}
                Some(ppm) => {
                    return Err(Error::Validation(format!(
                        "pixels_per_meter must be positive, got {ppm}"
                    )))
                }
                None => {
                    return Err(Error::Validation(
                        "pixels_per_meter is required for pixel coordinates".into(),
                    ))
                }
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            if !(s.t.is_finite() && s.x.is_finite() && s.y.is_finite()) {
                return Err(Error::Validation(format!("non-finite value in sample {i}")));
            }
            if s.visible && s.object_count == 0 {
                return Err(Error::Validation(format!(
                    "sample {i} is visible but reports zero objects"
                )));
            }
        }
        check_increasing(&self.times())?;
        if let Some(joint) = &self.joint {
            if joint.len() != self.samples.len() {
                return Err(Error::LengthMismatch {
                    left: joint.len(),
                    right: self.samples.len(),
                });
            }
        }
        Ok(())
    }

    fn meters_per_unit(&self) -> f64 {
        match self.unit {
            Unit::Meters => 1.0,
            Unit::Pixels => 1.0 / self.pixels_per_meter.unwrap_or(1.0),
        }
    }

    /// Convert a native-unit point to meters, y-up.
    pub fn to_metric(&self, p: [f64; 2]) -> [f64; 2] {
        let k = self.meters_per_unit();
        match self.y_axis {
            YAxis::Up => [p[0] * k, p[1] * k],
            YAxis::Down => [p[0] * k, -p[1] * k],
        }
    }

    pub fn metric_positions(&self) -> Vec<[f64; 2]> {
        self.samples.iter().map(|s| self.to_metric([s.x, s.y])).collect()
    }

    pub fn metric_joint(&self) -> Option<Vec<[f64; 2]>> {
        self.joint
            .as_ref()
            .map(|j| j.iter().map(|&p| self.to_metric(p)).collect())
    }

    pub fn metric_pivot(&self) -> Option<[f64; 2]> {
        self.pivot.map(|p| self.to_metric(p))
    }

    /// Total path length in native units.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }

    /// Multiply every spatial quantity by `factor`, keeping the unit.
    pub fn scaled(&self, factor: f64) -> Trajectory {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.x *= factor;
            s.y *= factor;
        }
        if let Some(j) = &mut out.joint {
            for p in j.iter_mut() {
                p[0] *= factor;
                p[1] *= factor;
            }
        }
        if let Some(p) = &mut out.pivot {
            p[0] *= factor;
            p[1] *= factor;
        }
        out
    }
}

pub(crate) fn check_increasing(times: &[f64]) -> Result<()> {
    for (i, w) in times.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(Error::Ordering { index: i + 1 });
        }
    }
    Ok(())
}

/// Physical constants needed by invariants and physics losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Gravitational acceleration in m/s².
    pub g: f64,
    /// Pendulum length (upper rod for double pendulums). Estimated from the
    /// trajectory when absent.
    pub length_1: Option<f64>,
    pub length_2: Option<f64>,
    /// Lower-bob to upper-bob mass ratio for double pendulums.
    pub mass_ratio: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec::new(ExperimentKind::FallingBall)
    }
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            g: 9.81,
            length_1: None,
            length_2: None,
            mass_ratio: 1.0,
        }
    }
}
