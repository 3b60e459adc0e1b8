//! Conserved-quantity series per experiment and the windowed
//! Physical Invariance score.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{
    estimate_kinematics, estimate_velocity, kinematics_from_positions, KinematicSeries, KinematicsConfig,
};
use crate::trajectory::{ExperimentKind, ExperimentSpec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvariantKind {
    EnergyPerMass,
    VerticalAcceleration,
    HorizontalVelocity,
    PendulumEnergy,
    PendulumPeriod,
    PendulumLength,
    DoublePendulumEnergy,
    Length1,
    Length2,
}

impl InvariantKind {
    /// Column label used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            InvariantKind::EnergyPerMass => "Energy Conservation",
            InvariantKind::VerticalAcceleration => "Acceleration Conservation",
            InvariantKind::HorizontalVelocity => "Horizontal Momentum Conservation",
            InvariantKind::PendulumEnergy => "Energy Conservation",
            InvariantKind::PendulumPeriod => "Period Conservation",
            InvariantKind::PendulumLength => "Length Conservation",
            InvariantKind::DoublePendulumEnergy => "Total Energy Conservation",
            InvariantKind::Length1 => "Length 1 Conservation",
            InvariantKind::Length2 => "Length 2 Conservation",
        }
    }
}

/// Invariants scored for each experiment, in report column order.
///
/// The non-holonomic pendulum keeps only its energy: neither its period nor
/// its length is fixed by the string suspension.
pub fn invariants_for(kind: ExperimentKind) -> &'static [InvariantKind] {
    use InvariantKind::*;
    match kind {
        ExperimentKind::FallingBall | ExperimentKind::BouncingBall | ExperimentKind::Projectile => {
            &[EnergyPerMass, VerticalAcceleration, HorizontalVelocity]
        }
        ExperimentKind::HolonomicPendulum => &[PendulumEnergy, PendulumPeriod, PendulumLength],
        ExperimentKind::NonHolonomicPendulum => &[PendulumEnergy],
        ExperimentKind::DoublePendulum => &[DoublePendulumEnergy, Length1, Length2],
    }
}

/// Invariants that get their own report column. Experiments with a single
/// invariant only report the aggregate.
pub fn component_columns(kind: ExperimentKind) -> &'static [InvariantKind] {
    let all = invariants_for(kind);
    if all.len() > 1 {
        all
    } else {
        &[]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantSeries {
    pub kind: InvariantKind,
    pub values: Vec<f64>,
    pub t: Vec<f64>,
}

impl InvariantSeries {
    pub fn new(kind: InvariantKind, values: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if values.len() != t.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: t.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value in {kind:?} series")));
        }
        Ok(InvariantSeries { kind, values, t })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreConfig {
    /// Normalization factor applied to the deviation.
    pub alpha: f64,
    /// Window length as a fraction of the series, for generated trajectories.
    pub window_fraction: f64,
    /// Window fraction for reference (real-world) trajectories.
    pub reference_window_fraction: f64,
    /// The relative deviation is used only when |mean| >= this multiple of
    /// the window's standard deviation.
    pub zero_mean_sigma_multiplier: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            alpha: 1.0,
            window_fraction: 0.25,
            reference_window_fraction: 0.1,
            zero_mean_sigma_multiplier: 10.0,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| f > 0.0 && f <= 1.0;
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !frac_ok(self.window_fraction) || !frac_ok(self.reference_window_fraction) {
            return Err(Error::Config("window fractions must lie in (0, 1]".into()));
        }
        if !(self.zero_mean_sigma_multiplier > 0.0) {
            return Err(Error::Config("zero_mean_sigma_multiplier must be positive".into()));
        }
        Ok(())
    }

    pub fn window_len(&self, n: usize, reference: bool) -> usize {
        let frac = if reference {
            self.reference_window_fraction
        } else {
            self.window_fraction
        };
        ((frac * n as f64).round() as usize).clamp(MIN_WINDOW.min(n), n)
    }
}

/// Smallest window the scorer will use.
pub const MIN_WINDOW: usize = 3;

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Score of a single window: `1 / (1 + alpha * deviation)`, where the
/// deviation is relative when the mean dominates the spread and absolute
/// otherwise.
pub fn window_score(values: &[f64], cfg: &ScoreConfig) -> f64 {
    let (mean, std) = mean_std(values);
    let deviation = if std == 0.0 {
        0.0
    } else if mean.abs() >= cfg.zero_mean_sigma_multiplier * std {
        std / mean.abs()
    } else {
        std
    };
    1.0 / (1.0 + cfg.alpha * deviation)
}

/// Scores of every stride-1 window of the configured length.
pub fn window_scores(series: &InvariantSeries, cfg: &ScoreConfig, reference: bool) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = series.values.len();
    if n < 4 {
        return Err(Error::TooShort { needed: 4, got: n });
    }
    let w = cfg.window_len(n, reference);
    Ok(series.values.windows(w).map(|v| window_score(v, cfg)).collect())
}

/// Physical Invariance score of one series: the best window score.
pub fn invariance_score(series: &InvariantSeries, cfg: &ScoreConfig, reference: bool) -> Result<f64> {
    Ok(window_scores(series, cfg, reference)?.into_iter().fold(0.0, f64::max))
}

/// Kinetic plus potential energy per unit mass.
pub fn energy_per_mass(kin: &KinematicSeries, g: f64) -> Result<InvariantSeries> {
    let values = kin
        .vel
        .iter()
        .zip(&kin.pos)
        .map(|(v, p)| 0.5 * (v[0] * v[0] + v[1] * v[1]) + g * p[1])
        .collect();
    InvariantSeries::new(InvariantKind::EnergyPerMass, values, kin.t.clone())
}

pub fn vertical_acceleration(kin: &KinematicSeries) -> Result<InvariantSeries> {
    InvariantSeries::new(
        InvariantKind::VerticalAcceleration,
        kin.acc.iter().map(|a| a[1]).collect(),
        kin.t.clone(),
    )
}

/// Horizontal momentum per unit mass.
pub fn horizontal_velocity(kin: &KinematicSeries) -> Result<InvariantSeries> {
    InvariantSeries::new(
        InvariantKind::HorizontalVelocity,
        kin.vel.iter().map(|v| v[0]).collect(),
        kin.t.clone(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PivotEstimate {
    pub center: [f64; 2],
    pub radius: f64,
    pub rms_residual: f64,
}

/// Algebraic least-squares circle through `points` (metric, y up).
pub fn estimate_pivot(points: &[[f64; 2]]) -> Result<PivotEstimate> {
    if points.len() < 10 {
        return Err(Error::TooShort {
            needed: 10,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let extent = points.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).fold(0.0, f64::max);
    if extent == 0.0 {
        return Err(Error::DegenerateFit("all points coincide".into()));
    }
    // Solve x^2 + y^2 + D x + E y + F = 0 in centred, extent-scaled coordinates.
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let (x, y) = ((p[0] - cx) / extent, (p[1] - cy) / extent);
        let row = Vector3::new(x, y, 1.0);
        ata += row * row.transpose();
        atb -= row * (x * x + y * y);
    }
    let svd = ata.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-12 * smax) {
        return Err(Error::DegenerateFit("points are collinear".into()));
    }
    let sol = svd.solve(&atb, 0.0).map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let (a, b) = (-sol[0] / 2.0, -sol[1] / 2.0);
    let r2 = a * a + b * b - sol[2];
    if !(r2 > 0.0) || r2.sqrt() > 1e6 {
        return Err(Error::DegenerateFit("no finite circle fits the points".into()));
    }
    let center = [cx + a * extent, cy + b * extent];
    let radius = r2.sqrt() * extent;
    let rms_residual = (points
        .iter()
        .map(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();

    let angles = unwrap_angles(
        &points
            .iter()
            .map(|p| (p[1] - center[1]).atan2(p[0] - center[0]))
            .collect::<Vec<_>>(),
    );
    let span =
        angles.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)) - angles.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if span < 0.2 {
        return Err(Error::DegenerateFit(format!(
            "arc spans only {span:.3} rad, need at least 0.2"
        )));
    }
    Ok(PivotEstimate {
        center,
        radius,
        rms_residual,
    })
}

/// Remove 2π jumps between consecutive angles.
pub fn unwrap_angles(angles: &[f64]) -> Vec<f64> {
    use std::f64::consts::PI;
    let mut out = Vec::with_capacity(angles.len());
    let mut offset = 0.0;
    for (i, &a) in angles.iter().enumerate() {
        if i > 0 {
            let d = a - angles[i - 1];
            if d > PI {
                offset -= 2.0 * PI;
            } else if d < -PI {
                offset += 2.0 * PI;
            }
        }
        out.push(a + offset);
    }
    out
}

/// Angle from the downward vertical of each point about `pivot`, unwrapped.
pub fn pendulum_angles(points: &[[f64; 2]], pivot: [f64; 2]) -> Result<Vec<f64>> {
    let raw = points
        .iter()
        .map(|p| {
            let (dx, dy) = (p[0] - pivot[0], p[1] - pivot[1]);
            if dx.hypot(dy) < 1e-12 {
                Err(Error::Validation("bob coincides with the pivot".into()))
            } else {
                Ok(dx.atan2(-dy))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(unwrap_angles(&raw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumSeries {
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub energy: InvariantSeries,
    pub length: InvariantSeries,
}

/// Angle, angular velocity, energy per unit mass and bob-pivot distance of a
/// single pendulum. `length` sets the rod length used in the energy.
pub fn pendulum_series(
    t: &[f64],
    bob: &[[f64; 2]],
    pivot: [f64; 2],
    length: f64,
    g: f64,
    cfg: &KinematicsConfig,
) -> Result<PendulumSeries> {
    let theta = pendulum_angles(bob, pivot)?;
    let theta_dot = estimate_velocity(&theta, t, cfg)?;
    let energy = theta
        .iter()
        .zip(&theta_dot)
        .map(|(th, w)| 0.5 * length * length * w * w + g * length * (1.0 - th.cos()))
        .collect();
    let lengths = bob.iter().map(|p| (p[0] - pivot[0]).hypot(p[1] - pivot[1])).collect();
    Ok(PendulumSeries {
        theta,
        theta_dot,
        energy: InvariantSeries::new(InvariantKind::PendulumEnergy, energy, t.to_vec())?,
        length: InvariantSeries::new(InvariantKind::PendulumLength, lengths, t.to_vec())?,
    })
}

/// Times at which `values` crosses its mean, with the crossing direction
/// (`true` for upward). A hysteresis band of 5% of the standard deviation
/// suppresses noise-induced double crossings.
fn mean_crossings(values: &[f64], t: &[f64]) -> Vec<(f64, bool)> {
    let (mean, std) = mean_std(values);
    let band = 0.05 * std;
    let centred: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let mut out = Vec::new();
    let mut state: Option<bool> = None; // true = above band
    let mut last_zero: Option<f64> = None;
    for i in 0..centred.len() {
        if i > 0 {
            let (a, b) = (centred[i - 1], centred[i]);
            if (a <= 0.0 && b > 0.0) || (a >= 0.0 && b < 0.0) {
                let w = a / (a - b);
                last_zero = Some(t[i - 1] + w * (t[i] - t[i - 1]));
            }
        }
        let v = centred[i];
        let now = if v > band {
            Some(true)
        } else if v < -band {
            Some(false)
        } else {
            None
        };
        if let Some(now) = now {
            if let Some(prev) = state {
                if prev != now {
                    if let Some(z) = last_zero {
                        out.push((z, now));
                    }
                }
            }
            state = Some(now);
        }
    }
    out
}

/// Successive oscillation periods from same-direction mean crossings.
pub fn estimate_period(theta: &[f64], t: &[f64]) -> Result<InvariantSeries> {
    if theta.len() != t.len() {
        return Err(Error::LengthMismatch {
            left: theta.len(),
            right: t.len(),
        });
    }
    let crossings = mean_crossings(theta, t);
    if crossings.len() < 3 {
        return Err(Error::InsufficientOscillation {
            crossings: crossings.len(),
            needed: 3,
        });
    }
    let (values, times) = crossings.windows(3).map(|w| (w[2].0 - w[0].0, w[2].0)).unzip();
    InvariantSeries::new(InvariantKind::PendulumPeriod, values, times)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoublePendulumSeries {
    pub theta_1: Vec<f64>,
    pub theta_2: Vec<f64>,
    pub energy: InvariantSeries,
    pub length_1: InvariantSeries,
    pub length_2: InvariantSeries,
}

/// Energy per total mass and both rod lengths of a double pendulum. Heights
/// are measured from the lowest reachable point.
pub fn double_pendulum_series(
    t: &[f64],
    joint: &[[f64; 2]],
    bob: &[[f64; 2]],
    pivot: [f64; 2],
    g: f64,
    mass_ratio: f64,
    cfg: &KinematicsConfig,
) -> Result<DoublePendulumSeries> {
    let upper = kinematics_from_positions(t, joint, cfg)?;
    let lower = kinematics_from_positions(t, bob, cfg)?;
    let l1: Vec<f64> = joint.iter().map(|p| (p[0] - pivot[0]).hypot(p[1] - pivot[1])).collect();
    let l2: Vec<f64> = joint
        .iter()
        .zip(bob)
        .map(|(j, b)| (b[0] - j[0]).hypot(b[1] - j[1]))
        .collect();
    let n = t.len() as f64;
    let floor = pivot[1] - l1.iter().sum::<f64>() / n - l2.iter().sum::<f64>() / n;
    let (m1, m2) = (1.0, mass_ratio);
    let energy = (0..t.len())
        .map(|i| {
            let (v1, v2) = (upper.vel[i], lower.vel[i]);
            let e1 = 0.5 * (v1[0] * v1[0] + v1[1] * v1[1]) + g * (joint[i][1] - floor);
            let e2 = 0.5 * (v2[0] * v2[0] + v2[1] * v2[1]) + g * (bob[i][1] - floor);
            (m1 * e1 + m2 * e2) / (m1 + m2)
        })
        .collect();
    let theta_1 = pendulum_angles(joint, pivot)?;
    let theta_2 = unwrap_angles(
        &joint
            .iter()
            .zip(bob)
            .map(|(j, b)| (b[0] - j[0]).atan2(-(b[1] - j[1])))
            .collect::<Vec<_>>(),
    );
    Ok(DoublePendulumSeries {
        theta_1,
        theta_2,
        energy: InvariantSeries::new(InvariantKind::DoublePendulumEnergy, energy, t.to_vec())?,
        length_1: InvariantSeries::new(InvariantKind::Length1, l1, t.to_vec())?,
        length_2: InvariantSeries::new(InvariantKind::Length2, l2, t.to_vec())?,
    })
}

/// Pivot of a single or double pendulum trajectory: the recorded pivot when
/// present, else a circle fit through the bob (or joint) track.
pub fn resolve_pivot(traj: &Trajectory) -> Result<PivotEstimate> {
    let track = match traj.experiment {
        ExperimentKind::DoublePendulum => traj
            .metric_joint()
            .ok_or_else(|| Error::Validation("double pendulum trajectory has no joint track".into()))?,
        _ => traj.metric_positions(),
    };
    match traj.metric_pivot() {
        Some(center) => {
            let n = track.len() as f64;
            let radius = track
                .iter()
                .map(|p| (p[0] - center[0]).hypot(p[1] - center[1]))
                .sum::<f64>()
                / n;
            let rms_residual = (track
                .iter()
                .map(|p| ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).powi(2))
                .sum::<f64>()
                / n)
                .sqrt();
            Ok(PivotEstimate {
                center,
                radius,
                rms_residual,
            })
        }
        None => estimate_pivot(&track),
    }
}

/// Every invariant series defined for the trajectory's experiment.
pub fn invariant_series(
    traj: &Trajectory,
    spec: &ExperimentSpec,
    kcfg: &KinematicsConfig,
) -> Result<Vec<InvariantSeries>> {
    let g = spec.g;
    match spec.kind {
        k if k.is_ball() => {
            let kin = estimate_kinematics(traj, kcfg)?;
            Ok(vec![
                energy_per_mass(&kin, g)?,
                vertical_acceleration(&kin)?,
                horizontal_velocity(&kin)?,
            ])
        }
        ExperimentKind::DoublePendulum => {
            let pivot = resolve_pivot(traj)?;
            let joint = traj
                .metric_joint()
                .ok_or_else(|| Error::Validation("double pendulum trajectory has no joint track".into()))?;
            let s = double_pendulum_series(
                &traj.times(),
                &joint,
                &traj.metric_positions(),
                pivot.center,
                g,
                spec.mass_ratio,
                kcfg,
            )?;
            Ok(vec![s.energy, s.length_1, s.length_2])
        }
        kind => {
            traj.validate()?;
            let pivot = resolve_pivot(traj)?;
            let length = spec.length_1.unwrap_or(pivot.radius);
            let t = traj.times();
            let s = pendulum_series(&t, &traj.metric_positions(), pivot.center, length, g, kcfg)?;
            if kind == ExperimentKind::NonHolonomicPendulum {
                return Ok(vec![s.energy]);
            }
            let period = estimate_period(&s.theta, &t)?;
            Ok(vec![s.energy, period, s.length])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub invariant: InvariantKind,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub components: Vec<ComponentScore>,
    pub aggregate: f64,
}

/// Arithmetic mean of component scores.
pub fn aggregate_scores(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// Score every invariant of the experiment and aggregate them.
pub fn physical_invariance(
    traj: &Trajectory,
    spec: &ExperimentSpec,
    kcfg: &KinematicsConfig,
    scfg: &ScoreConfig,
    reference: bool,
) -> Result<InvarianceReport> {
    let components = invariant_series(traj, spec, kcfg)?
        .iter()
        .map(|s| {
            Ok(ComponentScore {
                invariant: s.kind,
                score: invariance_score(s, scfg, reference)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = components.iter().map(|c| c.score).collect();
    Ok(InvarianceReport {
        aggregate: aggregate_scores(&scores),
        components,
    })
}
