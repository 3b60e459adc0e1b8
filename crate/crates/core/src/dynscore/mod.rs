//! Dynamical score: fit a physics-informed network to a trajectory and
//! report how well the constrained fit reproduces the data.

pub mod adam;
pub mod dual;
pub mod network;
pub mod physics;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::invariants::{pendulum_angles, resolve_pivot, unwrap_angles};
use crate::kinematics::{estimate_velocity, KinematicsConfig};
use crate::trajectory::{ExperimentKind, ExperimentSpec, Trajectory};
use adam::Adam;
use dual::{Dual, Real};
use network::{backward, forward, BatchCache, Jet, Mlp};
pub use physics::{output_count, physics_loss, residuals, PhysicsConstants, PhysicsPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub lambda_physics: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub collocation_points: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Loss-curve sampling interval, in iterations.
    pub log_every: usize,
}

impl Default for PinnConfig {
    fn default() -> Self {
        PinnConfig {
            hidden_layers: 2,
            hidden_width: 20,
            lambda_physics: 1.0,
            learning_rate: 1e-3,
            iterations: 20_000,
            collocation_points: 200,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            log_every: 100,
        }
    }
}

impl PinnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::Config("network needs at least one hidden unit".into()));
        }
        if self.iterations == 0 || self.collocation_points < 2 || self.log_every == 0 {
            return Err(Error::Config(
                "iterations and log_every must be positive, collocation_points >= 2".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.lambda_physics >= 0.0) {
            return Err(Error::Config(
                "learning_rate must be positive, lambda non-negative".into(),
            ));
        }
        Ok(())
    }

    fn layer_sizes(&self, outputs: usize) -> Vec<usize> {
        let mut sizes = vec![1];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(outputs);
        sizes
    }
}

/// Observations to fit: one series per network output on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnProblem {
    pub kind: ExperimentKind,
    pub constants: PhysicsConstants,
    pub t: Vec<f64>,
    pub coords: Vec<Vec<f64>>,
}

/// Affine maps between physical and network units: time onto `[0, 1]`,
/// each coordinate to zero mean and unit standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub t0: f64,
    pub span: f64,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(outputs: usize) -> Self {
        Normalization {
            t0: 0.0,
            span: 1.0,
            mean: vec![0.0; outputs],
            scale: vec![1.0; outputs],
        }
    }

    pub fn fit(t: &[f64], coords: &[Vec<f64>]) -> Result<Self> {
        let span = t[t.len() - 1] - t[0];
        if !(span > 0.0) {
            return Err(Error::Validation("time span must be positive".into()));
        }
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for c in coords {
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(Error::DegenerateTrajectory);
            }
            mean.push(m);
            scale.push(var.sqrt());
        }
        Ok(Normalization {
            t0: t[0],
            span,
            mean,
            scale,
        })
    }

    pub fn to_network_time(&self, t: f64) -> f64 {
        (t - self.t0) / self.span
    }

    /// Network-unit jet of output `k` to physical units.
    pub fn to_physical(&self, k: usize, j: Jet) -> Jet {
        let s = self.scale[k];
        [
            self.mean[k] + s * j[0],
            s * j[1] / self.span,
            s * j[2] / (self.span * self.span),
        ]
    }
}

/// A trained network together with its normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnModel {
    pub mlp: Mlp,
    pub norm: Normalization,
}

impl PinnModel {
    /// `(u, du/dt, d²u/dt²)` of every output at physical time `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<Jet>> {
        if self.mlp.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite network parameters".into()));
        }
        Ok(self
            .mlp
            .eval(self.norm.to_network_time(t))
            .into_iter()
            .enumerate()
            .map(|(k, j)| self.norm.to_physical(k, j))
            .collect())
    }
}

/// Network output and its first two time derivatives at time `t`.
pub fn mlp_eval_with_time_derivatives(model: &PinnModel, t: f64) -> Result<Vec<Jet>> {
    model.eval(t)
}

/// `MSE / Var(truth)`.
pub fn nmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::DegenerateTrajectory);
    }
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    Ok(mse / var)
}

/// Per-coordinate NMSE and their mean.
pub fn nmse_multi(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<(Vec<f64>, f64)> {
    let per = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| nmse(p, t))
        .collect::<Result<Vec<_>>>()?;
    let mean = per.iter().sum::<f64>() / per.len().max(1) as f64;
    Ok((per, mean))
}

/// `clamp(1 - nmse, 0, 1)`. A perfect score is reserved for an exact fit:
/// any positive NMSE, however small, scores below 1.
pub fn dynamical_score(nmse: f64) -> f64 {
    if nmse.is_nan() {
        return 0.0;
    }
    let score = (1.0 - nmse).clamp(0.0, 1.0);
    if nmse > 0.0 && score == 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else {
        score
    }
}

/// Piecewise-linear interpolation of `(t, v)` at `query`, clamped at the ends.
pub fn interpolate_linear(t: &[f64], v: &[f64], query: f64) -> f64 {
    let idx = t.partition_point(|&x| x <= query);
    if idx == 0 {
        return v[0];
    }
    if idx >= t.len() {
        return v[t.len() - 1];
    }
    let w = (query - t[idx - 1]) / (t[idx] - t[idx - 1]);
    v[idx - 1] + w * (v[idx] - v[idx - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub data_loss: f64,
    pub physics_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PinnFit {
    pub model: PinnModel,
    pub t: Vec<f64>,
    pub predicted: Vec<Vec<f64>>,
    pub observed: Vec<Vec<f64>>,
    /// Final data loss in normalized units.
    pub data_loss: f64,
    /// Final physics loss in normalized units.
    pub physics_loss: f64,
    pub nmse_per_coordinate: Vec<f64>,
    pub nmse: f64,
    pub dynamical_score: f64,
    pub curve: Vec<CurvePoint>,
}

impl PinnFit {
    /// Write the loss curve as `iteration,data_loss,physics_loss` CSV.
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "iteration,data_loss,physics_loss")?;
        for c in &self.curve {
            writeln!(f, "{},{},{}", c.iteration, c.data_loss, c.physics_loss)?;
        }
        Ok(())
    }
}

/// Squared natural angular frequency of the equation of motion; zero when
/// it has no restoring term.
fn natural_rate(kind: ExperimentKind, c: &PhysicsConstants) -> f64 {
    let rate = |l: Option<f64>| l.map_or(0.0, |l| c.g / l);
    match kind {
        ExperimentKind::HolonomicPendulum | ExperimentKind::NonHolonomicPendulum => rate(c.length_1),
        ExperimentKind::DoublePendulum => rate(c.length_1).max(rate(c.length_2)),
        _ => 0.0,
    }
}

/// Per-residual acceleration scale `sigma_k / tau^2`, with `tau` the shorter
/// of the fitted span and the natural time scale of the dynamics.
fn residual_scales(kind: ExperimentKind, c: &PhysicsConstants, norm: &Normalization) -> Vec<f64> {
    let inv_tau2 = (1.0 / (norm.span * norm.span)).max(natural_rate(kind, c));
    norm.scale
        .iter()
        .map(|s| (s * inv_tau2).max(f64::MIN_POSITIVE))
        .collect()
}

/// Data and physics loss terms in network units, with their gradient.
pub struct Objective {
    kind: ExperimentKind,
    constants: PhysicsConstants,
    norm: Normalization,
    lambda: f64,
    residual_scales: Vec<f64>,
    targets: Vec<Vec<f64>>,
    data: BatchCache,
    collocation: BatchCache,
}

impl Objective {
    pub fn new(problem: &PinnProblem, cfg: &PinnConfig, mlp: &Mlp) -> Result<Self> {
        problem.constants.check(problem.kind)?;
        let outputs = output_count(problem.kind);
        if problem.coords.len() != outputs {
            return Err(Error::Config(format!(
                "{} needs {outputs} coordinate series, got {}",
                problem.kind,
                problem.coords.len()
            )));
        }
        for c in &problem.coords {
            if c.len() != problem.t.len() {
                return Err(Error::LengthMismatch {
                    left: c.len(),
                    right: problem.t.len(),
                });
            }
        }
        if problem.t.len() < 3 {
            return Err(Error::TooShort {
                needed: 3,
                got: problem.t.len(),
            });
        }
        let norm = Normalization::fit(&problem.t, &problem.coords)?;
        let s_data: Vec<f64> = problem.t.iter().map(|&t| norm.to_network_time(t)).collect();
        let m = cfg.collocation_points;
        let s_col: Vec<f64> = (0..m).map(|j| j as f64 / (m - 1) as f64).collect();
        let targets = problem
            .coords
            .iter()
            .enumerate()
            .map(|(k, c)| c.iter().map(|v| (v - norm.mean[k]) / norm.scale[k]).collect())
            .collect();
        Ok(Objective {
            kind: problem.kind,
            constants: problem.constants,
            residual_scales: residual_scales(problem.kind, &problem.constants, &norm),
            norm,
            lambda: cfg.lambda_physics,
            targets,
            data: BatchCache::new(mlp, &s_data, false),
            collocation: BatchCache::new(mlp, &s_col, true),
        })
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    /// Returns `(data_loss, physics_loss)`; when `grad` is given it is
    /// overwritten with the gradient of `data + lambda * physics`.
    pub fn evaluate(&mut self, mlp: &Mlp, mut grad: Option<&mut [f64]>) -> (f64, f64) {
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let outputs = self.targets.len();

        // Data term: (1/N) sum_i sum_k (u_k - y_k)^2.
        forward(mlp, &mut self.data);
        let n = self.data.points();
        let mut data_loss = 0.0;
        for k in 0..outputs {
            let residual: Vec<f64> = self
                .data
                .output(k, 0)
                .iter()
                .zip(&self.targets[k])
                .map(|(u, y)| u - y)
                .collect();
            data_loss += residual.iter().map(|r| r * r).sum::<f64>() / n as f64;
            if grad.is_some() {
                for (a, r) in self.data.output_adjoint_mut(k, 0).iter_mut().zip(&residual) {
                    *a = 2.0 * r / n as f64;
                }
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            backward(mlp, &mut self.data, g);
        }

        // Physics term on the collocation grid, residuals scaled to be
        // dimensionless.
        forward(mlp, &mut self.collocation);
        let m = self.collocation.points();
        let coef = 2.0 * self.lambda / m as f64;
        let mut physics_loss = 0.0;
        let mut adjoints = vec![[0.0; 3]; outputs * m];
        for p in 0..m {
            let mut u = [[Dual::<6>::cst(0.0); 3]; 2];
            for k in 0..outputs {
                let (mean, scale) = (self.norm.mean[k], self.norm.scale[k]);
                let span = self.norm.span;
                let v = |c: usize| self.collocation.output(k, c)[p];
                u[k] = [
                    Dual::cst(mean) + Dual::cst(scale) * Dual::var(v(0), 3 * k),
                    Dual::cst(scale / span) * Dual::var(v(1), 3 * k + 1),
                    Dual::cst(scale / (span * span)) * Dual::var(v(2), 3 * k + 2),
                ];
            }
            let (r, count) = residuals(self.kind, &self.constants, &u[..outputs]);
            for (r, a) in r[..count].iter().zip(&self.residual_scales) {
                let inv_a = 1.0 / a;
                let rv = r.value() * inv_a;
                physics_loss += rv * rv / m as f64;
                for k in 0..outputs {
                    for c in 0..3 {
                        adjoints[k * m + p][c] += coef * rv * inv_a * r.d[3 * k + c];
                    }
                }
            }
        }
        if let Some(g) = grad {
            for k in 0..outputs {
                for c in 0..3 {
                    let buf = self.collocation.output_adjoint_mut(k, c);
                    for (p, a) in buf.iter_mut().enumerate() {
                        *a = adjoints[k * m + p][c];
                    }
                }
            }
            backward(mlp, &mut self.collocation, g);
        }
        (data_loss, physics_loss)
    }
}

/// Train a network on `problem` and score the fit.
pub fn train_pinn(problem: &PinnProblem, cfg: &PinnConfig) -> Result<PinnFit> {
    cfg.validate()?;
    let outputs = output_count(problem.kind);
    let mut mlp = Mlp::xavier(cfg.layer_sizes(outputs), cfg.seed);
    let mut objective = Objective::new(problem, cfg, &mlp)?;
    let mut adam = Adam::new(mlp.params.len(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut grad = vec![0.0; mlp.params.len()];
    let mut curve = Vec::new();

    for it in 0..cfg.iterations {
        let (data_loss, physics_loss) = objective.evaluate(&mlp, Some(&mut grad));
        if !(data_loss.is_finite() && physics_loss.is_finite()) || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                data_loss,
                physics_loss,
            });
        }
        if it % cfg.log_every == 0 {
            curve.push(CurvePoint {
                iteration: it,
                data_loss,
                physics_loss,
            });
        }
        adam.step(&mut mlp.params, &grad);
    }
    let (data_loss, physics_loss) = objective.evaluate(&mlp, None);
    if !(data_loss.is_finite() && physics_loss.is_finite()) {
        return Err(Error::Diverged {
            iteration: cfg.iterations,
            data_loss,
            physics_loss,
        });
    }
    curve.push(CurvePoint {
        iteration: cfg.iterations,
        data_loss,
        physics_loss,
    });

    let model = PinnModel {
        mlp,
        norm: objective.normalization().clone(),
    };
    let mut predicted = vec![Vec::with_capacity(problem.t.len()); outputs];
    for &t in &problem.t {
        for (k, j) in model.eval(t)?.into_iter().enumerate() {
            predicted[k].push(j[0]);
        }
    }
    // Observations and predictions share the grid, so interpolation is the
    // identity here; it matters when scoring on a different grid.
    let observed: Vec<Vec<f64>> = problem
        .coords
        .iter()
        .map(|c| {
            problem
                .t
                .iter()
                .map(|&t| interpolate_linear(&problem.t, c, t))
                .collect()
        })
        .collect();
    let (nmse_per_coordinate, nmse) = nmse_multi(&predicted, &observed)?;
    Ok(PinnFit {
        model,
        t: problem.t.clone(),
        predicted,
        observed,
        data_loss,
        physics_loss,
        nmse_per_coordinate,
        dynamical_score: dynamical_score(nmse),
        nmse,
        curve,
    })
}

/// Index ranges between bounces (upward reversals of the smoothed vertical
/// velocity), one frame trimmed on each side of every impact.
pub fn inter_impact_segments(t: &[f64], y: &[f64], kcfg: &KinematicsConfig) -> Result<Vec<(usize, usize)>> {
    let v = estimate_velocity(y, t, kcfg)?;
    let impacts: Vec<usize> = (1..v.len()).filter(|&i| v[i - 1] < 0.0 && v[i] >= 0.0).collect();
    let mut segments = Vec::new();
    let mut start = 0;
    for &i in &impacts {
        let end = i.saturating_sub(1);
        if end > start {
            segments.push((start, end));
        }
        start = i + 1;
    }
    if y.len() > start + 1 {
        segments.push((start, y.len() - 1));
    }
    Ok(segments)
}

/// Build the fitting problem for a gated trajectory: Cartesian coordinates
/// for ball experiments, angles about the pivot for pendulums.
pub fn pinn_problem(traj: &Trajectory, spec: &ExperimentSpec, kcfg: &KinematicsConfig) -> Result<PinnProblem> {
    traj.validate()?;
    let t = traj.times();
    let pos = traj.metric_positions();
    let xs: Vec<f64> = pos.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = pos.iter().map(|p| p[1]).collect();
    let mut constants = PhysicsConstants {
        g: spec.g,
        length_1: spec.length_1,
        length_2: spec.length_2,
        mass_ratio: spec.mass_ratio,
    };
    let (t, coords) = match spec.kind {
        ExperimentKind::FallingBall => (t, vec![ys]),
        ExperimentKind::Projectile => (t, vec![xs, ys]),
        ExperimentKind::BouncingBall => {
            let segments = inter_impact_segments(&t, &ys, kcfg)?;
            let (a, b) = segments
                .into_iter()
                .max_by_key(|(a, b)| b - a)
                .unwrap_or((0, t.len() - 1));
            if b - a + 1 < 8 {
                (t, vec![ys])
            } else {
                (t[a..=b].to_vec(), vec![ys[a..=b].to_vec()])
            }
        }
        ExperimentKind::HolonomicPendulum | ExperimentKind::NonHolonomicPendulum => {
            let pivot = resolve_pivot(traj)?;
            constants.length_1 = Some(spec.length_1.unwrap_or(pivot.radius));
            (t, vec![pendulum_angles(&pos, pivot.center)?])
        }
        ExperimentKind::DoublePendulum => {
            let pivot = resolve_pivot(traj)?;
            let joint = traj
                .metric_joint()
                .ok_or_else(|| Error::Validation("double pendulum trajectory has no joint track".into()))?;
            let n = joint.len() as f64;
            let l2_mean = joint
                .iter()
                .zip(&pos)
                .map(|(j, b)| (b[0] - j[0]).hypot(b[1] - j[1]))
                .sum::<f64>()
                / n;
            constants.length_1 = Some(spec.length_1.unwrap_or(pivot.radius));
            constants.length_2 = Some(spec.length_2.unwrap_or(l2_mean));
            let theta_1 = pendulum_angles(&joint, pivot.center)?;
            let theta_2 = unwrap_angles(
                &joint
                    .iter()
                    .zip(&pos)
                    .map(|(j, b)| (b[0] - j[0]).atan2(-(b[1] - j[1])))
                    .collect::<Vec<_>>(),
            );
            (t, vec![theta_1, theta_2])
        }
    };
    Ok(PinnProblem {
        kind: spec.kind,
        constants,
        t,
        coords,
    })
}

/// Fit and score a gated trajectory.
pub fn fit_trajectory(
    traj: &Trajectory,
    spec: &ExperimentSpec,
    kcfg: &KinematicsConfig,
    cfg: &PinnConfig,
) -> Result<PinnFit> {
    train_pinn(&pinn_problem(traj, spec, kcfg)?, cfg)
}
