//! Ground-truth trajectories from numerically integrated equations of motion,
//! plus controlled unphysical corruptions used as negative controls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{ExperimentKind, Sample, Trajectory, Unit, YAxis};

/// Magnitude beyond which an integrated state is treated as divergent.
const DIVERGENCE_LIMIT: f64 = 1e9;
/// Impact-time resolution of the bounce bisection, in seconds.
const EVENT_TOLERANCE: f64 = 1e-9;

/// Coordinate frame for simulator output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "unit", rename_all = "snake_case")]
pub enum OutputFrame {
    /// Meters, y up.
    Meters,
    /// Image pixels, y down; `origin` is the pixel location of the metric origin.
    Pixels { pixels_per_meter: f64, origin: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSpec {
    pub kind: ExperimentKind,
    pub g: f64,
    /// Initial ball position, meters.
    pub position: [f64; 2],
    /// Initial ball velocity, m/s.
    pub velocity: [f64; 2],
    /// Initial pendulum angles from the downward vertical, rad.
    pub theta: [f64; 2],
    /// Initial angular velocities, rad/s.
    pub omega: [f64; 2],
    pub length_1: f64,
    pub length_2: f64,
    /// Lower-bob to upper-bob mass ratio (double pendulum).
    pub mass_ratio: f64,
    pub pivot: [f64; 2],
    /// Viscous damping coefficient per unit mass, 1/s.
    pub damping_b_over_m: f64,
    pub restitution: f64,
    pub ground_y: f64,
    pub fps: f64,
    pub duration: f64,
    pub integrator_dt: f64,
    /// Position noise standard deviation in meters.
    pub noise_sigma: f64,
    pub seed: u64,
    pub output: OutputFrame,
    /// Record the pivot location in the output trajectory.
    pub record_pivot: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec::new(ExperimentKind::FallingBall)
    }
}

impl SimSpec {
    /// Defaults for each experiment: a short clip at 120 fps.
    pub fn new(kind: ExperimentKind) -> Self {
        let mut spec = SimSpec {
            kind,
            g: 9.81,
            position: [0.0, 1.5],
            velocity: [0.0, 0.0],
            theta: [0.3, 0.0],
            omega: [0.0, 0.0],
            length_1: 0.5,
            length_2: 0.5,
            mass_ratio: 1.0,
            pivot: [0.0, 1.2],
            damping_b_over_m: 0.0,
            restitution: 0.8,
            ground_y: 0.0,
            fps: 120.0,
            duration: 0.5,
            integrator_dt: 1e-3,
            noise_sigma: 0.0,
            seed: 0,
            output: OutputFrame::Meters,
            record_pivot: false,
        };
        match kind {
            ExperimentKind::FallingBall => {}
            ExperimentKind::BouncingBall => {
                // Long enough between impacts for a quarter-clip window to
                // fit inside one flight.
                spec.position = [0.0, 1.0];
                spec.duration = 1.5;
            }
            ExperimentKind::Projectile => {
                spec.position = [0.0, 0.5];
                spec.velocity = [1.5, 3.0];
                spec.duration = 0.6;
            }
            ExperimentKind::HolonomicPendulum => {
                spec.damping_b_over_m = 0.01;
                spec.duration = 5.0;
            }
            ExperimentKind::NonHolonomicPendulum => {
                spec.damping_b_over_m = 0.05;
                spec.duration = 5.0;
            }
            ExperimentKind::DoublePendulum => {
                spec.theta = [0.5, 0.3];
                spec.length_1 = 0.4;
                spec.length_2 = 0.4;
                spec.pivot = [0.0, 1.0];
                spec.duration = 3.0;
            }
        }
        spec
    }

    /// Parse a JSON object whose unset fields take the defaults of its
    /// `kind` (not of the falling ball, as plain deserialization would).
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let serde_json::Value::Object(fields) = value else {
            return Err(Error::Config("simulation spec must be a JSON object".into()));
        };
        let kind: ExperimentKind = match fields.get("kind") {
            Some(k) => serde_json::from_value(k.clone())?,
            None => return Err(Error::Config("simulation spec needs a `kind`".into())),
        };
        let mut merged = serde_json::to_value(SimSpec::new(kind))?;
        if let serde_json::Value::Object(base) = &mut merged {
            for (k, v) in fields {
                if !base.contains_key(&k) {
                    return Err(Error::Config(format!("unknown simulation field `{k}`")));
                }
                base.insert(k, v);
            }
        }
        let spec: SimSpec = serde_json::from_value(merged)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.integrator_dt > 0.0) || self.integrator_dt > 1.0 / (4.0 * self.fps) {
            return bad(format!(
                "integrator_dt must lie in (0, 1/(4 fps)], got {}",
                self.integrator_dt
            ));
        }
        if !(self.length_1 > 0.0 && self.length_2 > 0.0) {
            return bad("pendulum lengths must be positive".into());
        }
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return bad(format!("restitution must lie in (0, 1], got {}", self.restitution));
        }
        if !(self.mass_ratio > 0.0) {
            return bad("mass_ratio must be positive".into());
        }
        if self.noise_sigma < 0.0 || self.damping_b_over_m < 0.0 {
            return bad("noise_sigma and damping must be non-negative".into());
        }
        if let OutputFrame::Pixels { pixels_per_meter, .. } = self.output {
            if !(pixels_per_meter > 0.0) {
                return bad("pixels_per_meter must be positive".into());
            }
        }
        Ok(())
    }

    fn initial_state(&self) -> Vec<f64> {
        match self.kind {
            k if k.is_ball() => vec![self.position[0], self.position[1], self.velocity[0], self.velocity[1]],
            ExperimentKind::DoublePendulum => {
                vec![self.theta[0], self.theta[1], self.omega[0], self.omega[1]]
            }
            _ => vec![self.theta[0], self.omega[0]],
        }
    }
}

/// One classical fourth-order Runge-Kutta step of the autonomous system
/// `dy/dt = f(y)`.
pub fn rk4_step<F>(state: &[f64], derivative: F, dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {dt}")));
    }
    let eval = |y: &[f64]| -> Result<Vec<f64>> {
        let d = derivative(y);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite derivative".into()));
        }
        Ok(d)
    };
    let offset = |k: &[f64], h: f64| -> Vec<f64> { state.iter().zip(k).map(|(y, k)| y + h * k).collect() };
    let k1 = eval(state)?;
    let k2 = eval(&offset(&k1, dt / 2.0))?;
    let k3 = eval(&offset(&k2, dt / 2.0))?;
    let k4 = eval(&offset(&k3, dt))?;
    Ok((0..state.len())
        .map(|i| state[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Right-hand side of the ballistic equations, state `[x, y, vx, vy]`.
pub fn ballistic_rhs(g: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |s| vec![s[2], s[3], 0.0, -g]
}

/// Damped rigid pendulum, state `[theta, omega]`.
pub fn pendulum_rhs(g: f64, length: f64, b_over_m: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |s| vec![s[1], -b_over_m * s[1] - g / length * s[0].sin()]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublePendulumParams {
    pub g: f64,
    pub length_1: f64,
    pub length_2: f64,
    pub mass_1: f64,
    pub mass_2: f64,
    pub b_over_m: f64,
}

/// Planar double pendulum of two point masses, state `[th1, th2, w1, w2]`.
pub fn double_pendulum_rhs(p: DoublePendulumParams) -> impl Fn(&[f64]) -> Vec<f64> {
    move |s| {
        let (th1, th2, w1, w2) = (s[0], s[1], s[2], s[3]);
        let (m1, m2, l1, l2, g) = (p.mass_1, p.mass_2, p.length_1, p.length_2, p.g);
        let delta = th1 - th2;
        let den = 2.0 * m1 + m2 - m2 * (2.0 * delta).cos();
        let a1 = (-g * (2.0 * m1 + m2) * th1.sin()
            - m2 * g * (th1 - 2.0 * th2).sin()
            - 2.0 * delta.sin() * m2 * (w2 * w2 * l2 + w1 * w1 * l1 * delta.cos()))
            / (l1 * den);
        let a2 = 2.0
            * delta.sin()
            * (w1 * w1 * l1 * (m1 + m2) + g * (m1 + m2) * th1.cos() + w2 * w2 * l2 * m2 * delta.cos())
            / (l2 * den);
        vec![w1, w2, a1 - p.b_over_m * w1, a2 - p.b_over_m * w2]
    }
}

/// Total mechanical energy of a double pendulum state, pivot at the origin.
pub fn double_pendulum_energy(s: &[f64], p: &DoublePendulumParams) -> f64 {
    let (th1, th2, w1, w2) = (s[0], s[1], s[2], s[3]);
    let (m1, m2, l1, l2) = (p.mass_1, p.mass_2, p.length_1, p.length_2);
    let kinetic = 0.5 * m1 * l1 * l1 * w1 * w1
        + 0.5 * m2 * (l1 * l1 * w1 * w1 + l2 * l2 * w2 * w2 + 2.0 * l1 * l2 * w1 * w2 * (th1 - th2).cos());
    let y1 = -l1 * th1.cos();
    let y2 = y1 - l2 * th2.cos();
    kinetic + p.g * (m1 * y1 + m2 * y2)
}

/// Energy per unit mass of a single pendulum state, zero at rest.
pub fn pendulum_energy(s: &[f64], g: f64, length: f64) -> f64 {
    0.5 * length * length * s[1] * s[1] + g * length * (1.0 - s[0].cos())
}

/// A ground contact of the bouncing ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Impact {
    pub t: f64,
    pub velocity_before: [f64; 2],
    pub velocity_after: [f64; 2],
}

/// Full simulator output: the sampled trajectory plus the raw integrator
/// state at every frame.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub states: Vec<Vec<f64>>,
    pub impacts: Vec<Impact>,
}

struct Integrator<'a> {
    spec: &'a SimSpec,
    resting: bool,
    impacts: Vec<Impact>,
}

impl Integrator<'_> {
    fn step(&mut self, state: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
        let spec = self.spec;
        match spec.kind {
            ExperimentKind::BouncingBall => self.bouncing_step(state, t, dt),
            k if k.is_ball() => rk4_step(state, ballistic_rhs(spec.g), dt),
            ExperimentKind::DoublePendulum => rk4_step(state, double_pendulum_rhs(double_params(spec)), dt),
            _ => rk4_step(state, pendulum_rhs(spec.g, spec.length_1, spec.damping_b_over_m), dt),
        }
    }

    fn bouncing_step(&mut self, state: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
        let g = self.spec.g;
        let ground = self.spec.ground_y;
        if self.resting {
            return Ok(vec![state[0] + state[2] * dt, ground, state[2], 0.0]);
        }
        let next = rk4_step(state, ballistic_rhs(g), dt)?;
        if next[1] >= ground {
            return Ok(next);
        }
        // Bisect the crossing time inside this step.
        let (mut lo, mut hi) = (0.0, dt);
        while hi - lo > EVENT_TOLERANCE {
            let mid = 0.5 * (lo + hi);
            let probe = rk4_step(state, ballistic_rhs(g), mid)?;
            if probe[1] >= ground {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut at_impact = rk4_step(state, ballistic_rhs(g), hi)?;
        let before = [at_impact[2], at_impact[3]];
        at_impact[1] = ground;
        at_impact[3] *= -self.spec.restitution;
        self.impacts.push(Impact {
            t: t + hi,
            velocity_before: before,
            velocity_after: [at_impact[2], at_impact[3]],
        });
        // Rebounds too small to leave the ground within one step settle.
        if at_impact[3] < g * self.spec.integrator_dt {
            self.resting = true;
            at_impact[3] = 0.0;
        }
        let rest = dt - hi;
        if rest <= 0.0 {
            return Ok(at_impact);
        }
        self.step(&at_impact, t + hi, rest)
    }
}

fn double_params(spec: &SimSpec) -> DoublePendulumParams {
    DoublePendulumParams {
        g: spec.g,
        length_1: spec.length_1,
        length_2: spec.length_2,
        mass_1: 1.0,
        mass_2: spec.mass_ratio,
        b_over_m: spec.damping_b_over_m,
    }
}

/// Positions of the tracked object (and the joint, for double pendulums) in
/// meters, y up.
fn positions(spec: &SimSpec, s: &[f64]) -> ([f64; 2], Option<[f64; 2]>) {
    match spec.kind {
        k if k.is_ball() => ([s[0], s[1]], None),
        ExperimentKind::DoublePendulum => {
            let j = [
                spec.pivot[0] + spec.length_1 * s[0].sin(),
                spec.pivot[1] - spec.length_1 * s[0].cos(),
            ];
            let b = [j[0] + spec.length_2 * s[1].sin(), j[1] - spec.length_2 * s[1].cos()];
            (b, Some(j))
        }
        _ => (
            [
                spec.pivot[0] + spec.length_1 * s[0].sin(),
                spec.pivot[1] - spec.length_1 * s[0].cos(),
            ],
            None,
        ),
    }
}

/// Integrate `spec` and keep the per-frame states and bounce events.
pub fn simulate_detailed(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let frame_dt = 1.0 / spec.fps;
    let substeps = (frame_dt / spec.integrator_dt - 1e-9).ceil().max(1.0) as usize;
    let h = frame_dt / substeps as f64;
    let frames = (spec.duration * spec.fps + 1e-9).floor() as usize + 1;

    let mut integrator = Integrator {
        spec,
        resting: false,
        impacts: Vec::new(),
    };
    let mut state = spec.initial_state();
    let mut states = Vec::with_capacity(frames);
    for k in 0..frames {
        states.push(state.clone());
        if k + 1 == frames {
            break;
        }
        for j in 0..substeps {
            let t = k as f64 * frame_dt + j as f64 * h;
            state = integrator.step(&state, t, h)?;
            let magnitude = state.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(magnitude <= DIVERGENCE_LIMIT) {
                return Err(Error::Unstable { t: t + h, magnitude });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (scale, origin) = match spec.output {
        OutputFrame::Meters => (1.0, None),
        OutputFrame::Pixels {
            pixels_per_meter,
            origin,
        } => (pixels_per_meter, Some(origin)),
    };
    let noise = Normal::new(0.0, spec.noise_sigma * scale).map_err(|e| Error::Config(format!("noise: {e}")))?;
    let project = |p: [f64; 2]| match origin {
        None => p,
        Some(o) => [o[0] + p[0] * scale, o[1] - p[1] * scale],
    };
    let mut jitter = |p: [f64; 2]| {
        if spec.noise_sigma > 0.0 {
            [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)]
        } else {
            p
        }
    };

    let mut samples = Vec::with_capacity(frames);
    let mut joint = Vec::new();
    for (k, s) in states.iter().enumerate() {
        let (bob, j) = positions(spec, s);
        let bob = jitter(project(bob));
        samples.push(Sample {
            t: k as f64 * frame_dt,
            x: bob[0],
            y: bob[1],
            visible: true,
            object_count: 1,
        });
        if let Some(j) = j {
            joint.push(jitter(project(j)));
        }
    }

    let trajectory = Trajectory {
        samples,
        joint: (!joint.is_empty()).then_some(joint),
        fps: spec.fps,
        unit: if origin.is_some() { Unit::Pixels } else { Unit::Meters },
        pixels_per_meter: origin.map(|_| scale),
        y_axis: if origin.is_some() { YAxis::Down } else { YAxis::Up },
        experiment: spec.kind,
        pivot: (spec.record_pivot && !spec.kind.is_ball()).then(|| project(spec.pivot)),
    };
    Ok(SimOutput {
        trajectory,
        states,
        impacts: integrator.impacts,
    })
}

pub fn simulate(spec: &SimSpec) -> Result<Trajectory> {
    simulate_detailed(spec).map(|o| o.trajectory)
}

/// Unphysical edits applied to an existing trajectory. Times are absolute
/// trajectory timestamps; offsets are in the trajectory's native units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Corruption {
    /// Hold the position from `start_t` for `hold_duration`, then replay the
    /// original motion delayed by `hold_duration`.
    Levitate { start_t: f64, hold_duration: f64 },
    /// Rescale gravity's contribution to a ballistic trajectory.
    GravityScale {
        factor: f64,
        #[serde(default = "default_g")]
        g: f64,
    },
    /// Add a constant offset from `at_t` onwards.
    Teleport { at_t: f64, offset: [f64; 2] },
    /// Hold the position from `start_t` to the end.
    Freeze { start_t: f64 },
    /// Independent Gaussian noise on every coordinate.
    AdditiveNoise { sigma: f64 },
}

fn default_g() -> f64 {
    9.81
}

fn interpolate(times: &[f64], values: &[[f64; 2]], t: f64) -> [f64; 2] {
    let idx = times.partition_point(|&x| x <= t);
    if idx == 0 {
        return values[0];
    }
    if idx >= times.len() {
        return values[times.len() - 1];
    }
    let (t0, t1) = (times[idx - 1], times[idx]);
    let w = (t - t0) / (t1 - t0);
    let (a, b) = (values[idx - 1], values[idx]);
    [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
}

/// Apply `c` to `traj`; deterministic for a given seed.
pub fn corrupt(traj: &Trajectory, c: &Corruption, seed: u64) -> Result<Trajectory> {
    traj.validate()?;
    let times = traj.times();
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let in_range = |t: f64| t >= t0 && t <= t1;
    let mut out = traj.clone();
    let bob: Vec<[f64; 2]> = traj.samples.iter().map(|s| [s.x, s.y]).collect();

    let remap = |out: &mut Trajectory, map: &dyn Fn(f64) -> f64| {
        for (s, &t) in out.samples.iter_mut().zip(&times) {
            let p = interpolate(&times, &bob, map(t));
            s.x = p[0];
            s.y = p[1];
        }
        if let (Some(j_out), Some(j_in)) = (&mut out.joint, &traj.joint) {
            for (p, &t) in j_out.iter_mut().zip(&times) {
                *p = interpolate(&times, j_in, map(t));
            }
        }
    };

    match *c {
        Corruption::Levitate { start_t, hold_duration } => {
            if !in_range(start_t) || hold_duration < 0.0 || !in_range(start_t + hold_duration) {
                return Err(Error::Config(format!(
                    "levitation window [{start_t}, {}] outside [{t0}, {t1}]",
                    start_t + hold_duration
                )));
            }
            remap(&mut out, &|t| {
                if t < start_t {
                    t
                } else if t < start_t + hold_duration {
                    start_t
                } else {
                    t - hold_duration
                }
            });
        }
        Corruption::Freeze { start_t } => {
            if !in_range(start_t) {
                return Err(Error::Config(format!("freeze time {start_t} outside [{t0}, {t1}]")));
            }
            remap(&mut out, &|t| t.min(start_t));
        }
        Corruption::Teleport { at_t, offset } => {
            if !in_range(at_t) {
                return Err(Error::Config(format!("teleport time {at_t} outside [{t0}, {t1}]")));
            }
            for s in out.samples.iter_mut().filter(|s| s.t >= at_t) {
                s.x += offset[0];
                s.y += offset[1];
            }
        }
        Corruption::GravityScale { factor, g } => {
            if !(factor >= 0.0 && factor.is_finite()) {
                return Err(Error::Config(format!("gravity factor must be >= 0, got {factor}")));
            }
            // Metric y-up lift of 0.5 (1 - f) g tau^2, mapped back to native units.
            let per_meter = match traj.unit {
                Unit::Meters => 1.0,
                Unit::Pixels => traj.pixels_per_meter.unwrap_or(1.0),
            };
            let sign = match traj.y_axis {
                YAxis::Up => 1.0,
                YAxis::Down => -1.0,
            };
            for s in &mut out.samples {
                let tau = s.t - t0;
                s.y += sign * per_meter * 0.5 * (1.0 - factor) * g * tau * tau;
            }
        }
        Corruption::AdditiveNoise { sigma } => {
            if !(sigma >= 0.0) {
                return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
            }
            if sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
                for s in &mut out.samples {
                    s.x += normal.sample(&mut rng);
                    s.y += normal.sample(&mut rng);
                }
                if let Some(j) = &mut out.joint {
                    for p in j.iter_mut() {
                        p[0] += normal.sample(&mut rng);
                        p[1] += normal.sample(&mut rng);
                    }
                }
            }
        }
    }
    Ok(out)
}
