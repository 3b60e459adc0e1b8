//! Equation-of-motion residuals used as the physics loss.

use serde::{Deserialize, Serialize};

use super::dual::Real;
use crate::error::{Error, Result};
use crate::trajectory::ExperimentKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConstants {
    pub g: f64,
    pub length_1: Option<f64>,
    pub length_2: Option<f64>,
    pub mass_ratio: f64,
}

impl PhysicsConstants {
    pub fn gravity(g: f64) -> Self {
        PhysicsConstants {
            g,
            length_1: None,
            length_2: None,
            mass_ratio: 1.0,
        }
    }

    fn require(v: Option<f64>, name: &str) -> Result<f64> {
        match v {
            Some(l) if l > 0.0 => Ok(l),
            _ => Err(Error::Config(format!("physics loss needs a positive {name}"))),
        }
    }

    pub fn check(&self, kind: ExperimentKind) -> Result<()> {
        match kind {
            ExperimentKind::HolonomicPendulum | ExperimentKind::NonHolonomicPendulum => {
                Self::require(self.length_1, "length_1").map(|_| ())
            }
            ExperimentKind::DoublePendulum => {
                Self::require(self.length_1, "length_1")?;
                Self::require(self.length_2, "length_2").map(|_| ())
            }
            _ => Ok(()),
        }
    }
}

/// Number of network outputs fitted for each experiment: `y` for free fall
/// and bouncing, `(x, y)` for the projectile, `theta` for single pendulums
/// and `(theta_1, theta_2)` for the double pendulum.
pub fn output_count(kind: ExperimentKind) -> usize {
    match kind {
        ExperimentKind::Projectile | ExperimentKind::DoublePendulum => 2,
        _ => 1,
    }
}

/// ODE residuals at one time point. `u[k] = [u_k, du_k/dt, d²u_k/dt²]` in
/// physical units; residuals are accelerations (m/s² or rad/s²). The caller
/// must have passed [`PhysicsConstants::check`].
pub fn residuals<R: Real>(kind: ExperimentKind, c: &PhysicsConstants, u: &[[R; 3]]) -> ([R; 2], usize) {
    let g = R::cst(c.g);
    let zero = R::cst(0.0);
    match kind {
        ExperimentKind::FallingBall | ExperimentKind::BouncingBall => ([u[0][2] + g, zero], 1),
        ExperimentKind::Projectile => ([u[0][2], u[1][2] + g], 2),
        ExperimentKind::HolonomicPendulum | ExperimentKind::NonHolonomicPendulum => {
            let l = R::cst(c.length_1.unwrap_or(f64::NAN));
            ([u[0][2] + g / l * u[0][0].sin(), zero], 1)
        }
        ExperimentKind::DoublePendulum => {
            let l1 = R::cst(c.length_1.unwrap_or(f64::NAN));
            let l2 = R::cst(c.length_2.unwrap_or(f64::NAN));
            let m2 = R::cst(c.mass_ratio);
            let total = R::cst(1.0 + c.mass_ratio);
            let [th1, w1, a1] = u[0];
            let [th2, w2, a2] = u[1];
            let delta = th1 - th2;
            let (sd, cd) = (delta.sin(), delta.cos());
            let r1 = a1 + (m2 * l2 * (a2 * cd + w2 * w2 * sd) + total * g * th1.sin()) / (total * l1);
            let r2 = a2 + (l1 * (a1 * cd - w1 * w1 * sd) + g * th2.sin()) / l2;
            ([r1, r2], 2)
        }
    }
}

/// Value, first and second time derivative of every fitted coordinate at
/// one time point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhysicsPoint {
    pub u: [f64; 2],
    pub u_t: [f64; 2],
    pub u_tt: [f64; 2],
}

/// Mean over points of the summed squared ODE residuals, physical units.
pub fn physics_loss(kind: ExperimentKind, points: &[PhysicsPoint], c: &PhysicsConstants) -> Result<f64> {
    c.check(kind)?;
    if points.is_empty() {
        return Err(Error::TooShort { needed: 1, got: 0 });
    }
    let total: f64 = points
        .iter()
        .map(|p| {
            let u = [[p.u[0], p.u_t[0], p.u_tt[0]], [p.u[1], p.u_t[1], p.u_tt[1]]];
            let (r, n) = residuals(kind, c, &u);
            r[..n].iter().map(|r| r * r).sum::<f64>()
        })
        .sum();
    Ok(total / points.len() as f64)
}
