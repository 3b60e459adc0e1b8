//! Velocity and acceleration estimation from sampled positions.
//!
//! Velocity is a Savitzky-Golay smoothed blend of a sliding-window linear
//! regression slope and a central difference; acceleration is the central
//! difference of that smoothed velocity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{check_increasing, Trajectory};

/// Maximum relative deviation of a frame interval from the mean interval.
pub const MAX_SAMPLING_JITTER: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsConfig {
    /// Odd number of frames in the regression window.
    pub regression_window: usize,
    /// Weight of the regression slope in the blend.
    pub blend_alpha: f64,
    pub sg_window: usize,
    pub sg_order: usize,
}

impl Default for KinematicsConfig {
    fn default() -> Self {
        KinematicsConfig {
            regression_window: 7,
            blend_alpha: 0.7,
            sg_window: 7,
            sg_order: 3,
        }
    }
}

impl KinematicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.regression_window < 3 || self.regression_window.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "regression_window must be odd and >= 3, got {}",
                self.regression_window
            )));
        }
        if self.sg_window.is_multiple_of(2) {
            return Err(Error::Config(format!("sg_window must be odd, got {}", self.sg_window)));
        }
        if self.sg_order == 0 || self.sg_window <= self.sg_order {
            return Err(Error::Config(format!(
                "need sg_window > sg_order >= 1, got window {} order {}",
                self.sg_window, self.sg_order
            )));
        }
        if !(0.0..=1.0).contains(&self.blend_alpha) {
            return Err(Error::Config(format!(
                "blend_alpha must lie in [0, 1], got {}",
                self.blend_alpha
            )));
        }
        Ok(())
    }

    pub fn min_samples(&self) -> usize {
        self.regression_window.max(self.sg_window).max(3)
    }
}

/// Positions, velocities and accelerations on a common time grid, in meters
/// with y pointing up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicSeries {
    pub t: Vec<f64>,
    pub pos: Vec<[f64; 2]>,
    pub vel: Vec<[f64; 2]>,
    pub acc: Vec<[f64; 2]>,
}

impl KinematicSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn check_series(values: &[f64], times: &[f64]) -> Result<()> {
    if values.len() != times.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: times.len(),
        });
    }
    if values.len() < 3 {
        return Err(Error::TooShort {
            needed: 3,
            got: values.len(),
        });
    }
    check_increasing(times)
}

/// Central difference in the interior, one-sided differences at both ends.
pub fn central_difference(values: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    check_series(values, times)?;
    let n = values.len();
    let mut out = Vec::with_capacity(n);
    out.push((values[1] - values[0]) / (times[1] - times[0]));
    for i in 1..n - 1 {
        out.push((values[i + 1] - values[i - 1]) / (times[i + 1] - times[i - 1]));
    }
    out.push((values[n - 1] - values[n - 2]) / (times[n - 1] - times[n - 2]));
    Ok(out)
}

/// Start index of a `window`-long block centred on `i`, shifted inwards at
/// the series edges so the block never leaves `0..n`.
fn window_start(i: usize, window: usize, n: usize) -> usize {
    let half = window / 2;
    i.saturating_sub(half).min(n - window)
}

/// Least-squares slope of `values` against `times` over a sliding window.
pub fn window_regression_slope(values: &[f64], times: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "regression window must be odd and >= 3, got {window}"
        )));
    }
    check_series(values, times)?;
    let n = values.len();
    if window > n {
        return Err(Error::TooShort { needed: window, got: n });
    }
    let slopes = (0..n)
        .map(|i| {
            let s = window_start(i, window, n);
            let (t, x) = (&times[s..s + window], &values[s..s + window]);
            let w = window as f64;
            let t_mean = t.iter().sum::<f64>() / w;
            let x_mean = x.iter().sum::<f64>() / w;
            let (mut sxy, mut sxx) = (0.0, 0.0);
            for (ti, xi) in t.iter().zip(x) {
                let dt = ti - t_mean;
                sxy += dt * (xi - x_mean);
                sxx += dt * dt;
            }
            sxy / sxx
        })
        .collect();
    Ok(slopes)
}

/// `alpha * v_regression + (1 - alpha) * v_central`, elementwise.
pub fn blend_velocity(v_regression: &[f64], v_central: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if v_regression.len() != v_central.len() {
        return Err(Error::LengthMismatch {
            left: v_regression.len(),
            right: v_central.len(),
        });
    }
    Ok(v_regression
        .iter()
        .zip(v_central)
        .map(|(r, c)| alpha * r + (1.0 - alpha) * c)
        .collect())
}

/// Weights that evaluate the order-`order` least-squares polynomial through a
/// `window`-point block at position `eval_at` (0-based within the block).
pub fn savitzky_golay_weights(window: usize, order: usize, eval_at: usize) -> Result<Vec<f64>> {
    if window <= order {
        return Err(Error::Config(format!(
            "Savitzky-Golay window {window} must exceed order {order}"
        )));
    }
    let half = (window as f64 - 1.0) / 2.0;
    let scale = half.max(1.0);
    let design = DMatrix::from_fn(window, order + 1, |r, c| ((r as f64 - half) / scale).powi(c as i32));
    let gram = design.transpose() * &design;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("singular Savitzky-Golay normal matrix".into()))?;
    let z = (eval_at as f64 - half) / scale;
    let basis = DVector::from_fn(order + 1, |c, _| z.powi(c as i32));
    // weights = basis^T (A^T A)^-1 A^T
    let solved = chol.solve(&basis);
    Ok((&design * solved).iter().copied().collect())
}

/// Savitzky-Golay smoothing on a uniformly sampled series.
///
/// Edge points use the nearest full window and evaluate the fit at their own
/// offset inside it.
pub fn savitzky_golay(values: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "Savitzky-Golay window must be odd, got {window}"
        )));
    }
    if window <= order {
        return Err(Error::Config(format!(
            "Savitzky-Golay window {window} must exceed order {order}"
        )));
    }
    let n = values.len();
    if n < window {
        return Err(Error::TooShort { needed: window, got: n });
    }
    let weights: Vec<Vec<f64>> = (0..window)
        .map(|k| savitzky_golay_weights(window, order, k))
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|i| {
            let s = window_start(i, window, n);
            weights[i - s]
                .iter()
                .zip(&values[s..s + window])
                .map(|(w, v)| w * v)
                .sum()
        })
        .collect())
}

/// Reject time grids whose frame intervals deviate from uniform by more than
/// [`MAX_SAMPLING_JITTER`].
pub fn check_uniform_sampling(times: &[f64]) -> Result<()> {
    check_increasing(times)?;
    if times.len() < 2 {
        return Ok(());
    }
    let mean = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - mean).abs() > MAX_SAMPLING_JITTER * mean {
            return Err(Error::Validation(format!(
                "non-uniform sampling at index {}: interval {:.6} s vs mean {:.6} s",
                i + 1,
                w[1] - w[0],
                mean
            )));
        }
    }
    Ok(())
}

/// Smoothed velocity of one coordinate.
pub fn estimate_velocity(values: &[f64], times: &[f64], cfg: &KinematicsConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let v_reg = window_regression_slope(values, times, cfg.regression_window)?;
    let v_cd = central_difference(values, times)?;
    let blended = blend_velocity(&v_reg, &v_cd, cfg.blend_alpha)?;
    savitzky_golay(&blended, cfg.sg_window, cfg.sg_order)
}

/// Kinematics of a metric, y-up position series.
pub fn kinematics_from_positions(times: &[f64], pos: &[[f64; 2]], cfg: &KinematicsConfig) -> Result<KinematicSeries> {
    cfg.validate()?;
    if times.len() != pos.len() {
        return Err(Error::LengthMismatch {
            left: times.len(),
            right: pos.len(),
        });
    }
    if times.len() < cfg.min_samples() {
        return Err(Error::TooShort {
            needed: cfg.min_samples(),
            got: times.len(),
        });
    }
    check_uniform_sampling(times)?;
    let mut vel = vec![[0.0; 2]; pos.len()];
    let mut acc = vec![[0.0; 2]; pos.len()];
    for axis in 0..2 {
        let coord: Vec<f64> = pos.iter().map(|p| p[axis]).collect();
        let v = estimate_velocity(&coord, times, cfg)?;
        let a = central_difference(&v, times)?;
        for i in 0..pos.len() {
            vel[i][axis] = v[i];
            acc[i][axis] = a[i];
        }
    }
    Ok(KinematicSeries {
        t: times.to_vec(),
        pos: pos.to_vec(),
        vel,
        acc,
    })
}

/// Full kinematics of a trajectory, converted to meters and y-up.
///
/// Every sample must be visible; run the gate first.
pub fn estimate_kinematics(traj: &Trajectory, cfg: &KinematicsConfig) -> Result<KinematicSeries> {
    traj.validate()?;
    if !traj.all_visible() {
        return Err(Error::Validation(
            "trajectory contains invisible samples; gate it before estimating kinematics".into(),
        ));
    }
    kinematics_from_positions(&traj.times(), &traj.metric_positions(), cfg)
}
