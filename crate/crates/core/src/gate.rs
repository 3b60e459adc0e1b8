//! Three-stage discard filter and batch discard rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    pub min_visible_fraction: f64,
    pub max_multi_object_fraction: f64,
    /// Minimum path length as a fraction of the frame diagonal.
    pub stillness_path_ratio: f64,
    /// Frame diagonal in the trajectory's native units.
    pub frame_diagonal: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        GateConfig {
            min_visible_fraction: 0.95,
            max_multi_object_fraction: 0.2,
            stillness_path_ratio: 0.05,
            frame_diagonal: 2.0,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_visible_fraction > 0.0 && self.min_visible_fraction <= 1.0) {
            return Err(Error::Config("min_visible_fraction must lie in (0, 1]".into()));
        }
        if !(self.max_multi_object_fraction >= 0.0 && self.max_multi_object_fraction < 1.0) {
            return Err(Error::Config("max_multi_object_fraction must lie in [0, 1)".into()));
        }
        if !(self.stillness_path_ratio > 0.0 && self.frame_diagonal > 0.0) {
            return Err(Error::Config(
                "stillness_path_ratio and frame_diagonal must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateReason {
    Kept,
    Disappear,
    Duplicate,
    Still,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub kept: bool,
    pub reason: GateReason,
}

impl GateVerdict {
    pub fn from_reason(reason: GateReason) -> Self {
        GateVerdict {
            kept: reason == GateReason::Kept,
            reason,
        }
    }
}

/// Classify a trajectory; the first failing stage wins.
pub fn gate(traj: &Trajectory, cfg: &GateConfig) -> Result<GateVerdict> {
    cfg.validate()?;
    traj.validate()?;
    let n = traj.len() as f64;

    let visible = traj.samples.iter().filter(|s| s.visible).count() as f64;
    if visible / n < cfg.min_visible_fraction {
        return Ok(GateVerdict::from_reason(GateReason::Disappear));
    }

    let multi = traj.samples.iter().filter(|s| s.object_count > 1).count() as f64;
    if multi / n > cfg.max_multi_object_fraction {
        return Ok(GateVerdict::from_reason(GateReason::Duplicate));
    }

    if traj.path_length() / cfg.frame_diagonal < cfg.stillness_path_ratio {
        return Ok(GateVerdict::from_reason(GateReason::Still));
    }
    Ok(GateVerdict::from_reason(GateReason::Kept))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardCounts {
    pub total: usize,
    pub disappear: usize,
    pub duplicate: usize,
    pub still: usize,
}

impl DiscardCounts {
    pub fn discarded(&self) -> usize {
        self.disappear + self.duplicate + self.still
    }
}

/// `(N_disappear + N_duplicate + N_still) / N_total`.
pub fn discard_rate(verdicts: &[GateVerdict]) -> Result<(f64, DiscardCounts)> {
    if verdicts.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut counts = DiscardCounts {
        total: verdicts.len(),
        ..Default::default()
    };
    for v in verdicts {
        match v.reason {
            GateReason::Kept => {}
            GateReason::Disappear => counts.disappear += 1,
            GateReason::Duplicate => counts.duplicate += 1,
            GateReason::Still => counts.still += 1,
        }
    }
    Ok((counts.discarded() as f64 / counts.total as f64, counts))
}
