//! Gate, invariance and PINN scoring over a batch of trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::RunManifest;
use crate::dynscore::fit_trajectory;
use crate::error::{Error, Result};
use crate::gate::{discard_rate, gate, DiscardCounts, GateReason, GateVerdict};
use crate::invariants::{invariants_for, physical_invariance, ComponentScore};
use crate::trajectory::Trajectory;

/// Scores of one trajectory. Discarded or failed trajectories carry zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryScore {
    pub id: String,
    pub verdict: GateVerdict,
    pub invariants: Vec<ComponentScore>,
    pub physical_invariance: f64,
    pub nmse_per_coordinate: Vec<f64>,
    pub nmse: Option<f64>,
    pub dynamical_score: f64,
    /// Invariance scoring or fitting failure, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Batch-level numbers; discarded and failed trajectories count as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub counts: DiscardCounts,
    pub discard_rate: f64,
    pub failed: usize,
    pub dynamical_score: f64,
    pub physical_invariance: f64,
    pub invariants: Vec<ComponentScore>,
}

/// Everything persisted for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub trajectories: Vec<TrajectoryScore>,
    pub summary: BatchSummary,
}

fn zero_components(m: &RunManifest) -> Vec<ComponentScore> {
    invariants_for(m.experiment)
        .iter()
        .map(|&invariant| ComponentScore { invariant, score: 0.0 })
        .collect()
}

/// Gate and score a single trajectory.
pub fn score_trajectory(m: &RunManifest, id: &str, traj: &Trajectory) -> TrajectoryScore {
    let discarded = |verdict, error| TrajectoryScore {
        id: id.to_owned(),
        verdict,
        invariants: zero_components(m),
        physical_invariance: 0.0,
        nmse_per_coordinate: Vec::new(),
        nmse: None,
        dynamical_score: 0.0,
        error,
    };
    if traj.experiment != m.experiment {
        let msg = format!(
            "trajectory is {} but the manifest scores {}",
            traj.experiment, m.experiment
        );
        return discarded(GateVerdict::from_reason(GateReason::Kept), Some(msg));
    }
    let verdict = match gate(traj, &m.gate) {
        Ok(v) => v,
        Err(e) => return discarded(GateVerdict::from_reason(GateReason::Kept), Some(e.to_string())),
    };
    if !verdict.kept {
        return discarded(verdict, None);
    }

    let mut out = discarded(verdict, None);
    let mut errors = Vec::new();
    match physical_invariance(traj, &m.spec, &m.kinematics, &m.score, m.reference) {
        Ok(r) => {
            out.invariants = r.components;
            out.physical_invariance = r.aggregate;
        }
        Err(e) => errors.push(format!("invariance: {e}")),
    }
    match fit_trajectory(traj, &m.spec, &m.kinematics, &m.pinn) {
        Ok(fit) => {
            out.nmse_per_coordinate = fit.nmse_per_coordinate;
            out.nmse = Some(fit.nmse);
            out.dynamical_score = fit.dynamical_score;
        }
        Err(e) => errors.push(format!("dynamical: {e}")),
    }
    if !errors.is_empty() {
        out.error = Some(errors.join("; "));
    }
    out
}

/// Batch means over every trajectory, recomputed from per-trajectory rows.
pub fn summarize(m: &RunManifest, rows: &[TrajectoryScore]) -> Result<BatchSummary> {
    let verdicts: Vec<GateVerdict> = rows.iter().map(|r| r.verdict).collect();
    let (rate, counts) = discard_rate(&verdicts)?;
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&TrajectoryScore) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let invariants = invariants_for(m.experiment)
        .iter()
        .map(|&invariant| ComponentScore {
            invariant,
            score: mean(&|r| {
                r.invariants
                    .iter()
                    .find(|c| c.invariant == invariant)
                    .map_or(0.0, |c| c.score)
            }),
        })
        .collect();
    Ok(BatchSummary {
        counts,
        discard_rate: rate,
        failed: rows.iter().filter(|r| r.error.is_some()).count(),
        dynamical_score: mean(&|r| r.dynamical_score),
        physical_invariance: mean(&|r| r.physical_invariance),
        invariants,
    })
}

/// Score a batch with up to `workers` threads (`None`: one per core).
/// Rows keep input order; per-trajectory failures are recorded, not raised.
pub fn run_batch(m: &RunManifest, batch: &[(String, Trajectory)], workers: Option<usize>) -> Result<RunResult> {
    m.validate()?;
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<TrajectoryScore> = pool.install(|| {
        batch
            .par_iter()
            .map(|(id, traj)| score_trajectory(m, id, traj))
            .collect()
    });
    let summary = summarize(m, &rows)?;
    Ok(RunResult {
        manifest: m.clone(),
        trajectories: rows,
        summary,
    })
}
