//! Run manifest: which experiment a batch belongs to and every knob of the
//! scoring pipeline, with defaults filled in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynscore::PinnConfig;
use crate::error::{Error, Result};
use crate::gate::GateConfig;
use crate::invariants::ScoreConfig;
use crate::kinematics::KinematicsConfig;
use crate::trajectory::{ExperimentKind, ExperimentSpec};

/// Fully resolved manifest. Serializing it yields every value actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub experiment: ExperimentKind,
    /// Free-form label of where the trajectories came from (model, prompt,
    /// conditioning); one table row per label.
    pub source: String,
    pub spec: ExperimentSpec,
    pub kinematics: KinematicsConfig,
    pub score: ScoreConfig,
    pub pinn: PinnConfig,
    pub gate: GateConfig,
    /// Reference (real-world) footage uses the shorter scoring window.
    pub reference: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    run_id: String,
    experiment: ExperimentKind,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    spec: Option<serde_json::Value>,
    #[serde(default)]
    kinematics: KinematicsConfig,
    #[serde(default)]
    score: ScoreConfig,
    #[serde(default)]
    pinn: PinnConfig,
    #[serde(default)]
    gate: GateConfig,
    #[serde(default)]
    reference: bool,
}

impl RunManifest {
    /// Manifest with every optional field at its default.
    pub fn new(run_id: impl Into<String>, experiment: ExperimentKind) -> Self {
        RunManifest {
            run_id: run_id.into(),
            experiment,
            source: "unlabeled".into(),
            spec: ExperimentSpec::new(experiment),
            kinematics: KinematicsConfig::default(),
            score: ScoreConfig::default(),
            pinn: PinnConfig::default(),
            gate: GateConfig::default(),
            reference: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text)?;
        let spec = match raw.spec {
            None => ExperimentSpec::new(raw.experiment),
            Some(mut v) => {
                if let Some(obj) = v.as_object_mut() {
                    obj.entry("kind")
                        .or_insert_with(|| serde_json::to_value(raw.experiment).unwrap_or_default());
                }
                serde_json::from_value(v)?
            }
        };
        let m = RunManifest {
            run_id: raw.run_id,
            experiment: raw.experiment,
            source: raw.source.unwrap_or_else(|| "unlabeled".into()),
            spec,
            kinematics: raw.kinematics,
            score: raw.score,
            pinn: raw.pinn,
            gate: raw.gate,
            reference: raw.reference,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Schema {
                path: path.display().to_string(),
                line: j.line(),
                message: j.to_string(),
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || self.run_id.starts_with('.')
        {
            return Err(Error::Config(format!(
                "run_id {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                self.run_id
            )));
        }
        if self.spec.kind != self.experiment {
            return Err(Error::Config(format!(
                "spec kind {} does not match experiment {}",
                self.spec.kind, self.experiment
            )));
        }
        if !(self.spec.g > 0.0 && self.spec.g.is_finite()) {
            return Err(Error::Config(format!("g must be positive, got {}", self.spec.g)));
        }
        self.kinematics.validate()?;
        self.score.validate()?;
        self.pinn.validate()?;
        self.gate.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_manifest_resolves_defaults() {
        let m = RunManifest::from_json(r#"{"run_id": "r1", "experiment": "projectile"}"#).unwrap();
        assert_eq!(m, RunManifest::new("r1", ExperimentKind::Projectile));
    }

    #[test]
    fn partial_sections_are_merged() {
        let m = RunManifest::from_json(
            r#"{"run_id": "r2", "experiment": "holonomic_pendulum",
                "spec": {"length_1": 0.7}, "pinn": {"iterations": 10}, "reference": true}"#,
        )
        .unwrap();
        assert_eq!(m.spec.kind, ExperimentKind::HolonomicPendulum);
        assert_eq!(m.spec.length_1, Some(0.7));
        assert_eq!(m.pinn.iterations, 10);
        assert_eq!(m.pinn.hidden_width, 20);
        assert!(m.reference);
    }

    #[test]
    fn invalid_manifests_rejected() {
        for text in [
            r#"{"experiment": "projectile"}"#,
            r#"{"run_id": "a/b", "experiment": "projectile"}"#,
            r#"{"run_id": "x", "experiment": "rocket"}"#,
            r#"{"run_id": "x", "experiment": "projectile", "spec": {"kind": "falling_ball"}}"#,
            r#"{"run_id": "x", "experiment": "projectile", "pinn": {"iterations": 0}}"#,
            r#"{"run_id": "x", "experiment": "projectile", "typo": 1}"#,
        ] {
            assert!(RunManifest::from_json(text).is_err(), "{text}");
        }
    }
}
