//! Trajectory files: one CSV of samples plus a JSON sidecar of metadata.
//!
//! ```text
//! frame,t,x,y,visible,object_count[,joint_x,joint_y]
//! ```
//!
//! The sidecar `<stem>.json` sits next to `<stem>.csv` and holds `unit`,
//! `pixels_per_meter`, `y_axis`, `fps`, `experiment` and an optional
//! `pivot`. A directory of such pairs is a batch.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{ExperimentKind, Sample, Trajectory, Unit, YAxis};

const COLUMNS: [&str; 6] = ["frame", "t", "x", "y", "visible", "object_count"];
const JOINT_COLUMNS: [&str; 2] = ["joint_x", "joint_y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub unit: Unit,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels_per_meter: Option<f64>,
    /// Defaults to `down` for pixel data and `up` for metric data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_axis: Option<YAxis>,
    pub fps: f64,
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pivot: Option<[f64; 2]>,
}

impl Sidecar {
    fn of(traj: &Trajectory) -> Self {
        Sidecar {
            unit: traj.unit,
            pixels_per_meter: traj.pixels_per_meter,
            y_axis: Some(traj.y_axis),
            fps: traj.fps,
            experiment: traj.experiment,
            pivot: traj.pivot,
        }
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Read one trajectory from its CSV and sidecar.
pub fn read_trajectory(csv_path: &Path) -> Result<Trajectory> {
    let side_path = sidecar_path(csv_path);
    let side_text =
        std::fs::read_to_string(&side_path).map_err(|e| schema(&side_path, 0, format!("cannot read sidecar: {e}")))?;
    let side: Sidecar = serde_json::from_str(&side_text).map_err(|e| schema(&side_path, e.line(), e.to_string()))?;
    let text = std::fs::read_to_string(csv_path)?;
    parse_csv(csv_path, &text, side)
}

fn parse_csv(path: &Path, text: &str, side: Sidecar) -> Result<Trajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| schema(path, 1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let with_joint = if header == COLUMNS {
        false
    } else if header.len() == 8 && header[..6] == COLUMNS && header[6..] == JOINT_COLUMNS {
        true
    } else {
        return Err(schema(
            path,
            1,
            format!(
                "header must be `{}` optionally followed by `{}`, got `{}`",
                COLUMNS.join(","),
                JOINT_COLUMNS.join(","),
                header.join(",")
            ),
        ));
    };

    let mut samples = Vec::new();
    let mut joint = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            schema(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| -> Result<f64> {
            let raw = &record[i];
            let v: f64 = raw.parse().map_err(|_| {
                schema(
                    path,
                    line,
                    format!("field `{}`: cannot parse {raw:?} as a number", header[i]),
                )
            })?;
            if !v.is_finite() {
                return Err(schema(
                    path,
                    line,
                    format!("field `{}`: value must be finite", header[i]),
                ));
            }
            Ok(v)
        };
        let int = |i: usize| -> Result<u64> {
            record[i].parse().map_err(|_| {
                schema(
                    path,
                    line,
                    format!(
                        "field `{}`: expected a non-negative integer, got {:?}",
                        header[i], &record[i]
                    ),
                )
            })
        };
        let frame = int(0)?;
        if frame != samples.len() as u64 {
            return Err(schema(
                path,
                line,
                format!("field `frame`: expected {}, got {frame}", samples.len()),
            ));
        }
        let visible = match &record[4] {
            "0" => false,
            "1" => true,
            other => {
                return Err(schema(
                    path,
                    line,
                    format!("field `visible`: expected 0 or 1, got {other:?}"),
                ))
            }
        };
        let object_count =
            u32::try_from(int(5)?).map_err(|_| schema(path, line, "field `object_count`: value too large"))?;
        let sample = Sample {
            t: field(1)?,
            x: field(2)?,
            y: field(3)?,
            visible,
            object_count,
        };
        if visible && object_count == 0 {
            return Err(schema(
                path,
                line,
                "field `object_count`: visible frame with zero objects",
            ));
        }
        if let Some(prev) = samples.last() {
            let prev: &Sample = prev;
            if !(sample.t > prev.t) {
                return Err(schema(
                    path,
                    line,
                    format!(
                        "field `t`: timestamps must strictly increase ({} after {}, frame {frame})",
                        sample.t, prev.t
                    ),
                ));
            }
        }
        samples.push(sample);
        if with_joint {
            joint.push([field(6)?, field(7)?]);
        }
    }
    if samples.is_empty() {
        return Err(schema(path, 2, "no samples"));
    }
    let traj = Trajectory {
        samples,
        joint: with_joint.then_some(joint),
        fps: side.fps,
        unit: side.unit,
        pixels_per_meter: side.pixels_per_meter,
        y_axis: side.y_axis.unwrap_or(match side.unit {
            Unit::Pixels => YAxis::Down,
            Unit::Meters => YAxis::Up,
        }),
        experiment: side.experiment,
        pivot: side.pivot,
    };
    traj.validate()
        .map_err(|e| schema(&sidecar_path(path), 0, e.to_string()))?;
    Ok(traj)
}

/// CSV text of a trajectory. Numbers use the shortest representation that
/// parses back to the same `f64`, so write/read/write is bit-identical.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = COLUMNS.join(",");
    if traj.joint.is_some() {
        out.push(',');
        out.push_str(&JOINT_COLUMNS.join(","));
    }
    out.push('\n');
    for (i, s) in traj.samples.iter().enumerate() {
        let _ = write!(
            out,
            "{i},{},{},{},{},{}",
            s.t,
            s.x,
            s.y,
            u8::from(s.visible),
            s.object_count
        );
        if let Some(j) = &traj.joint {
            let _ = write!(out, ",{},{}", j[i][0], j[i][1]);
        }
        out.push('\n');
    }
    out
}

/// Write `<dir>/<stem>.csv` and its sidecar; returns the CSV path.
pub fn write_trajectory(traj: &Trajectory, dir: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    std::fs::write(&csv_path, trajectory_csv(traj))?;
    let mut side = serde_json::to_string_pretty(&Sidecar::of(traj))?;
    side.push('\n');
    std::fs::write(sidecar_path(&csv_path), side)?;
    Ok(csv_path)
}

/// Outcome of reading one file of a batch.
#[derive(Debug)]
pub struct Ingested {
    /// File stem, used as the trajectory id.
    pub id: String,
    pub path: PathBuf,
    pub trajectory: Result<Trajectory>,
}

/// Read every `*.csv` in `dir`, sorted by file name.
pub fn ingest_dir(dir: &Path) -> Result<Vec<Ingested>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|path| Ingested {
            id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            trajectory: read_trajectory(&path),
            path,
        })
        .collect())
}

/// Read a single file or a directory batch.
pub fn ingest(path: &Path) -> Result<Vec<Ingested>> {
    if path.is_dir() {
        ingest_dir(path)
    } else {
        Ok(vec![Ingested {
            id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            trajectory: read_trajectory(path),
            path: path.to_path_buf(),
        }])
    }
}
