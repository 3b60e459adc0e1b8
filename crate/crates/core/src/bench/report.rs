//! Results store and leaderboard artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::batch::{summarize, RunResult, TrajectoryScore};
use crate::error::{Error, Result};
use crate::invariants::component_columns;
use crate::trajectory::ExperimentKind;

/// Store a run as `<dir>/<run_id>.json`. Existing runs are never replaced.
pub fn save_result(dir: &Path, result: &RunResult) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.json", result.manifest.run_id));
    let mut text = serde_json::to_string_pretty(result)?;
    text.push('\n');
    let mut file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&path)
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::AlreadyExists => Error::Config(format!(
                "run {} already exists in {}",
                result.manifest.run_id,
                dir.display()
            )),
            _ => e.into(),
        })?;
    std::io::Write::write_all(&mut file, text.as_bytes())?;
    Ok(path)
}

/// Every stored run, ordered by run id.
pub fn load_results(dir: &Path) -> Result<Vec<RunResult>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Schema {
                path: p.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })
        })
        .collect()
}

/// One leaderboard row: all runs of one source for one experiment, pooled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub source: String,
    pub trajectories: usize,
    pub discard_rate: f64,
    pub dynamical_score: f64,
    pub physical_invariance: f64,
    /// Same order as [`Table::columns`].
    pub components: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub experiment: ExperimentKind,
    /// Per-invariant column labels; empty when the experiment has one
    /// invariant.
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
}

/// Per-experiment tables, rows ordered by source label. Means are
/// recomputed from the per-trajectory rows.
pub fn tables(results: &[RunResult]) -> Result<Vec<Table>> {
    let mut groups: BTreeMap<(usize, String), (&RunResult, Vec<TrajectoryScore>)> = BTreeMap::new();
    for r in results {
        let exp_index = ExperimentKind::ALL
            .iter()
            .position(|&k| k == r.manifest.experiment)
            .unwrap_or(usize::MAX);
        groups
            .entry((exp_index, r.manifest.source.clone()))
            .or_insert_with(|| (r, Vec::new()))
            .1
            .extend(r.trajectories.iter().cloned());
    }
    let mut out: Vec<Table> = Vec::new();
    for ((_, source), (first, rows)) in groups {
        let kind = first.manifest.experiment;
        let summary = summarize(&first.manifest, &rows)?;
        let cols = component_columns(kind);
        let components = cols
            .iter()
            .map(|k| {
                summary
                    .invariants
                    .iter()
                    .find(|c| c.invariant == *k)
                    .map_or(0.0, |c| c.score)
            })
            .collect();
        let row = TableRow {
            source,
            trajectories: rows.len(),
            discard_rate: summary.discard_rate,
            dynamical_score: summary.dynamical_score,
            physical_invariance: summary.physical_invariance,
            components,
        };
        match out.last_mut() {
            Some(t) if t.experiment == kind => t.rows.push(row),
            _ => out.push(Table {
                experiment: kind,
                columns: cols.iter().map(|k| k.label().to_owned()).collect(),
                rows: vec![row],
            }),
        }
    }
    Ok(out)
}

fn header(t: &Table) -> Vec<String> {
    let mut h: Vec<String> = ["Source", "Discard Rate", "Dynamical", "Physical Invariance"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(t.columns.iter().cloned());
    h
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn table_csv(t: &Table) -> String {
    let mut out = header(t).iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in &t.rows {
        let _ = write!(
            out,
            "{},{},{},{}",
            csv_field(&r.source),
            r.discard_rate,
            r.dynamical_score,
            r.physical_invariance
        );
        for c in &r.components {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Aligned plain-text table with three decimals.
pub fn table_text(t: &Table) -> String {
    let head = header(t);
    let cells: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|r| {
            let mut c = vec![
                r.source.clone(),
                format!("{:.3}", r.discard_rate),
                format!("{:.3}", r.dynamical_score),
                format!("{:.3}", r.physical_invariance),
            ];
            c.extend(r.components.iter().map(|v| format!("{v:.3}")));
            c
        })
        .collect();
    let widths: Vec<usize> = (0..head.len())
        .map(|i| {
            cells
                .iter()
                .map(|c| c[i].len())
                .chain([head[i].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |c: &[String]| {
        c.iter()
            .enumerate()
            .map(|(i, s)| {
                if i == 0 {
                    format!("{s:<w$}", w = widths[i])
                } else {
                    format!("{s:>w$}", w = widths[i])
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_owned()
    };
    let mut out = format!("{}\n", t.experiment);
    out.push_str(&line(&head));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for c in &cells {
        out.push_str(&line(c));
        out.push('\n');
    }
    out
}

/// One point per source: mean Physical Invariance against mean Dynamical
/// score, averaged over the source's table rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub source: String,
    pub physical_invariance: f64,
    pub dynamical_score: f64,
}

pub fn scatter(tables: &[Table]) -> Vec<ScatterPoint> {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for t in tables {
        for r in &t.rows {
            let e = acc.entry(&r.source).or_default();
            e.0 += r.physical_invariance;
            e.1 += r.dynamical_score;
            e.2 += 1;
        }
    }
    acc.into_iter()
        .map(|(s, (p, d, n))| ScatterPoint {
            source: s.to_owned(),
            physical_invariance: p / n as f64,
            dynamical_score: d / n as f64,
        })
        .collect()
}

pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut out = String::from("source,physical_invariance,dynamical_score\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            csv_field(&p.source),
            p.physical_invariance,
            p.dynamical_score
        );
    }
    out
}

/// Write every artifact into `dir`: `<experiment>.csv`, `<experiment>.txt`,
/// `scatter.csv` and `trajectories.json`. Returns the written paths.
pub fn write_artifacts(dir: &Path, results: &[RunResult]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let tabs = tables(results)?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, text)?;
        written.push(p);
        Ok(())
    };
    for t in &tabs {
        put(format!("{}.csv", t.experiment), table_csv(t))?;
        put(format!("{}.txt", t.experiment), table_text(t))?;
    }
    put("scatter.csv".into(), scatter_csv(&scatter(&tabs)))?;
    put(
        "trajectories.json".into(),
        serde_json::to_string_pretty(results)? + "\n",
    )?;
    Ok(written)
}
