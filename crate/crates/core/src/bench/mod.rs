//! Batch runner: trajectory files in, scored runs and leaderboard tables out.

pub mod batch;
pub mod io;
pub mod manifest;
pub mod report;

pub use batch::{run_batch, score_trajectory, summarize, BatchSummary, RunResult, TrajectoryScore};
pub use io::{ingest, ingest_dir, read_trajectory, write_trajectory, Ingested, Sidecar};
pub use manifest::RunManifest;
pub use report::{load_results, save_result, scatter, tables, write_artifacts, ScatterPoint, Table, TableRow};
