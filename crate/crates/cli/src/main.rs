//! `physinv`: simulate trajectories, gate and score batches, and build
//! leaderboard reports.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use physinv_core::bench::{self, report, RunManifest};
use physinv_core::gate::{discard_rate, gate};
use physinv_core::simulate::{corrupt, simulate, Corruption, SimSpec};
use physinv_core::{Error, Trajectory};

#[derive(Parser)]
#[command(
    name = "physinv",
    version,
    about = "Physics-conformance scoring for object trajectories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories from a JSON spec (object or array of objects).
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Corruption to apply: inline JSON or a path to a JSON file.
        #[arg(long)]
        corrupt: Option<String>,
    },
    /// Gate and score every trajectory in a directory, storing one run.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to one per core.
        #[arg(long, env = "PHYSINV_WORKERS")]
        workers: Option<usize>,
    },
    /// Print gate verdicts and the discard rate without scoring.
    Gate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Summarize stored runs as leaderboard tables.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write every artifact (tables, scatter data, JSON) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { spec, out, corrupt } => cmd_simulate(&spec, &out, corrupt.as_deref()),
        Command::Score {
            manifest,
            input,
            out,
            workers,
        } => cmd_score(&manifest, &input, &out, workers),
        Command::Gate { manifest, input } => cmd_gate(&manifest, &input),
        Command::Report { results, format, out } => cmd_report(&results, format, out.as_deref()),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// 2 for invalid input, 1 for anything else.
fn exit_code(e: &anyhow::Error) -> ExitCode {
    let invalid = e.chain().any(|c| {
        matches!(
            c.downcast_ref::<Error>(),
            Some(
                Error::Validation(_)
                    | Error::Schema { .. }
                    | Error::Config(_)
                    | Error::Ordering { .. }
                    | Error::Json(_)
                    | Error::LengthMismatch { .. }
                    | Error::EmptyBatch
            )
        ) || c.downcast_ref::<serde_json::Error>().is_some()
            || c.downcast_ref::<InvalidInput>().is_some()
    });
    ExitCode::from(if invalid { 2 } else { 1 })
}

#[derive(Debug)]
struct InvalidInput(String);

impl std::fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InvalidInput {}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_simulate(spec_path: &Path, out: &Path, corruption: Option<&str>) -> Result<()> {
    let jobs = match read_json(spec_path)? {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    let corruption: Option<Corruption> = match corruption {
        None => None,
        Some(arg) => {
            let text = if Path::new(arg).is_file() {
                std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?
            } else {
                arg.to_owned()
            };
            Some(serde_json::from_str(&text).context("parsing corruption spec")?)
        }
    };
    let mut written = 0;
    for (j, mut job) in jobs.into_iter().enumerate() {
        let fields = job
            .as_object_mut()
            .ok_or_else(|| InvalidInput(format!("spec entry {j} is not an object")))?;
        let name = fields.remove("name").and_then(|v| v.as_str().map(str::to_owned));
        let count = match fields.remove("count") {
            None => 1,
            Some(v) => v
                .as_u64()
                .filter(|&c| c > 0)
                .ok_or_else(|| InvalidInput(format!("spec entry {j}: count must be a positive integer")))?,
        };
        let base = SimSpec::from_value(job).with_context(|| format!("spec entry {j}"))?;
        let name = name.unwrap_or_else(|| base.kind.to_string());
        for i in 0..count {
            let spec = SimSpec {
                seed: base.seed.wrapping_add(i),
                ..base.clone()
            };
            let mut traj: Trajectory = simulate(&spec).with_context(|| format!("simulating {name} #{i}"))?;
            if let Some(c) = &corruption {
                traj = corrupt(&traj, c, spec.seed).with_context(|| format!("corrupting {name} #{i}"))?;
            }
            let stem = if count == 1 {
                name.clone()
            } else {
                format!("{name}_{i:03}")
            };
            bench::write_trajectory(&traj, out, &stem)?;
            written += 1;
        }
    }
    println!("wrote {written} trajectories to {}", out.display());
    Ok(())
}

fn load_batch(input: &Path) -> Result<Vec<(String, Trajectory)>> {
    let files = bench::ingest(input).with_context(|| format!("reading {}", input.display()))?;
    if files.is_empty() {
        bail!(InvalidInput(format!("no trajectory files in {}", input.display())));
    }
    let mut batch = Vec::new();
    let mut bad = 0;
    for f in files {
        match f.trajectory {
            Ok(t) => batch.push((f.id, t)),
            Err(e) => {
                eprintln!("invalid: {e}");
                bad += 1;
            }
        }
    }
    if bad > 0 {
        bail!(InvalidInput(format!("{bad} invalid trajectory file(s)")));
    }
    Ok(batch)
}

fn cmd_score(manifest: &Path, input: &Path, out: &Path, workers: Option<usize>) -> Result<()> {
    let m = RunManifest::from_path(manifest)?;
    if workers == Some(0) {
        bail!(InvalidInput("worker count must be positive".into()));
    }
    let batch = load_batch(input)?;
    let result = bench::run_batch(&m, &batch, workers)?;
    let path = bench::save_result(out, &result)?;
    let s = &result.summary;
    for row in result.trajectories.iter().filter(|r| r.error.is_some()) {
        eprintln!("warning: {}: {}", row.id, row.error.as_deref().unwrap_or_default());
    }
    println!(
        "{}: {} trajectories, discard rate {:.3}, dynamical {:.3}, physical invariance {:.3} -> {}",
        m.run_id,
        s.counts.total,
        s.discard_rate,
        s.dynamical_score,
        s.physical_invariance,
        path.display()
    );
    Ok(())
}

fn cmd_gate(manifest: &Path, input: &Path) -> Result<()> {
    let m = RunManifest::from_path(manifest)?;
    let batch = load_batch(input)?;
    let mut verdicts = Vec::new();
    for (id, traj) in &batch {
        let v = gate(traj, &m.gate).with_context(|| id.clone())?;
        println!("{id}\t{}", serde_json::to_value(v.reason)?.as_str().unwrap_or_default());
        verdicts.push(v);
    }
    let (rate, c) = discard_rate(&verdicts)?;
    println!(
        "discard rate {rate:.3} ({} of {}: disappear {}, duplicate {}, still {})",
        c.discarded(),
        c.total,
        c.disappear,
        c.duplicate,
        c.still
    );
    Ok(())
}

fn cmd_report(results: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let runs = report::load_results(results).with_context(|| format!("reading {}", results.display()))?;
    if runs.is_empty() {
        bail!(InvalidInput(format!("no stored runs in {}", results.display())));
    }
    let tables = report::tables(&runs)?;
    let points = report::scatter(&tables);
    match format {
        Format::Csv => {
            for t in &tables {
                println!("# {}\n{}", t.experiment, report::table_csv(t));
            }
            print!("# scatter\n{}", report::scatter_csv(&points));
        }
        Format::Text => {
            for t in &tables {
                println!("{}", report::table_text(t));
            }
            println!("source: physical invariance / dynamical");
            for p in &points {
                println!(
                    "  {}: {:.3} / {:.3}",
                    p.source, p.physical_invariance, p.dynamical_score
                );
            }
        }
        Format::Json => {
            let doc = serde_json::json!({ "tables": tables, "scatter": points, "runs": runs });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
    }
    if let Some(dir) = out {
        report::write_artifacts(dir, &runs)?;
    }
    Ok(())
}
