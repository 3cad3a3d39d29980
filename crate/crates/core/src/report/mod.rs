//! Simulation driver and its on-disk outputs.
//!
//! A run writes into one directory:
//!
//! ```text
//! records.csv            one row per (condition, replication, selector)
//! summary.csv            risk-ratio distribution per (condition, selector)
//! figures/<id>.svg       violin plot per condition
//! manifest.txt           version, config digest, seed, timestamps, counts
//! ```

pub mod config;
pub mod records;
pub mod summary;

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::simulate::{run_condition, with_workers, ReplicationRecord};
use crate::types::Dataset;

pub use config::{load_config, parse_config, ExperimentPlan};
pub use records::{read_records, write_manifest, write_records, RecordRow, RunManifest, RECORDS_HEADER};
pub use summary::{summarize, violin_svg, write_summary, SummaryRow, SUMMARY_HEADER};

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<ReplicationRecord>,
    pub summary: Vec<SummaryRow>,
    pub manifest: RunManifest,
    pub figures: Vec<PathBuf>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Runs every condition of `plan` on `workers` threads and writes the
/// outputs into `out_dir`. Apart from timings and timestamps the outputs
/// do not depend on `workers`.
pub fn run_simulation(plan: &ExperimentPlan, out_dir: &Path, workers: usize) -> Result<RunOutput> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started_at = unix_now();
    let records = with_workers(workers, || -> Result<Vec<ReplicationRecord>> {
        let mut all = Vec::new();
        for cond in &plan.conditions {
            all.extend(run_condition(cond, &plan.selectors, &plan.options)?);
        }
        Ok(all)
    })??;
    write_records(&records, &out_dir.join("records.csv"))?;
    let summary = summarize(&records)?;
    write_summary(&summary, &out_dir.join("summary.csv"))?;
    let figures = summary::write_figures(&records, &out_dir.join("figures"))?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: plan.digest(),
        master_seed: plan.seed,
        started_at,
        finished_at: unix_now(),
        condition_count: plan.conditions.len(),
        record_count: records.len(),
    };
    write_manifest(&manifest, &out_dir.join("manifest.txt"))?;
    Ok(RunOutput {
        records,
        summary,
        manifest,
        figures,
    })
}

/// Reads a numeric CSV with a header row; the first column is the response
/// and the remaining columns the predictors.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bad = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => bad(format!("{other:?}")),
    })?;
    let width = reader.headers().map_err(|e| bad(e.to_string()))?.len();
    if width < 2 {
        return Err(bad("need a response column and at least one predictor".into()));
    }
    let mut y = Vec::new();
    let mut x = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {}, column {}: `{field}` is not a number", i + 2, j + 1)))?;
            if j == 0 {
                y.push(v);
            } else {
                x.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(bad("no data rows".into()));
    }
    let n = y.len();
    Dataset::new(DVector::from_vec(y), DMatrix::from_row_slice(n, width - 1, &x))
}
