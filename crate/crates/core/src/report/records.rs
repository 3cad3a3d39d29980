//! `records.csv` and its `manifest.txt` sidecar.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulate::{ConsistencyRow, ReplicationRecord};

/// Frozen column layout of `records.csv`.
pub const RECORDS_HEADER: &str =
    "condition_id,n,p,rho,alpha,snr,noise,rep,selector,t_hat,risk_ratio,excess_risk,wall_time_ms";

/// Shortest exact form: 17 significant digits round-trips any `f64`.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn record_fields(r: &ReplicationRecord) -> [String; 13] {
    let c = &r.condition;
    [
        c.id(),
        c.n.to_string(),
        c.p.to_string(),
        fmt_real(c.rho),
        fmt_real(c.alpha),
        fmt_real(c.snr),
        c.noise_kind.to_string(),
        r.rep_index.to_string(),
        r.selector.to_string(),
        fmt_real(r.t_hat),
        fmt_real(r.risk_ratio),
        fmt_real(r.excess_risk),
        fmt_real(r.wall_time_ms),
    ]
}

/// Writes one CSV row per record under [`RECORDS_HEADER`].
pub fn write_records(records: &[ReplicationRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(RECORDS_HEADER.split(','))
        .map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record(record_fields(r)).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One parsed row of `records.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub condition_id: String,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub noise: String,
    pub rep: usize,
    pub selector: String,
    pub t_hat: f64,
    pub risk_ratio: f64,
    pub excess_risk: f64,
    pub wall_time_ms: f64,
}

/// Reads `records.csv` back, checking the header.
pub fn read_records(path: &Path) -> Result<Vec<RecordRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>().join(",") != RECORDS_HEADER {
        return Err(Error::Data {
            path: path.to_path_buf(),
            message: "unexpected header".into(),
        });
    }
    let bad = |line: usize, what: &str| Error::Data {
        path: path.to_path_buf(),
        message: format!("row {line}: cannot parse {what}"),
    };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let real = |j: usize, what: &str| rec[j].parse::<f64>().map_err(|_| bad(i + 2, what));
        let int = |j: usize, what: &str| rec[j].parse::<usize>().map_err(|_| bad(i + 2, what));
        rows.push(RecordRow {
            condition_id: rec[0].to_string(),
            n: int(1, "n")?,
            p: int(2, "p")?,
            rho: real(3, "rho")?,
            alpha: real(4, "alpha")?,
            snr: real(5, "snr")?,
            noise: rec[6].to_string(),
            rep: int(7, "rep")?,
            selector: rec[8].to_string(),
            t_hat: real(9, "t_hat")?,
            risk_ratio: real(10, "risk_ratio")?,
            excess_risk: real(11, "excess_risk")?,
            wall_time_ms: real(12, "wall_time_ms")?,
        });
    }
    Ok(rows)
}

/// Provenance of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub master_seed: u64,
    /// Seconds since the Unix epoch.
    pub started_at: f64,
    pub finished_at: f64,
    pub condition_count: usize,
    pub record_count: usize,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tool_version={}", self.tool_version);
        let _ = writeln!(s, "config_digest={}", self.config_digest);
        let _ = writeln!(s, "master_seed={}", self.master_seed);
        let _ = writeln!(s, "started_at={:.3}", self.started_at);
        let _ = writeln!(s, "finished_at={:.3}", self.finished_at);
        let _ = writeln!(s, "condition_count={}", self.condition_count);
        let _ = writeln!(s, "record_count={}", self.record_count);
        s
    }
}

/// Writes the manifest as `key=value` lines.
pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    std::fs::write(path, manifest.render()).map_err(|e| Error::io(path, e))
}

/// Parses `key=value` lines.
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Header of the risk-consistency table.
pub const CONSISTENCY_HEADER: &str =
    "n,p,b_n,a_n,t_n,median_excess,mean_excess,exceed_fraction,failures";

/// Writes the risk-consistency table.
pub fn write_consistency(rows: &[ConsistencyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CONSISTENCY_HEADER.split(','))
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.p.to_string(),
            r.b_n.to_string(),
            fmt_real(r.a_n),
            fmt_real(r.t_n),
            fmt_real(r.median_excess),
            fmt_real(r.mean_excess),
            fmt_real(r.exceed_fraction),
            r.failures.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
