//! Result serialization: scan tables as CSV with a fixed header, reports as
//! JSON with stable key order, and the run manifest.
//!
//! Result files carry no timestamps, so identical configs produce
//! byte-identical outputs; timing lives only in the manifest.

use crate::experiments::ScanRecord;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("empty record list")]
    Empty,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("output file {0} failed its round-trip check: {1}")]
    RoundTrip(String, String),
}

pub const SCAN_CSV_HEADER: &str = "t,R,value,trace_norm,envelope_trace,envelope_expect";

fn fmt17(x: f64) -> String {
    format!("{:.16e}", x)
}

/// Write scan records as CSV with the documented header; optional fields
/// serialize as empty cells. Floats carry 17 significant digits.
pub fn emit_scan_csv(records: &[ScanRecord], path: &Path) -> Result<(), OutputError> {
    if records.is_empty() {
        return Err(OutputError::Empty);
    }
    let mut text = String::from(SCAN_CSV_HEADER);
    text.push('\n');
    for r in records {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt17(r.t),
            r.r,
            fmt17(r.value),
            opt(r.trace_norm),
            opt(r.envelope_trace),
            opt(r.envelope_expect),
        ));
    }
    write_file(path, text.as_bytes())?;
    // Round-trip: the file must parse back to the same numbers.
    let parsed = parse_scan_csv(path)?;
    if parsed.len() != records.len() {
        return Err(OutputError::RoundTrip(
            path.display().to_string(),
            format!("{} rows read, {} written", parsed.len(), records.len()),
        ));
    }
    for (a, b) in parsed.iter().zip(records) {
        if a.0 != b.t || a.1 != b.r || a.2 != b.value {
            return Err(OutputError::RoundTrip(
                path.display().to_string(),
                "row mismatch after re-parse".into(),
            ));
        }
    }
    Ok(())
}

/// Parse a scan CSV back into `(t, R, value)` triples; used by the manifest
/// round-trip check.
pub fn parse_scan_csv(path: &Path) -> Result<Vec<(f64, usize, f64)>, OutputError> {
    let text = std::fs::read_to_string(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != SCAN_CSV_HEADER {
        return Err(OutputError::RoundTrip(
            path.display().to_string(),
            format!("header '{header}' differs from contract"),
        ));
    }
    let mut out = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(OutputError::RoundTrip(
                path.display().to_string(),
                format!("row has {} cells", cells.len()),
            ));
        }
        let t: f64 = cells[0].parse().map_err(|e| {
            OutputError::RoundTrip(path.display().to_string(), format!("bad t: {e}"))
        })?;
        let r: usize = cells[1].parse().map_err(|e| {
            OutputError::RoundTrip(path.display().to_string(), format!("bad R: {e}"))
        })?;
        let v: f64 = cells[2].parse().map_err(|e| {
            OutputError::RoundTrip(path.display().to_string(), format!("bad value: {e}"))
        })?;
        out.push((t, r, v));
    }
    Ok(out)
}

/// Serialize a report as pretty JSON with the struct's field order.
pub fn emit_json<T: Serialize>(report: &T, path: &Path) -> Result<(), OutputError> {
    let text = serde_json::to_string_pretty(report)?;
    write_file(path, text.as_bytes())?;
    // Round-trip: must re-parse as JSON.
    let read = std::fs::read_to_string(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str::<serde_json::Value>(&read)
        .map_err(|e| OutputError::RoundTrip(path.display().to_string(), e.to_string()))?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| OutputError::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    let mut f = std::fs::File::create(path).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })?;
    f.write_all(bytes).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Record of one CLI run: config snapshot, versions, timing, and verified
/// output paths.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: String,
    pub config_path: String,
    pub config_snapshot: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub pass: bool,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(experiment: &str, config_path: &Path, config_snapshot: String) -> RunManifest {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            config_path: config_path.display().to_string(),
            config_snapshot,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            pass: false,
            outputs: Vec::new(),
        }
    }

    /// Finalize and write the manifest; every referenced output must exist.
    pub fn finish(mut self, pass: bool, outputs: Vec<PathBuf>, dir: &Path) -> Result<PathBuf, OutputError> {
        self.pass = pass;
        for p in &outputs {
            if !p.exists() {
                return Err(OutputError::RoundTrip(
                    p.display().to_string(),
                    "referenced output missing".into(),
                ));
            }
        }
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        self.finished_unix_ms = now_ms();
        let path = dir.join("manifest.json");
        emit_json(&self, &path)?;
        Ok(path)
    }
}

fn now_ms() -> u128 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}
