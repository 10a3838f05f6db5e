//! On-disk formats: `trace.csv`, `summary.json`, `ratefit.json`,
//! `certificate.json` and `verify_report.json`.
//!
//! Every JSON file carries `schema_version`. Structs serialize their fields in
//! declaration order, so parsing a file and writing it back reproduces it
//! byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ConfigDocument;
use crate::error::{CliError, Result};
use crate::harness::{ConstantsRecord, ParamsRecord, RateFit, TheoremCertificate, TraceRow};
use crate::verify::VerifyReport;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TRACE_HEADER: [&str; 8] = [
    "step",
    "loss",
    "grad_norm",
    "rsf",
    "step_norm",
    "eps_hat",
    "grad_evals",
    "wall_ns",
];

/// 17 significant digits in scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_csv(rows: &[TraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Output(format!("trace: {e}"));
    w.write_record(TRACE_HEADER).map_err(err)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            fmt_f64(r.loss),
            fmt_f64(r.grad_norm),
            fmt_f64(r.rsf),
            fmt_f64(r.step_norm),
            r.eps_hat.map(fmt_f64).unwrap_or_default(),
            r.grad_evals.to_string(),
            r.wall_ns.to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Output(format!("trace: {e}")))
}

pub fn parse_trace(bytes: &[u8]) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let bad = |m: String| CliError::Output(format!("trace: {m}"));
    let header = r.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().ne(TRACE_HEADER) {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|e| bad(format!("column {}: {e}", TRACE_HEADER[i])))
        };
        let u = |i: usize| -> Result<u64> {
            rec[i].parse().map_err(|e| bad(format!("column {}: {e}", TRACE_HEADER[i])))
        };
        rows.push(TraceRow {
            step: u(0)?,
            loss: f(1)?,
            grad_norm: f(2)?,
            rsf: f(3)?,
            step_norm: f(4)?,
            eps_hat: if rec[5].is_empty() { None } else { Some(f(5)?) },
            grad_evals: u(6)?,
            wall_ns: u(7)?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub label: String,
    pub class: String,
    pub schedule: Option<String>,
    pub params: ParamsRecord,
    pub diameter: f64,
    pub constants: ConstantsRecord,
    pub avg_rsf_mean: f64,
    pub avg_rsf_std: f64,
    pub final_loss_mean: f64,
    pub final_loss_std: f64,
    pub grad_evals: u64,
    /// Trace file relative to the output directory.
    pub trace: Option<String>,
    pub certificate: Option<TheoremCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub horizon: u64,
    pub seed: u64,
    pub seeds: u64,
    pub config: ConfigDocument,
    pub methods: Vec<MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitRecord {
    pub label: String,
    pub class: String,
    pub schedule: Option<String>,
    pub seeds: u64,
    pub fit: RateFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitReport {
    pub schema_version: u32,
    pub horizons: Vec<u64>,
    pub fits: Vec<RateFitRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub schema_version: u32,
    pub pass: bool,
    pub certificates: Vec<TheoremCertificate>,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CliError::Output(e.to_string()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, to_json(value)?.as_bytes())
}

pub fn write_summary(dir: &Path, s: &SummaryRecord) -> Result<PathBuf> {
    let p = dir.join("summary.json");
    write_json(&p, s)?;
    Ok(p)
}

pub fn write_verify_report(dir: &Path, r: &VerifyReport) -> Result<PathBuf> {
    let p = dir.join("verify_report.json");
    write_json(&p, r)?;
    Ok(p)
}

/// File-name-safe form of a method label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
