//! Machine-readable run artifacts: JSON-lines reports, the run manifest,
//! CSV tables, and the published record schema.
//!
//! Reports deliberately contain no timestamps or absolute output paths, so
//! identical inputs and settings produce byte-identical artifacts.

use grasp_core::engine::DefenseTrace;
use grasp_core::metrics::{ImageRecord, MetricsReport};
use grasp_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

/// Wraps a possibly-infinite dB value for JSON (which has no Infinity).
#[derive(Debug, Clone, Serialize)]
pub struct Decibels {
    pub db: Option<f64>,
    pub infinite: bool,
}

impl From<f64> for Decibels {
    fn from(v: f64) -> Self {
        if v.is_infinite() {
            Decibels { db: None, infinite: true }
        } else {
            Decibels { db: Some(v), infinite: false }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceDump {
    pub mse: Vec<f64>,
    pub ssim: Vec<Option<f64>>,
    pub lf: Vec<Option<f64>>,
    pub perturbation_linf: Vec<f64>,
    pub conflicts: Vec<[bool; 3]>,
}

impl From<&DefenseTrace> for TraceDump {
    fn from(trace: &DefenseTrace) -> Self {
        TraceDump {
            mse: trace.records.iter().map(|r| r.mse).collect(),
            ssim: trace.records.iter().map(|r| r.ssim).collect(),
            lf: trace.records.iter().map(|r| r.lf).collect(),
            perturbation_linf: trace.records.iter().map(|r| r.perturbation_linf).collect(),
            conflicts: trace.records.iter().map(|r| r.conflicts).collect(),
        }
    }
}

/// One JSON-lines record: a per-image result.
#[derive(Debug, Clone, Serialize)]
pub struct ImageLine {
    pub record: &'static str, // "image"
    pub index: usize,
    pub input: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub status: &'static str, // "ok" | "failed"
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_out: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1_out: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub defense_success: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psnr_in: Option<Decibels>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssim_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lf_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceDump>,
}

impl ImageLine {
    pub fn ok(index: usize, input: String, record: &ImageRecord) -> Self {
        ImageLine {
            record: "image",
            index,
            input,
            output: None,
            status: "ok",
            error: None,
            l2_out: Some(record.l2_out),
            l1_out: Some(record.l1_out),
            defense_success: Some(record.defense_success),
            psnr_in: record.psnr_in.map(Decibels::from),
            ssim_in: record.ssim_in,
            lf_in: record.lf_in,
            trace: None,
        }
    }

    pub fn failed(index: usize, input: String, error: String) -> Self {
        ImageLine {
            record: "image",
            index,
            input,
            output: None,
            status: "failed",
            error: Some(error),
            l2_out: None,
            l1_out: None,
            defense_success: None,
            psnr_in: None,
            ssim_in: None,
            lf_in: None,
            trace: None,
        }
    }
}

/// Final JSON-lines record: aggregates over the run.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateLine {
    pub record: &'static str, // "aggregate"
    pub n_images: usize,
    pub n_failed: usize,
    pub dsr: f64,
    pub mean_l2_out: f64,
    pub mean_l1_out: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_psnr_in: Option<Decibels>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ssim_in: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_lf_in: Option<f64>,
    pub pixel_scale_note: String,
}

impl AggregateLine {
    pub fn from_report(report: &MetricsReport, n_failed: usize) -> Self {
        AggregateLine {
            record: "aggregate",
            n_images: report.n_images,
            n_failed,
            dsr: report.dsr,
            mean_l2_out: report.mean_l2_out,
            mean_l1_out: report.mean_l1_out,
            mean_psnr_in: report.mean_psnr_in.map(Decibels::from),
            mean_ssim_in: report.mean_ssim_in,
            mean_lf_in: report.mean_lf_in,
            pixel_scale_note: report.pixel_scale_note.to_string(),
        }
    }
}

/// The run manifest: resolved settings, input/output digests, notes.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub settings: crate::config::SettingsDump,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub notes: Vec<String>,
    pub report_sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::InvalidInput(format!("cannot hash {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

/// Serializes records as JSON lines and returns the file's bytes.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for record in records {
        serde_json::to_writer(&mut buf, record)
            .map_err(|e| Error::InvalidInput(format!("serialization failure: {e}")))?;
        buf.push(b'\n');
    }
    write_bytes(path, &buf)?;
    Ok(buf)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut buf = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failure: {e}")))?;
    buf.push(b'\n');
    write_bytes(path, &buf)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", parent.display())))?;
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))?;
    file.write_all(bytes)
        .map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

/// Draft-07 JSON schema for report records, written next to every report.
pub const REPORT_SCHEMA: &str = r##"{
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "grasp report record",
  "oneOf": [
    {
      "type": "object",
      "properties": {
        "record": { "const": "image" },
        "index": { "type": "integer", "minimum": 0 },
        "input": { "type": "string" },
        "output": { "type": "string" },
        "status": { "enum": ["ok", "failed"] },
        "error": { "type": "string" },
        "l2_out": { "type": "number" },
        "l1_out": { "type": "number" },
        "defense_success": { "type": "boolean" },
        "psnr_in": { "$ref": "#/definitions/decibels" },
        "ssim_in": { "type": "number" },
        "lf_in": { "type": "number" },
        "trace": { "$ref": "#/definitions/trace" }
      },
      "required": ["record", "index", "input", "status"]
    },
    {
      "type": "object",
      "properties": {
        "record": { "const": "aggregate" },
        "n_images": { "type": "integer", "minimum": 1 },
        "n_failed": { "type": "integer", "minimum": 0 },
        "dsr": { "type": "number", "minimum": 0, "maximum": 1 },
        "mean_l2_out": { "type": "number" },
        "mean_l1_out": { "type": "number" },
        "mean_psnr_in": { "$ref": "#/definitions/decibels" },
        "mean_ssim_in": { "type": "number" },
        "mean_lf_in": { "type": "number" },
        "pixel_scale_note": { "type": "string" }
      },
      "required": ["record", "n_images", "dsr", "mean_l2_out", "mean_l1_out", "pixel_scale_note"]
    }
  ],
  "definitions": {
    "decibels": {
      "type": "object",
      "properties": {
        "db": { "type": ["number", "null"] },
        "infinite": { "type": "boolean" }
      },
      "required": ["db", "infinite"]
    },
    "trace": {
      "type": "object",
      "properties": {
        "mse": { "type": "array", "items": { "type": "number" } },
        "ssim": { "type": "array", "items": { "type": ["number", "null"] } },
        "lf": { "type": "array", "items": { "type": ["number", "null"] } },
        "perturbation_linf": { "type": "array", "items": { "type": "number" } },
        "conflicts": { "type": "array" }
      },
      "required": ["mse", "ssim", "lf", "perturbation_linf", "conflicts"]
    }
  }
}
"##;

/// Writes rows as CSV (numeric cells only, so no quoting is needed).
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut buf = String::new();
    buf.push_str(header);
    buf.push('\n');
    for row in rows {
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    write_bytes(path, buf.as_bytes())
}
