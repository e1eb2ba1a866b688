//! Iteration trace and run summary export.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TraceFormat};
use crate::error::Result;
use crate::solver::{StopReason, TraceRecord};

pub const CSV_HEADER: [&str; 7] = [
    "k",
    "lambda",
    "step_norm",
    "max_dist_c",
    "max_dist_q",
    "tk_residual",
    "dist_to_ref",
];

pub fn write_jsonl<W: Write>(records: &[TraceRecord], mut out: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            records.push(serde_json::from_str(&line)?);
        }
    }
    Ok(records)
}

/// CSV with a fixed header. A missing reference distance is an empty field.
pub fn write_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.k.to_string(),
            r.lambda_k.to_string(),
            r.step_norm.to_string(),
            r.max_dist_c.to_string(),
            r.max_dist_q.to_string(),
            r.tk_residual.to_string(),
            r.dist_to_ref.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace<W: Write>(records: &[TraceRecord], format: TraceFormat, out: W) -> Result<()> {
    match format {
        TraceFormat::Jsonl => write_jsonl(records, out),
        TraceFormat::Csv => write_csv(records, out),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunSummary {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub max_dist_c: f64,
    pub max_dist_q: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dist_to_ref: Option<f64>,
    pub degenerate_landweber: usize,
    pub wall_time_secs: f64,
    pub config: RunConfig,
}
