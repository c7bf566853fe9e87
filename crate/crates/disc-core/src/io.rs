//! File formats: instance text format, run-report JSON, and the binary
//! step-trace stream.

use std::fmt::Write as _;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::instance::{InstanceMatrix, MatrixKind};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {0}: {1}")]
    Malformed(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("instance: {0}")]
    Instance(#[from] crate::instance::InstanceError),
    #[error("report self-check failed: disc_max {stored} but recomputed {actual}")]
    SelfCheck { stored: f64, actual: f64 },
    #[error("trace: {0}")]
    Trace(String),
}

/// Canonical text serialization: header `disc-instance v1 <m> <n> <kind>`,
/// then `i j value` lines sorted by (j, i), shortest round-trip decimals.
pub fn write_instance<W: Write>(a: &InstanceMatrix, mut w: W) -> Result<(), IoError> {
    let mut buf = String::new();
    writeln!(buf, "disc-instance v1 {} {} {}", a.m(), a.n(), a.kind().as_str()).unwrap();
    let mut entries: Vec<(usize, usize, f64)> = a.entries().to_vec();
    entries.sort_by(|x, y| (x.1, x.0).cmp(&(y.1, y.0)));
    for (i, j, v) in entries {
        writeln!(buf, "{} {} {}", i, j, v).unwrap();
    }
    w.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn instance_to_string(a: &InstanceMatrix) -> String {
    let mut out = Vec::new();
    write_instance(a, &mut out).expect("write to vec");
    String::from_utf8(out).expect("ascii")
}

pub fn read_instance<R: BufRead>(r: R) -> Result<InstanceMatrix, IoError> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::Malformed(1, "empty file".into()))?
        .map_err(IoError::Io)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "disc-instance" || parts[1] != "v1" {
        return Err(IoError::Malformed(1, format!("bad header: {header}")));
    }
    let m: usize = parts[2]
        .parse()
        .map_err(|_| IoError::Malformed(1, "bad row count".into()))?;
    let n: usize = parts[3]
        .parse()
        .map_err(|_| IoError::Malformed(1, "bad column count".into()))?;
    let kind = MatrixKind::parse(parts[4])
        .ok_or_else(|| IoError::Malformed(1, format!("unknown kind {}", parts[4])))?;
    let mut entries = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 2;
        let line = line.map_err(IoError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let p: Vec<&str> = line.split_whitespace().collect();
        if p.len() != 3 {
            return Err(IoError::Malformed(lineno, format!("expected `i j value`: {line}")));
        }
        let i: usize = p[0]
            .parse()
            .map_err(|_| IoError::Malformed(lineno, "bad row index".into()))?;
        let j: usize = p[1]
            .parse()
            .map_err(|_| IoError::Malformed(lineno, "bad column index".into()))?;
        let v: f64 = p[2]
            .parse()
            .map_err(|_| IoError::Malformed(lineno, "bad value".into()))?;
        if i >= m || j >= n {
            return Err(IoError::Malformed(lineno, format!("index ({i},{j}) out of bounds")));
        }
        entries.push((i, j, v));
    }
    Ok(InstanceMatrix::new(m, n, entries, kind)?)
}

/// FNV-1a over the canonical serialization.
pub fn instance_hash(a: &InstanceMatrix) -> String {
    let bytes = instance_to_string(a);
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FailEvent {
    pub step: u64,
    pub dim_w: usize,
    pub n_t: usize,
}

/// Persisted outcome of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub instance_hash: String,
    pub algo: String,
    pub params: Value,
    pub seed: u64,
    pub dt: f64,
    pub mode: String,
    pub disc_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub disc_per_row: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coloring: Option<Vec<i8>>,
    pub fail_events: Vec<FailEvent>,
    pub steps: u64,
    pub resolves: u64,
    pub wallclock_ms: u64,
    pub freeze_count: u64,
    pub tool_version: String,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        !self.fail_events.is_empty()
    }
}

/// Serialize with a self-check: disc_max must equal the recomputed
/// discrepancy of the embedded coloring.
pub fn write_report<W: Write>(
    report: &RunReport,
    a: Option<&InstanceMatrix>,
    mut w: W,
) -> Result<(), IoError> {
    self_check(report, a)?;
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn read_report<R: Read>(mut r: R, a: Option<&InstanceMatrix>) -> Result<RunReport, IoError> {
    let mut s = String::new();
    r.read_to_string(&mut s)?;
    let report: RunReport = serde_json::from_str(&s)?;
    self_check(&report, a)?;
    Ok(report)
}

fn self_check(report: &RunReport, a: Option<&InstanceMatrix>) -> Result<(), IoError> {
    if let (Some(a), Some(coloring)) = (a, report.coloring.as_ref()) {
        let fc = crate::instance::FullColoring::new(coloring.clone());
        let rep = a.disc_eval(&fc.to_coloring())?;
        if (rep.max_abs - report.disc_max).abs() > 1e-9 {
            return Err(IoError::SelfCheck { stored: report.disc_max, actual: rep.max_abs });
        }
    }
    Ok(())
}

/// Binary step trace: magic, then length-prefixed records of
/// (step u64, count u32, [row u32, y f64] * count).
pub const TRACE_MAGIC: &[u8; 8] = b"DTRACE1\n";

pub fn write_trace<W: Write>(
    records: &[crate::engine::YTraceRecord],
    dt: f64,
    mut w: W,
) -> Result<(), IoError> {
    w.write_all(TRACE_MAGIC)?;
    w.write_all(&dt.to_le_bytes())?;
    w.write_all(&(records.len() as u64).to_le_bytes())?;
    for rec in records {
        w.write_all(&rec.step.to_le_bytes())?;
        w.write_all(&(rec.rows.len() as u32).to_le_bytes())?;
        for &(row, y) in &rec.rows {
            w.write_all(&row.to_le_bytes())?;
            w.write_all(&y.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_trace<R: Read>(mut r: R) -> Result<(f64, Vec<crate::engine::YTraceRecord>), IoError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(IoError::Trace("bad magic".into()));
    }
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let count = u64::from_le_bytes(b8) as usize;
    let mut records = Vec::with_capacity(count.min(1 << 24));
    for _ in 0..count {
        r.read_exact(&mut b8)?;
        let step = u64::from_le_bytes(b8);
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let rows_len = u32::from_le_bytes(b4) as usize;
        let mut rows = Vec::with_capacity(rows_len.min(1 << 20));
        for _ in 0..rows_len {
            r.read_exact(&mut b4)?;
            let row = u32::from_le_bytes(b4);
            r.read_exact(&mut b8)?;
            rows.push((row, f64::from_le_bytes(b8)));
        }
        records.push(crate::engine::YTraceRecord { step, rows });
    }
    Ok((dt, records))
}
