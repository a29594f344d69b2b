//! One JSON object per line, one trace per object.
//!
//! ```text
//! {"trace_id":"t0","program":"qta","seed":7,"status":"completed","payload":"4","weight":1.0,
//!  "records":[{"name":"question","value":"2+2?","log_prob":0.0,"observed":true}, ...]}
//! ```
//!
//! `reject_reason` is present only for rejected traces and `payload` only for
//! completed ones. A non-finite `log_prob` is written as the string
//! `"-Infinity"`, `"Infinity"` or `"NaN"`.

use std::io::{BufRead, Write};

use cascade_core::{Trace, TraceRecord, TraceStatus, VariableName};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("line {line}, byte {offset}: {message}")]
    Parse { line: usize, offset: usize, message: String },
    #[error("weight {0} is not a finite non-negative number")]
    Weight(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A persisted trace with its engine weight.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrace {
    pub trace_id: String,
    pub trace: Trace,
    pub weight: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Number {
    Finite(f64),
    Special(String),
}

impl Number {
    fn from_f64(x: f64) -> Self {
        if x.is_finite() {
            Number::Finite(x)
        } else if x.is_nan() {
            Number::Special("NaN".into())
        } else if x > 0.0 {
            Number::Special("Infinity".into())
        } else {
            Number::Special("-Infinity".into())
        }
    }

    fn to_f64(&self) -> Result<f64, String> {
        match self {
            Number::Finite(x) => Ok(*x),
            Number::Special(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "Infinity" => Ok(f64::INFINITY),
                "-Infinity" => Ok(f64::NEG_INFINITY),
                other => Err(format!("unrecognized number {other:?}")),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    name: String,
    value: String,
    log_prob: Number,
    observed: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    trace_id: String,
    program: String,
    seed: u64,
    status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reject_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    payload: Option<String>,
    weight: f64,
    records: Vec<RecordLine>,
}

/// Serializes one trace as a single line, without the trailing newline.
pub fn to_line(trace_id: &str, trace: &Trace, weight: f64) -> Result<String, StoreError> {
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(StoreError::Weight(weight));
    }
    let (status, reject_reason, payload) = match &trace.status {
        TraceStatus::Completed(p) => ("completed", None, Some(p.clone())),
        TraceStatus::Rejected(r) => ("rejected", Some(r.clone()), None),
        TraceStatus::Exhausted => ("exhausted", None, None),
    };
    let line = TraceLine {
        trace_id: trace_id.into(),
        program: trace.program_id.clone(),
        seed: trace.seed,
        status: status.into(),
        reject_reason,
        payload,
        weight,
        records: trace
            .records
            .iter()
            .map(|r| RecordLine {
                name: r.name.to_string(),
                value: r.value.clone(),
                log_prob: Number::from_f64(r.log_prob),
                observed: r.observed,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&line).expect("trace lines always serialize"))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    start + column.saturating_sub(1)
}

/// Parses one line; `line_number` is only used in error messages.
pub fn parse_line(text: &str, line_number: usize) -> Result<StoredTrace, StoreError> {
    let fail = |offset: usize, message: String| StoreError::Parse { line: line_number, offset, message };
    let line: TraceLine = serde_json::from_str(text)
        .map_err(|e| fail(byte_offset(text, e.line(), e.column()), e.to_string()))?;
    let status = match (line.status.as_str(), line.reject_reason, line.payload) {
        ("completed", None, Some(p)) => TraceStatus::Completed(p),
        ("completed", None, None) => TraceStatus::Completed(String::new()),
        ("rejected", Some(r), None) => TraceStatus::Rejected(r),
        ("exhausted", None, None) => TraceStatus::Exhausted,
        (s, _, _) => return Err(fail(0, format!("status {s:?} does not match its reason or payload fields"))),
    };
    let mut records = Vec::with_capacity(line.records.len());
    for r in line.records {
        let name = VariableName::new(r.name).map_err(|e| fail(0, e.to_string()))?;
        let log_prob = r.log_prob.to_f64().map_err(|m| fail(0, m))?;
        records.push(TraceRecord { name, value: r.value, log_prob, observed: r.observed });
    }
    if !(line.weight.is_finite() && line.weight >= 0.0) {
        return Err(fail(0, format!("weight {} is not a finite non-negative number", line.weight)));
    }
    Ok(StoredTrace {
        trace_id: line.trace_id,
        trace: Trace { records, status, seed: line.seed, program_id: line.program },
        weight: line.weight,
    })
}

/// Writes traces as JSON lines with ids `{prefix}{index}`.
pub fn write_jsonl<'a>(
    out: &mut impl Write,
    prefix: &str,
    traces: impl IntoIterator<Item = (&'a Trace, f64)>,
) -> Result<usize, StoreError> {
    let mut n = 0;
    for (i, (trace, weight)) in traces.into_iter().enumerate() {
        writeln!(out, "{}", to_line(&format!("{prefix}{i}"), trace, weight)?)?;
        n += 1;
    }
    Ok(n)
}

/// Reads every non-blank line. Line numbers in errors are 1-based.
pub fn read_jsonl(input: impl BufRead) -> Result<Vec<StoredTrace>, StoreError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_line(&line, i + 1)?);
    }
    Ok(out)
}
