//! Golden trace files: one CSV row per step with the iterate and the optimizer
//! state, for bit-level regression tests.

use std::io::{Read, Write};

use crate::error::{Error, Result};

use super::OptimizerState;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub x: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl TraceRow {
    pub fn capture(t: u64, x: &[f64], state: &OptimizerState) -> Self {
        Self {
            t,
            x: x.to_vec(),
            m: state.m.clone().unwrap_or_default(),
            v: state.v.clone().unwrap_or_default(),
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InsufficientData(format!("trace csv: {e}"))
}

/// Writes rows with header `t,x0..,m0..,v0..`. All rows must share a shape.
pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = rows.first() else {
        return Ok(());
    };
    let mut header = vec!["t".to_string()];
    for (prefix, len) in [
        ("x", first.x.len()),
        ("m", first.m.len()),
        ("v", first.v.len()),
    ] {
        header.extend((0..len).map(|i| format!("{prefix}{i}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for row in rows {
        if (row.x.len(), row.m.len(), row.v.len()) != (first.x.len(), first.m.len(), first.v.len())
        {
            return Err(Error::LengthMismatch {
                expected: header.len(),
                got: 1 + row.x.len() + row.m.len() + row.v.len(),
            });
        }
        let mut rec = vec![row.t.to_string()];
        rec.extend(row.x.iter().chain(&row.m).chain(&row.v).map(f64::to_string));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::InsufficientData(format!("trace io: {e}")))?;
    Ok(())
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    let count = |p: char| header.iter().filter(|h| h.starts_with(p)).count();
    let (nx, nm, nv) = (count('x'), count('m'), count('v'));
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::InsufficientData(format!("trace value `{s}`: {e}")))
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let t = rec[0]
            .parse::<u64>()
            .map_err(|e| Error::InsufficientData(format!("trace step `{}`: {e}", &rec[0])))?;
        let vals = rec.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        rows.push(TraceRow {
            t,
            x: vals[..nx].to_vec(),
            m: vals[nx..nx + nm].to_vec(),
            v: vals[nx + nm..nx + nm + nv].to_vec(),
        });
    }
    Ok(rows)
}
