use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::{IterateRecord, IterateTrace};

/// Exact header of trace files.
pub const TRACE_HEADER: &str = "iter,f_val,grad_norm,gap,merit,dist_s,wall_ns";

fn float(v: f64) -> String {
    // Debug formatting is the shortest string that parses back to the same value.
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

pub fn write_trace_csv<W: Write>(out: W, trace: &IterateTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for r in &trace.records {
        w.write_record([
            r.iter.to_string(),
            float(r.f_val),
            float(r.grad_norm),
            float(r.gap),
            opt(r.merit),
            opt(r.dist_s),
            r.wall_ns.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<IterateTrace> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != TRACE_HEADER {
        return Err(Error::Format(format!("unexpected trace header '{}'", header.join(","))));
    }
    let mut trace = IterateTrace::new();
    for rec in rd.deserialize::<IterateRecord>() {
        trace.push(rec?)?;
    }
    Ok(trace)
}

pub fn save_trace(path: &Path, trace: &IterateTrace) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_trace_csv(std::io::BufWriter::new(f), trace)
}

pub fn load_trace(path: &Path) -> Result<IterateTrace> {
    read_trace_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}
