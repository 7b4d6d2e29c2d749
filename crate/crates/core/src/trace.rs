//! Trace CSV serialization.
//!
//! ```text
//! # problem=lb:I
//! # dgf=p:2
//! k,F,gap,l1,linf_mirror,time_s
//! 0,2.5e-1,2.5e-1,1e0,1e0,0e0
//! ```
//!
//! Metadata lines start with `#` and hold one `key=value` pair. An unknown gap
//! is written as an empty field. Floats use the shortest round-trip form.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solver::{Trace, TraceRow};

pub const TRACE_HEADER: &str = "k,F,gap,l1,linf_mirror,time_s";

fn float(x: f64) -> String {
    format!("{x:e}")
}

/// Renders the metadata preamble, header and rows.
pub fn to_csv(trace: &Trace) -> String {
    let mut out = String::new();
    for (k, v) in &trace.meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    for (i, w) in trace.warnings.iter().enumerate() {
        out.push_str(&format!("# warning.{i}={w}\n"));
    }
    if let Some(reason) = &trace.aborted {
        out.push_str(&format!("# aborted={reason}\n"));
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k,
            float(r.f_value),
            r.gap.map(float).unwrap_or_default(),
            float(r.l1),
            float(r.linf_mirror),
            float(r.time_s)
        ));
    }
    out
}

/// Writes `content` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(content.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    write_atomic(path, &to_csv(trace))
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad number `{field}`")))
}

/// Parses a trace written by [`to_csv`]. The final density is not stored.
pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut trace = Trace::default();
    let mut seen_header = false;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (k, v) = meta
                .trim_start()
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {n}: metadata without `=`")))?;
            if k.starts_with("warning.") {
                trace.warnings.push(v.to_string());
            } else if k == "aborted" {
                trace.aborted = Some(v.to_string());
            } else {
                trace.meta.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        if !seen_header {
            if line.trim() != TRACE_HEADER {
                return Err(Error::Parse(format!("line {n}: expected header `{TRACE_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse(format!("line {n}: expected 6 fields, got {}", fields.len())));
        }
        let k = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {n}: bad iteration `{}`", fields[0])))?;
        if let Some(prev) = trace.rows.last() {
            if k <= prev.k {
                return Err(Error::Parse(format!("line {n}: iterations must increase")));
            }
        }
        trace.rows.push(TraceRow {
            k,
            f_value: parse_float(fields[1], n)?,
            gap: if fields[2].trim().is_empty() { None } else { Some(parse_float(fields[2], n)?) },
            l1: parse_float(fields[3], n)?,
            linf_mirror: parse_float(fields[4], n)?,
            time_s: parse_float(fields[5], n)?,
        });
    }
    if !seen_header {
        return Err(Error::Parse("missing header".into()));
    }
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    parse_trace(&fs::read_to_string(path)?)
}

/// Generic two-or-more column CSV (`header` then rows) for plotting tools.
pub fn columns_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.iter().map(|&x| float(x)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
