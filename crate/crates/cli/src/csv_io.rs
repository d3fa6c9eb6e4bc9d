//! CSV traces, clearance events and histograms.
//!
//! Numbers are written with Rust's shortest round-trip formatting, which
//! does not depend on the locale.

use crate::CliError;
use clearance_mpc::sim::SimTrace;
use std::io::Write;
use std::path::Path;

pub const TRACE_COLUMNS: [&str; 10] = [
    "t", "x", "y", "theta", "kappa", "u", "e_lat", "eps_max", "sqp_iters", "solve_ms",
];
pub const EVENT_COLUMNS: [&str; 4] = ["agent", "clearance_m", "t", "e_lat"];
pub const HISTOGRAM_COLUMNS: [&str; 2] = ["bin_left", "count"];

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::fs(path, io),
        other => CliError::Parse {
            path: path.display().to_string(),
            message: format!("{other:?}"),
        },
    }
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::fs(path, e))
}

pub fn write_trace(path: &Path, trace: &SimTrace) -> Result<(), CliError> {
    let rows = trace.cycles.iter().map(|c| {
        vec![
            c.t.to_string(),
            c.state.x.to_string(),
            c.state.y.to_string(),
            c.state.theta.to_string(),
            c.state.kappa.to_string(),
            c.u.to_string(),
            c.e_lat.to_string(),
            c.eps_max.to_string(),
            c.iterations.to_string(),
            c.solve_ms.to_string(),
        ]
    });
    write_rows(path, &TRACE_COLUMNS, rows)
}

pub fn write_events(path: &Path, trace: &SimTrace) -> Result<(), CliError> {
    let rows = trace.events.iter().map(|e| {
        vec![
            e.agent.clone(),
            e.clearance.to_string(),
            e.t.to_string(),
            e.e_lat.to_string(),
        ]
    });
    write_rows(path, &EVENT_COLUMNS, rows)
}

/// The `clearance_m` column of an events file.
pub fn read_clearances(path: &Path) -> Result<Vec<f64>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let parse = |line: u64, message: String| CliError::Parse {
        path: path.display().to_string(),
        message: format!("line {line}: {message}"),
    };
    let column = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .position(|h| h == "clearance_m")
        .ok_or_else(|| parse(1, "no `clearance_m` column".into()))?;
    let mut out = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = record.get(column).unwrap_or("");
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| parse(line, format!("`{field}` is not a number")))?;
        if !v.is_finite() {
            return Err(parse(line, format!("`{field}` is not finite")));
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
    /// Values outside `[0, max)`.
    pub outside: usize,
}

impl Histogram {
    /// Fixed-width bins covering `[0, max)`. A small tolerance keeps values
    /// sitting on a bin edge in the bin to their right.
    pub fn new(values: &[f64], bin_width: f64, max: f64) -> Self {
        let bins = (max / bin_width - 1e-9).ceil().max(0.0) as usize;
        let mut counts = vec![0; bins];
        let mut outside = 0;
        for &v in values {
            let i = (v / bin_width + 1e-9).floor();
            if v < 0.0 || i < 0.0 || i as usize >= bins {
                outside += 1;
            } else {
                counts[i as usize] += 1;
            }
        }
        Self {
            bin_width,
            counts,
            outside,
        }
    }

    pub fn bin_left(&self, i: usize) -> f64 {
        // rounded so that 28 * 0.05 prints as 1.4
        (i as f64 * self.bin_width * 1e9).round() / 1e9
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HISTOGRAM_COLUMNS)?;
        for (i, c) in self.counts.iter().enumerate() {
            w.write_record([self.bin_left(i).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
