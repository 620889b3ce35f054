use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use hierperc::{json, Error, Result};

fn io_error(e: io::Error) -> Error {
    Error::Resource(format!("write failed: {e}"))
}

pub fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = json::to_string(value).map_err(|e| Error::Resource(e.to_string()))?;
    let mut out = open(path)?;
    writeln!(out, "{text}").map_err(io_error)?;
    out.flush().map_err(io_error)
}

/// Writes CSV rows after an optional `#` comment line.
pub fn write_csv(path: Option<&Path>, comment: Option<&str>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = open(path)?;
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io_error)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_error = |e: csv::Error| Error::Resource(format!("write failed: {e}"));
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush().map_err(io_error)
}

pub fn float(x: f64) -> String {
    json::format_f64(x)
}
