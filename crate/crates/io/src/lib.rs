//! File formats, configuration and empirical diagnostics around the
//! `maxstable` inference library.
//!
//! Tables are comma-separated with a header row. Missing values are empty
//! fields, dates are ISO-8601 and occurrence-day lists are joined by `;`.

pub mod config;
pub mod diagnostics;
pub mod extremal;
pub mod minima;
pub mod partitions;
pub mod predict;
pub mod samples;
pub mod stations;

pub use maxstable::{Error, Result};

/// Line number of a csv record, for error messages.
pub(crate) fn line_of(rec: &csv::StringRecord) -> usize {
    rec.position().map_or(0, |p| p.line() as usize)
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        _ => Error::Parse {
            line,
            message: e.to_string(),
        },
    }
}

pub(crate) fn parse_f64(s: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = s.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what}: cannot parse {s:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what}: value {s:?} is not finite"),
        });
    }
    Ok(v)
}

/// Reader that trims whitespace and rejects ragged rows.
pub(crate) fn reader<R: std::io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(r)
}

pub(crate) fn header_index(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}
