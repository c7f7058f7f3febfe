//! CSV formats for ticks and risk coordinates.
//!
//! Tick schema: `step,company,price,volume`, LF line endings, decimal point.
//! The value column is never stored; it is derived on parse so the value model
//! holds bit for bit. Risk schema: `company,m,j,coord` with 1-based m and j.
//! Writers emit rows in sorted order and shortest round-trip float formatting,
//! so write(parse(x)) is byte-stable and parse(write(s)) == s.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{RiskVector, TickRecord, TickSeries};

const TICK_HEADER: [&str; 4] = ["step", "company", "price", "volume"];
const RISK_HEADER: [&str; 4] = ["company", "m", "j", "coord"];

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    let fields: Vec<&str> = got.iter().collect();
    if fields != want {
        return Err(Error::parse(
            path,
            1,
            format!("bad header {fields:?}, expected {want:?}"),
        ));
    }
    Ok(())
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn field<'a>(
    path: &Path,
    record: &'a csv::StringRecord,
    idx: usize,
    name: &str,
) -> Result<&'a str> {
    record.get(idx).ok_or_else(|| {
        Error::parse(path, record_line(record), format!("missing column {name}"))
    })
}

fn parse_f64(path: &Path, record: &csv::StringRecord, idx: usize, name: &str) -> Result<f64> {
    let raw = field(path, record, idx, name)?;
    raw.trim().parse().map_err(|_| {
        Error::parse(
            path,
            record_line(record),
            format!("{name} is not a number: {raw:?}"),
        )
    })
}

fn parse_u64(path: &Path, record: &csv::StringRecord, idx: usize, name: &str) -> Result<u64> {
    let raw = field(path, record, idx, name)?;
    raw.trim().parse().map_err(|_| {
        Error::parse(
            path,
            record_line(record),
            format!("{name} is not a non-negative integer: {raw:?}"),
        )
    })
}

/// Parses tick CSV from any reader; `path` is used only in error messages.
pub fn parse_tick_csv(reader: impl Read, path: &Path) -> Result<TickSeries> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(path, rdr.headers().map_err(|e| csv_err(path, &e))?, &TICK_HEADER)?;
    let mut ticks = Vec::new();
    for row in rdr.records() {
        let record = row.map_err(|e| csv_err(path, &e))?;
        if record.len() != TICK_HEADER.len() {
            return Err(Error::parse(
                path,
                record_line(&record),
                format!("expected {} fields, got {}", TICK_HEADER.len(), record.len()),
            ));
        }
        let step = parse_u64(path, &record, 0, "step")?;
        let company = field(path, &record, 1, "company")?.trim();
        if company.is_empty() {
            return Err(Error::parse(path, record_line(&record), "empty company id"));
        }
        let price = parse_f64(path, &record, 2, "price")?;
        let volume = parse_f64(path, &record, 3, "volume")?;
        ticks.push(TickRecord::new(step, company, price, volume));
    }
    Ok(TickSeries::from_records(ticks))
}

pub fn read_tick_csv(path: impl AsRef<Path>) -> Result<TickSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_tick_csv(file, path)
}

/// Writes the series sorted by (company, step); formatting is shortest
/// round-trip, so reparsing reproduces the exact f64 bits.
pub fn write_tick_csv(path: impl AsRef<Path>, series: &TickSeries) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, render_tick_csv(series).as_bytes())
}

#[must_use]
pub fn render_tick_csv(series: &TickSeries) -> String {
    let mut out = String::from("step,company,price,volume\n");
    for t in series.ticks() {
        out.push_str(&format!("{},{},{},{}\n", t.step, t.company, t.price, t.volume));
    }
    out
}

/// Parses risk CSV; every company must supply a complete m-by-j block of
/// coordinates inside the unit cube, and all companies must agree on the
/// number of orders and axes.
pub fn parse_risk_csv(reader: impl Read, path: &Path) -> Result<Vec<RiskVector>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    check_header(path, rdr.headers().map_err(|e| csv_err(path, &e))?, &RISK_HEADER)?;
    let mut cells: BTreeMap<String, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    for row in rdr.records() {
        let record = row.map_err(|e| csv_err(path, &e))?;
        let line = record_line(&record);
        let company = field(path, &record, 0, "company")?.trim().to_string();
        if company.is_empty() {
            return Err(Error::parse(path, line, "empty company id"));
        }
        let m = parse_u64(path, &record, 1, "m")? as usize;
        let j = parse_u64(path, &record, 2, "j")? as usize;
        if m == 0 || j == 0 {
            return Err(Error::parse(path, line, "m and j are 1-based"));
        }
        let coord = parse_f64(path, &record, 3, "coord")?;
        if !coord.is_finite() || !(0.0..=1.0).contains(&coord) {
            return Err(Error::parse(
                path,
                line,
                format!("coord {coord} outside the unit interval"),
            ));
        }
        if cells.entry(company.clone()).or_default().insert((m, j), coord).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate coordinate for {company} m={m} j={j}"),
            ));
        }
    }
    let mut vectors = Vec::with_capacity(cells.len());
    let mut dims: Option<(usize, usize)> = None;
    for (company, block) in cells {
        let orders = block.keys().map(|&(m, _)| m).max().unwrap_or(0);
        let axes = block.keys().map(|&(_, j)| j).max().unwrap_or(0);
        match dims {
            None => dims = Some((orders, axes)),
            Some(d) if d != (orders, axes) => {
                return Err(Error::parse(
                    path,
                    0,
                    format!(
                        "{company} has {orders} orders x {axes} axes, others have {} x {}",
                        d.0, d.1
                    ),
                ));
            }
            _ => {}
        }
        let mut coords = vec![vec![f64::NAN; axes]; orders];
        for ((m, j), coord) in &block {
            coords[m - 1][j - 1] = *coord;
        }
        for (mi, row) in coords.iter().enumerate() {
            for (ji, &c) in row.iter().enumerate() {
                if c.is_nan() {
                    return Err(Error::parse(
                        path,
                        0,
                        format!("{company} missing coordinate m={} j={}", mi + 1, ji + 1),
                    ));
                }
            }
        }
        vectors.push(RiskVector { company, coords });
    }
    Ok(vectors)
}

pub fn read_risk_csv(path: impl AsRef<Path>) -> Result<Vec<RiskVector>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_risk_csv(file, path)
}

pub fn write_risk_csv(path: impl AsRef<Path>, risks: &[RiskVector]) -> Result<()> {
    let path = path.as_ref();
    let mut sorted: Vec<&RiskVector> = risks.iter().collect();
    sorted.sort_by(|a, b| a.company.cmp(&b.company));
    let mut out = String::from("company,m,j,coord\n");
    for r in sorted {
        for (mi, row) in r.coords.iter().enumerate() {
            for (ji, coord) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", r.company, mi + 1, ji + 1, coord));
            }
        }
    }
    write_atomic(path, out.as_bytes())
}

fn csv_err(path: &Path, e: &csv::Error) -> Error {
    let line = match e.kind() {
        csv::ErrorKind::Utf8 { pos, .. } => pos.as_ref().map_or(0, |p| p.line()),
        csv::ErrorKind::UnequalLengths { pos, .. } => pos.as_ref().map_or(0, |p| p.line()),
        _ => 0,
    };
    Error::parse(path, line, e.to_string())
}

/// Plain create-and-write; kept in one place so all writers share behavior.
/// Writes bytes to `path`, mapping failures to an [`Error::Io`] that names
/// the file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}
