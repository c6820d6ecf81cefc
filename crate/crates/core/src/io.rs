//! Serialization: JSON with round-trip floats, CSV `(x₁, x₂, w)` and the
//! binary `WGRF` grid format. All writers go through [`write_atomic`].
//!
//! `WGRF` layout (little-endian): 64-byte header
//!
//! | offset | type | field |
//! |---|---|---|
//! | 0 | `[u8; 4]` | magic `WGRF` |
//! | 4 | `u32` | version (1) |
//! | 8 | `u32` | base dimension |
//! | 12 | `u32` | `nx` |
//! | 16 | `u32` | `ny` |
//! | 20 | `f64` | origin `x₁` |
//! | 28 | `f64` | origin `x₂` |
//! | 36 | `f64` | spacing `h` |
//! | 44 | zero padding to 64 | |
//!
//! followed by `nx·ny` `f64` values, row-major with `x₁` fastest; `NaN` marks
//! nodes outside the domain.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{DiscreteGraph, GridSpec};

pub const WGRF_MAGIC: [u8; 4] = *b"WGRF";
pub const WGRF_VERSION: u32 = 1;
pub const WGRF_HEADER: usize = 64;

/// Writes floats as `{:.16e}`, which round-trips every finite `f64`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactFloats;

impl serde_json::ser::Formatter for ExactFloats {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }
}

/// JSON text with exact floats; non-finite floats become `null`.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Format(format!("json: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

/// Writes to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Format(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, to_json(value)?.as_bytes())
}

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV rows for any table of floats, with a header line.
pub fn table_csv(header: &[&str], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format_float(*v))).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

/// `x1,x2,w` for every in-domain node in index order.
pub fn graph_to_csv(g: &DiscreteGraph) -> Result<Vec<u8>> {
    let rows: Vec<Vec<f64>> = g
        .domain_indices()
        .into_iter()
        .map(|k| {
            let p = g.grid.point_of(k);
            vec![p[0], p[1], g.values[k]]
        })
        .collect();
    table_csv(&["x1", "x2", "w"], &rows)
}

/// `(min, max, smallest positive gap)` of the distinct coordinates.
fn lattice(mut coords: Vec<f64>) -> (f64, f64, f64) {
    coords.sort_by(f64::total_cmp);
    coords.dedup();
    let gap = coords.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    (coords[0], coords[coords.len() - 1], gap)
}

/// Rebuilds a graph from `x1,x2,w` rows. Nodes are snapped to the lattice
/// spanned by the distinct coordinates; missing nodes are outside the domain.
pub fn graph_from_csv(bytes: &[u8]) -> Result<DiscreteGraph> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut pts = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != 3 {
            return Err(Error::Format(format!("row {}: expected 3 columns, got {}", line + 2, rec.len())));
        }
        let mut row = [0.0; 3];
        for (c, field) in rec.iter().enumerate() {
            row[c] = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", line + 2)))?;
        }
        pts.push(row);
    }
    if pts.is_empty() {
        return Err(Error::Format("no data rows".into()));
    }
    let (x0, x1, hx) = lattice(pts.iter().map(|p| p[0]).collect());
    let (y0, y1, hy) = lattice(pts.iter().map(|p| p[1]).collect());
    let h = hx.min(hy);
    if !h.is_finite() {
        return Err(Error::Format("need at least two distinct nodes".into()));
    }
    let count = |lo: f64, hi: f64| ((hi - lo) / h).round() as usize + 1;
    let grid = if y1 == y0 {
        GridSpec::new(1, count(x0, x1), 1, [x0, y0], h)?
    } else {
        GridSpec::new(2, count(x0, x1), count(y0, y1), [x0, y0], h)?
    };
    let ny = grid.ny;
    let mut values = vec![f64::NAN; grid.len()];
    for (line, p) in pts.iter().enumerate() {
        let fi = (p[0] - x0) / h;
        let fj = if ny == 1 { 0.0 } else { (p[1] - y0) / h };
        if (fi - fi.round()).abs() > 1e-6 || (fj - fj.round()).abs() > 1e-6 {
            return Err(Error::Format(format!("row {}: ({}, {}) is off the lattice", line + 2, p[0], p[1])));
        }
        values[grid.index(fi.round() as usize, fj.round() as usize)] = p[2];
    }
    graph_from_values(grid, values)
}

fn graph_from_values(grid: GridSpec, values: Vec<f64>) -> Result<DiscreteGraph> {
    let mask = DiscreteGraph::build_mask(&grid, |p| {
        let (i, j) = (((p[0] - grid.origin[0]) / grid.h).round() as usize, ((p[1] - grid.origin[1]) / grid.h).round() as usize);
        values[grid.index(i, j.min(grid.ny - 1))].is_finite()
    });
    DiscreteGraph::from_parts(grid, values, mask, None)
}

pub fn graph_to_wgrf(g: &DiscreteGraph) -> Vec<u8> {
    let gs = &g.grid;
    let mut out = Vec::with_capacity(WGRF_HEADER + 8 * gs.len());
    out.extend_from_slice(&WGRF_MAGIC);
    for v in [WGRF_VERSION, gs.dims as u32, gs.nx as u32, gs.ny as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in [gs.origin[0], gs.origin[1], gs.h] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.resize(WGRF_HEADER, 0);
    for (k, v) in g.values.iter().enumerate() {
        let v = if g.mask[k].in_domain() { *v } else { f64::NAN };
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn graph_from_wgrf(bytes: &[u8]) -> Result<DiscreteGraph> {
    if bytes.len() < WGRF_HEADER {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != WGRF_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32_at(4);
    if version != WGRF_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let grid = GridSpec::new(u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize, [f64_at(20), f64_at(28)], f64_at(36))
        .map_err(|e| Error::Format(format!("header: {e}")))?;
    let expected = WGRF_HEADER + 8 * grid.len();
    if bytes.len() != expected {
        return Err(Error::Format(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let values = bytes[WGRF_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    graph_from_values(grid, values)
}

pub fn read_graph(path: &Path) -> Result<DiscreteGraph> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(&WGRF_MAGIC) {
        graph_from_wgrf(&bytes)
    } else {
        graph_from_csv(&bytes)
    }
}
