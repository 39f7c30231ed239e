//! Grid file formats.
//!
//! Label fields and real-valued rasters are stored as headerless CSV,
//! one lattice row per line. Labels are 1-based on disk and 0-based in
//! memory. Grayscale images are accepted as plain-text PGM (magic
//! "P2") and rescaled to the [0, 255] observation range.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::Lattice;

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_error(path: &Path, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message,
    }
}

fn parse_grid<T>(
    path: &Path,
    parse: impl Fn(&str) -> Option<T>,
    what: &str,
) -> Result<(Lattice, Vec<T>)> {
    let text = read_to_string(path)?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0usize;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut width = 0usize;
        for cell in line.split(',') {
            let cell = cell.trim();
            let value = parse(cell).ok_or_else(|| {
                parse_error(path, format!("line {}: bad {what} '{cell}'", line_no + 1))
            })?;
            values.push(value);
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(parse_error(
                    path,
                    format!("line {}: {width} columns, expected {c}", line_no + 1),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_error(path, "no data rows".into()))?;
    Ok((Lattice::new(rows, cols)?, values))
}

/// Reads a headerless CSV of reals shaped like the lattice.
pub fn read_real_grid(path: &Path) -> Result<(Lattice, Vec<f64>)> {
    let (lattice, values) = parse_grid(path, |c| c.parse::<f64>().ok(), "number")?;
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(parse_error(path, format!("non-finite value {bad}")));
    }
    Ok((lattice, values))
}

/// Writes a real-valued grid as headerless CSV, one lattice row per
/// line. Values print in shortest round-trip form, so rereading
/// recovers them bit for bit.
pub fn write_real_grid(path: &Path, lattice: Lattice, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), lattice.len());
    let mut out = String::new();
    for r in 0..lattice.rows() {
        for c in 0..lattice.cols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", values[lattice.site(r, c)]);
        }
        out.push('\n');
    }
    write_string(path, &out)
}

/// Reads a label grid (1-based classes on disk) into 0-based labels.
pub fn read_label_grid(path: &Path) -> Result<(Lattice, Vec<u8>)> {
    let (lattice, raw) = parse_grid(path, |c| c.parse::<u32>().ok(), "label")?;
    let labels = raw
        .into_iter()
        .map(|l| {
            if (1..=256).contains(&l) {
                Ok((l - 1) as u8)
            } else {
                Err(parse_error(
                    path,
                    format!("label {l} outside the 1-based range 1..=256"),
                ))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok((lattice, labels))
}

/// Writes 0-based labels as a 1-based label grid.
pub fn write_label_grid(path: &Path, lattice: Lattice, labels: &[u8]) -> Result<()> {
    assert_eq!(labels.len(), lattice.len());
    let mut out = String::new();
    for r in 0..lattice.rows() {
        for c in 0..lattice.cols() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", labels[lattice.site(r, c)] as u32 + 1);
        }
        out.push('\n');
    }
    write_string(path, &out)
}

/// Reads a plain-text PGM image ("P2") and rescales pixel values from
/// 0..=maxval to the [0, 255] observation range.
pub fn read_pgm(path: &Path) -> Result<(Lattice, Vec<f64>)> {
    let text = read_to_string(path)?;
    let cleaned: String = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let mut tokens = cleaned.split_whitespace();
    let magic = tokens
        .next()
        .ok_or_else(|| parse_error(path, "empty file".into()))?;
    if magic != "P2" {
        return Err(parse_error(
            path,
            format!("unsupported magic '{magic}', expected plain PGM (P2)"),
        ));
    }
    let mut dims = [0usize; 3];
    for (slot, name) in dims.iter_mut().zip(["width", "height", "maxval"]) {
        let tok = tokens
            .next()
            .ok_or_else(|| parse_error(path, format!("missing {name}")))?;
        *slot = tok
            .parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| parse_error(path, format!("bad {name} '{tok}'")))?;
    }
    let (width, height, maxval) = (dims[0], dims[1], dims[2]);
    let mut values = Vec::with_capacity(width * height);
    for tok in tokens {
        let v = tok
            .parse::<usize>()
            .ok()
            .filter(|&v| v <= maxval)
            .ok_or_else(|| parse_error(path, format!("bad pixel '{tok}'")))?;
        values.push(v as f64 * 255.0 / maxval as f64);
    }
    if values.len() != width * height {
        return Err(parse_error(
            path,
            format!(
                "expected {} pixels, found {}",
                width * height,
                values.len()
            ),
        ));
    }
    Ok((Lattice::new(height, width)?, values))
}
