//! PTRZ binary layout and the CSV fallback.
//!
//! PTRZ, all integers and floats little-endian:
//!
//! ```text
//! "PTRZ" | version u8 = 1 | n u32 | d u32 | flags u8
//! z: n*d f32, row-major
//! t: n u8        (flags bit0)
//! y: n f64       (flags bit1)
//! label: n u8    (flags bit2)
//! ```
//!
//! CSV: header `z0,...,z{d-1},t,y[,label]`, one row per observation.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::RepresentationSet;
use crate::error::LoadError;

pub const MAGIC: &[u8; 4] = b"PTRZ";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1;

const FLAG_T: u8 = 1;
const FLAG_Y: u8 = 1 << 1;
const FLAG_LABEL: u8 = 1 << 2;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LoadError + '_ {
    move |source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Reads a PTRZ file, or CSV when the extension is `.csv`.
pub fn load_representations(path: impl AsRef<Path>) -> Result<RepresentationSet, LoadError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if is_csv(path) {
        read_csv(&bytes)
    } else {
        read_ptrz(&bytes)
    }
}

/// Writes PTRZ, or CSV when the extension is `.csv`.
pub fn save_representations(set: &RepresentationSet, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let path = path.as_ref();
    let bytes = if is_csv(path) {
        write_csv(set)?
    } else {
        write_ptrz(set)
    };
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_ptrz(set: &RepresentationSet) -> Vec<u8> {
    let (n, d) = (set.n(), set.d());
    let mut flags = 0u8;
    if set.t().is_some() {
        flags |= FLAG_T;
    }
    if set.y().is_some() {
        flags |= FLAG_Y;
    }
    if set.label().is_some() {
        flags |= FLAG_LABEL;
    }
    let mut out = Vec::with_capacity(HEADER_LEN + n * d * 4 + n * 10);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.push(flags);
    let z = set.z();
    for i in 0..n {
        for j in 0..d {
            out.extend_from_slice(&(z[(i, j)] as f32).to_le_bytes());
        }
    }
    if let Some(t) = set.t() {
        out.extend_from_slice(t);
    }
    if let Some(y) = set.y() {
        for v in y {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    if let Some(label) = set.label() {
        out.extend_from_slice(label);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    expected: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], LoadError> {
        let end = self.pos + len;
        if end > self.bytes.len() {
            return Err(LoadError::Truncated {
                expected: self.expected,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
}

fn binary_column(field: &'static str, raw: &[u8]) -> Result<Vec<u8>, LoadError> {
    if let Some(row) = raw.iter().position(|&v| v > 1) {
        return Err(LoadError::NotBinary {
            field,
            row,
            value: raw[row].to_string(),
        });
    }
    Ok(raw.to_vec())
}

pub fn read_ptrz(bytes: &[u8]) -> Result<RepresentationSet, LoadError> {
    if bytes.len() < 4 {
        return Err(LoadError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(LoadError::BadMagic { found });
    }
    if bytes.len() < HEADER_LEN {
        return Err(LoadError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if bytes[4] != VERSION {
        return Err(LoadError::UnsupportedVersion(bytes[4]));
    }
    let n = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    let flags = bytes[13];
    let mut expected = HEADER_LEN + n * d * 4;
    if flags & FLAG_T != 0 {
        expected += n;
    }
    if flags & FLAG_Y != 0 {
        expected += n * 8;
    }
    if flags & FLAG_LABEL != 0 {
        expected += n;
    }
    let mut cur = Cursor {
        bytes,
        pos: HEADER_LEN,
        expected,
    };
    if bytes.len() < expected {
        return Err(LoadError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(LoadError::TrailingBytes(bytes.len() - expected));
    }

    let raw_z = cur.take(n * d * 4)?;
    let mut z = DMatrix::zeros(n, d);
    for (idx, chunk) in raw_z.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(LoadError::NonFinite {
                field: "z",
                row: idx / d,
            });
        }
        z[(idx / d, idx % d)] = v as f64;
    }
    let t = if flags & FLAG_T != 0 {
        Some(binary_column("t", cur.take(n)?)?)
    } else {
        None
    };
    let y = if flags & FLAG_Y != 0 {
        let raw = cur.take(n * 8)?;
        let mut y = Vec::with_capacity(n);
        for (row, chunk) in raw.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(LoadError::NonFinite { field: "y", row });
            }
            y.push(v);
        }
        Some(y)
    } else {
        None
    };
    let label = if flags & FLAG_LABEL != 0 {
        Some(binary_column("label", cur.take(n)?)?)
    } else {
        None
    };
    Ok(RepresentationSet::new(z, t, y, label)?)
}

pub fn write_csv(set: &RepresentationSet) -> Result<Vec<u8>, LoadError> {
    let (t, y) = set.observed()?;
    let csv_err = |e: csv::Error| LoadError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..set.d()).map(|j| format!("z{j}")).collect();
    header.push("t".into());
    header.push("y".into());
    if set.label().is_some() {
        header.push("label".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..set.n() {
        let mut rec: Vec<String> = (0..set.d())
            .map(|j| (set.z()[(i, j)] as f32).to_string())
            .collect();
        rec.push(t[i].to_string());
        rec.push(y[i].to_string());
        if let Some(label) = set.label() {
            rec.push(label[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| LoadError::Csv(e.to_string()))
}

fn parse_binary(field: &'static str, row: usize, raw: &str) -> Result<u8, LoadError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(LoadError::NotBinary {
            field,
            row,
            value: other.to_string(),
        }),
    }
}

fn parse_real(field: &'static str, row: usize, raw: &str) -> Result<f64, LoadError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| LoadError::Csv(format!("row {row}: cannot parse {field} value {raw:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LoadError::NonFinite { field, row })
    }
}

fn read_csv(bytes: &[u8]) -> Result<RepresentationSet, LoadError> {
    let csv_err = |e: csv::Error| LoadError::Csv(e.to_string());
    let mut r = csv::Reader::from_reader(bytes);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let has_label = header.last().map(String::as_str) == Some("label");
    let n_tail = if has_label { 3 } else { 2 };
    if header.len() < n_tail + 1 {
        return Err(LoadError::Csv("header needs z0..z{d-1},t,y".into()));
    }
    let d = header.len() - n_tail;
    for (j, h) in header[..d].iter().enumerate() {
        if *h != format!("z{j}") {
            return Err(LoadError::Csv(format!("column {j} is {h:?}, expected \"z{j}\"")));
        }
    }
    if header[d] != "t" || header[d + 1] != "y" {
        return Err(LoadError::Csv("expected columns t,y after the features".into()));
    }

    let mut zs = Vec::new();
    let (mut t, mut y, mut label) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(LoadError::Csv(format!(
                "row {row} has {} fields, expected {}",
                rec.len(),
                header.len()
            )));
        }
        for j in 0..d {
            // features carry f32 precision in every file format
            zs.push(parse_real("z", row, &rec[j])? as f32 as f64);
        }
        t.push(parse_binary("t", row, &rec[d])?);
        y.push(parse_real("y", row, &rec[d + 1])?);
        if has_label {
            label.push(parse_binary("label", row, &rec[d + 2])?);
        }
    }
    let n = t.len();
    let z = DMatrix::from_row_slice(n, d, &zs);
    Ok(RepresentationSet::new(
        z,
        Some(t),
        Some(y),
        has_label.then_some(label),
    )?)
}
