//! Dataset and matrix files.
//!
//! The binary dataset format is a pair of files: a raw payload of little-endian
//! `f64` values, channel-major (all samples of channel 0, then channel 1, ...),
//! and a JSON sidecar header at `<payload>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataFormat {
    Binary,
    /// First row holds channel labels, then one row per sample and one column per channel.
    Csv { srate: f64 },
}

impl DataFormat {
    /// Picks CSV for `.csv` paths and binary otherwise.
    pub fn from_path(path: &Path, srate: f64) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DataFormat::Csv { srate },
            _ => DataFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub id: String,
    pub n_channels: usize,
    pub n_samples: usize,
    pub srate: f64,
    pub labels: Vec<String>,
}

/// Sidecar header path for a binary payload: `<payload>.json`.
pub fn header_path(payload: &Path) -> PathBuf {
    let mut s = payload.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn save_dataset(ds: &Dataset, path: &Path, format: DataFormat) -> Result<()> {
    match format {
        DataFormat::Binary => {
            let header = BinaryHeader {
                id: ds.id().to_string(),
                n_channels: ds.n_channels(),
                n_samples: ds.n_samples(),
                srate: ds.srate(),
                labels: ds.labels().to_vec(),
            };
            let mut payload = Vec::with_capacity(ds.n_channels() * ds.n_samples() * 8);
            for row in ds.data().row_iter() {
                for v in row.iter() {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
            write_atomic(path, &payload)?;
            let hp = header_path(path);
            write_atomic(&hp, serde_json::to_string_pretty(&header)?.as_bytes())
        }
        DataFormat::Csv { .. } => {
            let mut out = ds.labels().join(",");
            out.push('\n');
            for col in ds.data().column_iter() {
                let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
                out.push_str(&line.join(","));
                out.push('\n');
            }
            write_atomic(path, out.as_bytes())
        }
    }
}

pub fn load_dataset(path: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Binary => load_binary(path),
        DataFormat::Csv { srate } => load_csv(path, srate),
    }
}

fn load_binary(path: &Path) -> Result<Dataset> {
    let hp = header_path(path);
    let header_text = fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let header: BinaryHeader = serde_json::from_str(&header_text).map_err(|e| Error::Parse {
        path: hp.clone(),
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    if header.labels.len() != header.n_channels {
        return Err(Error::Parse {
            path: hp,
            location: "field labels".into(),
            message: format!(
                "{} labels for {} channels",
                header.labels.len(),
                header.n_channels
            ),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = header.n_channels * header.n_samples * 8;
    if bytes.len() != expected {
        let row_bytes = header.n_samples * 8;
        let found_rows = if row_bytes > 0 { bytes.len() / row_bytes } else { 0 };
        return Err(Error::shape(
            format!(
                "{} channels x {} samples ({expected} bytes) as declared in {}",
                header.n_channels,
                header.n_samples,
                hp.display()
            ),
            format!("{} bytes ({found_rows} full channel rows)", bytes.len()),
        ));
    }
    let mut data = DMatrix::zeros(header.n_channels, header.n_samples);
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                location: format!("byte offset {}", k * 8),
                message: format!("non-finite value {v}"),
            });
        }
        data[(k / header.n_samples, k % header.n_samples)] = v;
    }
    Dataset::new(header.id, data, header.srate, header.labels)
}

fn load_csv(path: &Path, srate: f64) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        location: "line 1".into(),
        message: "empty file".into(),
    })?;
    let labels: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n = labels.len();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    for (idx, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", idx + 1),
                message: format!("expected {n} columns, found {}", cells.len()),
            });
        }
        for (c, cell) in cells.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}, column {}", idx + 1, c + 1),
                message: format!("invalid or non-finite value {:?}", cell.trim()),
            })?;
            columns[c].push(v);
        }
    }
    let n_samples = columns.first().map_or(0, Vec::len);
    let data = DMatrix::from_fn(n, n_samples, |i, t| columns[i][t]);
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    Dataset::new(id, data, srate, labels)
}

fn parse_cell(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Writes a matrix as headerless CSV, one matrix row per line.
///
/// Values use Rust's shortest round-trip formatting, so reading back is bit-exact.
pub fn write_matrix_csv(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (c, cell) in line.split(',').enumerate() {
            row.push(parse_cell(cell).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}, column {}", idx + 1, c + 1),
                message: format!("invalid or non-finite value {:?}", cell.trim()),
            })?);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    location: format!("line {}", idx + 1),
                    message: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Writes a matrix as raw little-endian doubles, row-major, with no header.
pub fn write_matrix_binary(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut payload = Vec::with_capacity(m.len() * 8);
    for row in m.row_iter() {
        for v in row.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    write_atomic(path, &payload)
}

/// Reads a square `n x n` row-major binary matrix.
pub fn read_matrix_binary(path: &Path, n: usize) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != n * n * 8 {
        return Err(Error::shape(
            format!("{n}x{n} matrix ({} bytes)", n * n * 8),
            format!("{} bytes", bytes.len()),
        ));
    }
    let mut m = DMatrix::zeros(n, n);
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunk of 8"));
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                location: format!("byte offset {}", k * 8),
                message: format!("non-finite value {v}"),
            });
        }
        m[(k / n, k % n)] = v;
    }
    Ok(m)
}

/// Writes through a temporary sibling file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
