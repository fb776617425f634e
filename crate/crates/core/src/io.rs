//! Matrix and vector exchange formats.
//!
//! Binary: two little-endian `u32` dimensions (rows, cols) followed by
//! `rows·cols` little-endian `f64` values in column-major order. Vectors are
//! stored as single-column matrices.
//!
//! CSV: one line per matrix row, comma separated decimal floats. A vector may
//! be written either as one column or as one row.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SblError};

const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// `.csv` / `.txt` are CSV, anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("txt") => {
                MatrixFormat::Csv
            }
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn encode_binary(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| SblError::input("too many rows"))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| SblError::input("too many columns"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(SblError::input(format!(
            "binary matrix needs an {HEADER_LEN}-byte header, got {} bytes",
            bytes.len()
        )));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| SblError::input("binary matrix dimensions overflow"))?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != expected {
        return Err(SblError::input(format!(
            "binary matrix header says {rows}x{cols} ({expected} bytes) but body has {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn encode_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let line: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn decode_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    SblError::input(format!("line {}: cannot parse '{}' as a number", ln + 1, f.trim()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(SblError::input(format!(
                    "line {}: expected {} columns, found {}",
                    ln + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(SblError::input("CSV matrix is empty"));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(nr, nc, rows.into_iter().flatten()))
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        SblError::Input(msg) => SblError::Input(format!("{}: {msg}", path.display())),
        SblError::Io(msg) => SblError::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let r = match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => fs::read_to_string(path)
            .map_err(SblError::from)
            .and_then(|t| decode_csv(&t)),
        MatrixFormat::Binary => fs::read(path)
            .map_err(SblError::from)
            .and_then(|b| decode_binary(&b)),
    };
    with_path(path, r)
}

/// Accepts an `n x 1` or `1 x n` matrix.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 {
        Ok(m.column(0).into_owned())
    } else if m.nrows() == 1 {
        Ok(m.row(0).transpose())
    } else {
        Err(SblError::input(format!(
            "{}: expected a vector, found a {}x{} matrix",
            path.display(),
            m.nrows(),
            m.ncols()
        )))
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let r = match MatrixFormat::from_path(path) {
        MatrixFormat::Csv => fs::write(path, encode_csv(m)).map_err(SblError::from),
        MatrixFormat::Binary => encode_binary(m).and_then(|b| fs::write(path, b).map_err(SblError::from)),
    };
    with_path(path, r)
}

/// Written as a single column.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_is_column_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let bytes = encode_binary(&m).unwrap();
        assert_eq!(&bytes[0..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 4.0);
        assert_eq!(decode_binary(&bytes).unwrap(), m);
    }

    #[test]
    fn binary_rejects_bad_lengths() {
        assert!(decode_binary(&[1, 0, 0]).is_err());
        let mut bytes = encode_binary(&DMatrix::<f64>::zeros(2, 2)).unwrap();
        bytes.pop();
        assert!(decode_binary(&bytes).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.1, -2.5e-3, 3.0, 1e300]);
        assert_eq!(decode_csv(&encode_csv(&m)).unwrap(), m);
        assert!(decode_csv("1,2\n3\n").is_err());
        assert!(decode_csv("1,x\n").is_err());
        assert!(decode_csv("\n").is_err());
    }

    #[test]
    fn files_and_vectors() {
        let dir = tempfile::tempdir().unwrap();
        let v = DVector::from_row_slice(&[1.0, 2.0, 3.0]);
        for name in ["v.bin", "v.csv"] {
            let path = dir.path().join(name);
            write_vector(&path, &v).unwrap();
            assert_eq!(read_vector(&path).unwrap(), v);
        }
        let row = dir.path().join("row.csv");
        fs::write(&row, "1,2,3\n").unwrap();
        assert_eq!(read_vector(&row).unwrap(), v);
        let err = read_vector(&dir.path().join("missing.bin")).unwrap_err();
        assert!(err.to_string().contains("missing.bin"));
    }
}
