//! `fmx`: a minimal binary matrix container used for all persisted matrices.
//!
//! Layout: one JSON header line
//! `{"rows":R,"cols":C,"order":"col-major","dtype":"f64"}` terminated by a
//! newline, followed by exactly `R*C` little-endian IEEE-754 f64 values in
//! column-major order. Writing is byte-deterministic for a given matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::Deserialize;

use crate::error::{Result, UnmixError};

#[derive(Deserialize)]
struct FmxHeader {
    rows: usize,
    cols: usize,
    order: String,
    dtype: String,
}

/// Writes a matrix to `path` in fmx format.
pub fn write_fmx(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| UnmixError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let (rows, cols) = m.dim();
    let header = format!("{{\"rows\":{rows},\"cols\":{cols},\"order\":\"col-major\",\"dtype\":\"f64\"}}\n");
    w.write_all(header.as_bytes())
        .map_err(|e| UnmixError::io(path, e))?;
    let mut buf = Vec::with_capacity(rows * cols * 8);
    for c in 0..cols {
        for r in 0..rows {
            buf.extend_from_slice(&m[[r, c]].to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| UnmixError::io(path, e))?;
    w.flush().map_err(|e| UnmixError::io(path, e))?;
    Ok(())
}

/// Reads a matrix from an fmx file, verifying the header and payload size.
pub fn read_fmx(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| UnmixError::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = reader.read(&mut byte).map_err(|e| UnmixError::io(path, e))?;
        if n == 0 {
            return Err(UnmixError::Config(format!(
                "{}: missing newline-terminated fmx header",
                path.display()
            )));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
        if header_bytes.len() > 4096 {
            return Err(UnmixError::Config(format!(
                "{}: fmx header exceeds 4096 bytes",
                path.display()
            )));
        }
    }
    let header: FmxHeader = serde_json::from_slice(&header_bytes).map_err(|e| {
        UnmixError::Config(format!("{}: bad fmx header: {e}", path.display()))
    })?;
    if header.order != "col-major" {
        return Err(UnmixError::Config(format!(
            "{}: unsupported fmx order {:?}",
            path.display(),
            header.order
        )));
    }
    if header.dtype != "f64" {
        return Err(UnmixError::Config(format!(
            "{}: unsupported fmx dtype {:?}",
            path.display(),
            header.dtype
        )));
    }
    let count = header.rows * header.cols;
    let mut payload = vec![0u8; count * 8];
    reader
        .read_exact(&mut payload)
        .map_err(|e| UnmixError::io(path, e))?;
    let mut trailing = [0u8; 1];
    if reader.read(&mut trailing).map_err(|e| UnmixError::io(path, e))? != 0 {
        return Err(UnmixError::Config(format!(
            "{}: trailing bytes after fmx payload",
            path.display()
        )));
    }
    let mut out = Array2::<f64>::zeros((header.rows, header.cols));
    let mut offset = 0;
    for c in 0..header.cols {
        for r in 0..header.rows {
            let chunk: [u8; 8] = payload[offset..offset + 8].try_into().expect("8-byte chunk");
            out[[r, c]] = f64::from_le_bytes(chunk);
            offset += 8;
        }
    }
    Ok(out)
}
