//! Matrix and image file formats.
//!
//! CSV matrices hold one grid row per line, comma separated, with values in
//! Rust's shortest round-trip float notation so that a write/read cycle is
//! bit exact. PGM previews are 8-bit binary (`P5`), row-major, scaled so the
//! maximum maps to 255.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn matrix_to_csv(m: &Array2<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 12);
    for row in m.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(m)).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        message,
    })
}

pub fn parse_matrix_csv(text: &str) -> std::result::Result<Array2<f64>, String> {
    let mut values = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                format!(
                    "line {}, column {}: bad number {cell:?}",
                    lineno + 1,
                    col + 1
                )
            })?;
            values.push(v);
            count += 1;
        }
        match ncols {
            None => ncols = Some(count),
            Some(c) if c != count => {
                return Err(format!(
                    "line {}: expected {c} columns, found {count}",
                    lineno + 1
                ))
            }
            _ => {}
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| "empty matrix".to_string())?;
    Array2::from_shape_vec((nrows, ncols), values).map_err(|e| e.to_string())
}

/// Writes the real and imaginary parts of a complex matrix to
/// `<stem>_re.csv` and `<stem>_im.csv`.
pub fn write_complex_csv(dir: &Path, stem: &str, m: &Array2<Complex64>) -> Result<()> {
    write_matrix_csv(&dir.join(format!("{stem}_re.csv")), &m.mapv(|v| v.re))?;
    write_matrix_csv(&dir.join(format!("{stem}_im.csv")), &m.mapv(|v| v.im))
}

pub fn pgm_bytes(m: &Array2<f64>) -> Vec<u8> {
    let (h, w) = m.dim();
    let max = m.iter().cloned().fold(0.0_f64, f64::max);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h);
    for &v in m.iter() {
        let level = if max > 0.0 && v > 0.0 {
            (v / max * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        out.push(level);
    }
    out
}

pub fn write_pgm(path: &Path, m: &Array2<f64>) -> Result<()> {
    fs::write(path, pgm_bytes(m)).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a JSON document; syntax and schema errors report line and column.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
