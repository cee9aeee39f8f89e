//! Binary measure container.
//!
//! Little-endian layout: `"KBM1"`, version `u8`, dimension `u8`, reserved
//! `u16 = 0`, cells per axis `u32`, then per cell (row-major axis order) the
//! upper triangle of the matrix, row-major, as `f64`.

use std::path::Path;

use crate::error::{KbError, Result};
use crate::grid::GridSpec;
use crate::linalg::{sym_len, PsdMatrix, SymMatrix};
use crate::measure::MatrixMeasure;

pub const MAGIC: &[u8; 4] = b"KBM1";
pub const VERSION: u8 = 1;
const HEADER: usize = 12;

/// Decoded contents before the PSD check.
#[derive(Clone, Debug, PartialEq)]
pub struct RawMeasure {
    pub grid: GridSpec,
    pub values: Vec<SymMatrix>,
}

impl RawMeasure {
    /// First cell that is not positive semidefinite, with its smallest eigenvalue.
    pub fn first_invalid_cell(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .find_map(|(i, v)| PsdMatrix::new(*v).err().map(|_| (i, v.min_eigenvalue())))
    }

    pub fn into_measure(self) -> Result<MatrixMeasure> {
        let values = self
            .values
            .into_iter()
            .enumerate()
            .map(|(i, v)| PsdMatrix::new(v).map_err(|e| e.at_cell(i)))
            .collect::<Result<Vec<_>>>()?;
        MatrixMeasure::new(self.grid, values)
    }
}

fn format_err(offset: usize, msg: impl Into<String>) -> KbError {
    KbError::Format {
        offset,
        msg: msg.into(),
    }
}

pub fn encode_measure(g: &MatrixMeasure) -> Result<Vec<u8>> {
    let grid = g.grid();
    if grid.is_point() {
        return Err(KbError::Input(
            "the point grid has no file representation".into(),
        ));
    }
    let upper = g.to_upper_vec();
    let mut out = Vec::with_capacity(HEADER + 8 * upper.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(grid.dim() as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    let n = u32::try_from(grid.n()).map_err(|_| KbError::Input("grid too large".into()))?;
    out.extend_from_slice(&n.to_le_bytes());
    for v in upper {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<RawMeasure> {
    if bytes.len() < HEADER {
        return Err(format_err(
            bytes.len(),
            format!("truncated header ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(format_err(4, format!("unsupported version {}", bytes[4])));
    }
    let d = bytes[5] as usize;
    if !(1..=3).contains(&d) {
        return Err(format_err(5, format!("dimension {d} not in 1..=3")));
    }
    if bytes[6..8] != [0, 0] {
        return Err(format_err(6, "reserved field must be zero"));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if n < 2 {
        return Err(KbError::Input(format!(
            "cells per axis must be >= 2, got {n}"
        )));
    }
    let grid = GridSpec::new(d, n)?;
    let s = sym_len(d);
    let expected = grid
        .cells()
        .checked_mul(s * 8)
        .and_then(|p| p.checked_add(HEADER))
        .ok_or_else(|| format_err(8, "grid size overflows"))?;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated payload, expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(expected, "trailing bytes after payload"));
    }
    let mut values = Vec::with_capacity(grid.cells());
    let mut upper = vec![0.0; s];
    for c in 0..grid.cells() {
        for (k, u) in upper.iter_mut().enumerate() {
            let off = HEADER + 8 * (c * s + k);
            *u = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            if !u.is_finite() {
                return Err(format_err(off, format!("non-finite value in cell {c}")));
            }
        }
        values.push(SymMatrix::from_upper(d, &upper));
    }
    Ok(RawMeasure { grid, values })
}

pub fn decode_measure(bytes: &[u8]) -> Result<MatrixMeasure> {
    decode_raw(bytes)?.into_measure()
}

pub fn save_measure(g: &MatrixMeasure, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_measure(g)?)?;
    Ok(())
}

pub fn load_raw(path: impl AsRef<Path>) -> Result<RawMeasure> {
    decode_raw(&std::fs::read(path)?)
}

pub fn load_measure(path: impl AsRef<Path>) -> Result<MatrixMeasure> {
    decode_measure(&std::fs::read(path)?)
}
