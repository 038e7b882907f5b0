// SPDX-License-Identifier: Apache-2.0

//! File formats.
//!
//! * GMSK grids: `b"GMSK"`, `u32` LE dimension count, one `u32` LE extent per
//!   axis, then `N` little-endian `f64` values in vectorization order.
//! * Sparse operators: a text header `rows cols nnz` followed by one
//!   `row col value` line (0-based) per entry.
//! * PGM: binary 8-bit grayscale dumps of 2D slices, for eyeballing only.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{ModelGrid, ModelVector};
use crate::linops::SparseMatrix;

pub const GMSK_MAGIC: &[u8; 4] = b"GMSK";

pub fn encode_gmsk(m: &ModelVector) -> Vec<u8> {
    let dims = m.grid().dims();
    let mut buf = Vec::with_capacity(8 + 4 * dims.len() + 8 * m.len());
    buf.extend_from_slice(GMSK_MAGIC);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_gmsk(bytes: &[u8], path: &Path) -> Result<ModelVector> {
    let fail = |msg: String| Error::format(path, msg);
    if bytes.len() < 8 || &bytes[..4] != GMSK_MAGIC {
        return Err(fail("missing GMSK magic".into()));
    }
    let u32_at = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap()) as usize;
    let ndims = u32_at(4);
    if !(2..=3).contains(&ndims) {
        return Err(fail(format!("unsupported dimension count {ndims}")));
    }
    let header = 8 + 4 * ndims;
    if bytes.len() < header {
        return Err(fail("truncated header".into()));
    }
    let dims: Vec<usize> = (0..ndims).map(|a| u32_at(8 + 4 * a)).collect();
    let grid = ModelGrid::new(&dims).map_err(|e| fail(e.to_string()))?;
    let n = grid.len();
    if bytes.len() != header + 8 * n {
        return Err(fail(format!(
            "expected {} bytes of values for dims {dims:?}, found {}",
            8 * n,
            bytes.len() - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelVector::new(grid, data).map_err(|e| fail(e.to_string()))
}

pub fn write_gmsk(path: impl AsRef<Path>, m: &ModelVector) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_gmsk(m)).map_err(|e| Error::io(path, e))
}

pub fn read_gmsk(path: impl AsRef<Path>) -> Result<ModelVector> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gmsk(&bytes, path)
}

pub fn encode_sparse(a: &SparseMatrix) -> String {
    let mut s = format!("{} {} {}\n", a.rows(), a.cols(), a.nnz());
    for (r, c, v) in a.triplets() {
        // `{:?}` prints the shortest string that parses back to the same f64
        s.push_str(&format!("{r} {c} {v:?}\n"));
    }
    s
}

pub fn decode_sparse(text: &str, path: &Path) -> Result<SparseMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::format(path, "empty operator file"))?;
    let head: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, format!("line 1: bad header: {e}")))?;
    let [rows, cols, nnz] = head[..] else {
        return Err(Error::format(path, "line 1: header must be 'rows cols nnz'"));
    };
    let mut t = Vec::with_capacity(nnz);
    for (ln, line) in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: &str| Error::format(path, format!("line {ln}: {m}"));
        if parts.len() != 3 {
            return Err(bad("expected 'row col value'"));
        }
        let r: usize = parts[0].parse().map_err(|_| bad("bad row index"))?;
        let c: usize = parts[1].parse().map_err(|_| bad("bad column index"))?;
        let v: f64 = parts[2].parse().map_err(|_| bad("bad value"))?;
        t.push((r, c, v));
    }
    if t.len() != nnz {
        return Err(Error::format(
            path,
            format!("header announces {nnz} entries, found {}", t.len()),
        ));
    }
    SparseMatrix::from_triplets(rows, cols, &t).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_sparse(path: impl AsRef<Path>, a: &SparseMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_sparse(a)).map_err(|e| Error::io(path, e))
}

pub fn read_sparse(path: impl AsRef<Path>) -> Result<SparseMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    decode_sparse(&text, path)
}

/// Binary PGM of one `rows × cols` column-major slice, linearly scaled from
/// `[lo, hi]` to `[0, 255]`. Rows of the image are the first grid axis.
pub fn encode_pgm(slice: &[f64], rows: usize, cols: usize, lo: f64, hi: f64) -> Vec<u8> {
    assert_eq!(slice.len(), rows * cols);
    let mut buf = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    let span = if hi > lo { hi - lo } else { 1.0 };
    for r in 0..rows {
        for c in 0..cols {
            let t = ((slice[r + c * rows] - lo) / span).clamp(0.0, 1.0);
            buf.push((t * 255.0).round() as u8);
        }
    }
    buf
}

/// Write one PGM per slice along the last axis (one image for a 2D grid).
/// Returns the written paths.
pub fn write_pgm_slices(dir: impl AsRef<Path>, stem: &str, m: &ModelVector) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let dims = m.grid().dims();
    if dims.len() < 2 {
        return Err(Error::InvalidParameter(format!("{stem}: PGM output needs at least two grid axes")));
    }
    let (rows, cols) = (dims[0], dims[1]);
    let (lo, hi) = m
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let per = rows * cols;
    let mut paths = Vec::new();
    for (k, slice) in m.data().chunks(per).enumerate() {
        let path = if m.len() == per {
            dir.join(format!("{stem}.pgm"))
        } else {
            dir.join(format!("{stem}_{k:04}.pgm"))
        };
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&encode_pgm(slice, rows, cols, lo, hi))
            .map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
