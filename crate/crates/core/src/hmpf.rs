//! The HMPF1 feature file.
//!
//! Layout (all little-endian): `b"HMPF"`, `u32` version (= 1), `u32` count,
//! `u32` dim, then `count * dim` IEEE-754 binary32 values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::FeatureVector;

pub const MAGIC: &[u8; 4] = b"HMPF";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// Decoded contents of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    pub vectors: Vec<FeatureVector>,
}

impl FeatureFile {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode(bytes: &[u8]) -> Result<FeatureFile> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header needs {HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = read_u32(bytes, 8) as usize;
    let dim = read_u32(bytes, 12) as usize;
    if dim == 0 {
        return Err(Error::Format("dim must be positive".into()));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format("count * dim overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::Format(format!(
            "truncated payload: expected {expected} bytes for {count}x{dim}, found {}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count}x{dim} payload",
            payload.len() - expected
        )));
    }

    let mut vectors = Vec::with_capacity(count);
    for (row, chunk) in payload.chunks_exact(dim * 4).enumerate() {
        let mut values = Vec::with_capacity(dim);
        for (col, raw) in chunk.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(raw.try_into().expect("4-byte slice"));
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite value {v} at row {row}, column {col}"
                )));
            }
            values.push(f64::from(v));
        }
        vectors.push(FeatureVector::new(values)?);
    }
    Ok(FeatureFile { dim, vectors })
}

/// Encodes rows of `dim` values. Values are narrowed to binary32.
pub fn encode<R: AsRef<[f32]>>(dim: usize, rows: &[R]) -> Result<Vec<u8>> {
    if dim == 0 {
        return Err(Error::invalid("feature file", "dim must be positive"));
    }
    let count = u32::try_from(rows.len())
        .map_err(|_| Error::invalid("feature file", "too many vectors"))?;
    let dim32 =
        u32::try_from(dim).map_err(|_| Error::invalid("feature file", "dim too large"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows.len() * dim * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != dim {
            return Err(Error::Mismatch(format!(
                "row {i} has {} values, expected {dim}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "feature file",
                format!("row {i} holds non-finite value {v}"),
            ));
        }
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_feature_file<R: AsRef<[f32]>>(
    path: impl AsRef<Path>,
    dim: usize,
    rows: &[R],
) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(dim, rows)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Narrows working-precision vectors for storage.
pub fn to_f32_rows(vectors: &[FeatureVector]) -> Vec<Vec<f32>> {
    vectors
        .iter()
        .map(|v| v.values().iter().map(|&x| x as f32).collect())
        .collect()
}
