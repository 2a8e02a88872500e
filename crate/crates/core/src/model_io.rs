//! Binary model files.
//!
//! ```text
//! "WFC1"                  4 bytes
//! version                 u16 LE (= 1)
//! unit count              u32 LE
//! vector dimension        u32 LE (= 784)
//! series truncation       u32 LE (0 = all terms)
//! per unit: label u8, then 784 x f32 LE
//! CRC32 (IEEE) of every preceding byte, u32 LE
//! ```
//!
//! Unit weights are held on the `f32` grid in memory, so a write/read cycle
//! reproduces the model exactly.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::classifier::{Model, ModelError};
use crate::dataset::PIXELS;
use crate::perception::SeriesConfig;

pub const MAGIC: &[u8; 4] = b"WFC1";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;
const UNIT_LEN: usize = 1 + 4 * PIXELS;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    VersionMismatch(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("model file truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("model vector dimension {0}, expected 784")]
    DimensionMismatch(u32),
    #[error("unit {index}: {source}")]
    BadUnit {
        index: usize,
        #[source]
        source: ModelError,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn serialize_model(model: &Model) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + model.len() * UNIT_LEN + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.len() as u32).to_le_bytes());
    out.extend_from_slice(&(PIXELS as u32).to_le_bytes());
    out.extend_from_slice(&model.series().as_u32().to_le_bytes());
    for unit in model.units() {
        out.push(unit.label());
        for &w in unit.v() {
            out.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parses a model file. The capacity of the returned model equals its unit
/// count.
pub fn deserialize_model(bytes: &[u8]) -> Result<Model, ModelFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < HEADER_LEN + 4 {
        return Err(ModelFileError::Truncated {
            expected: HEADER_LEN + 4,
            actual: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(ModelFileError::VersionMismatch(version));
    }
    let count = u32_at(bytes, 6) as usize;
    let dim = u32_at(bytes, 10);
    let truncation = u32_at(bytes, 14);
    if dim as usize != PIXELS {
        return Err(ModelFileError::DimensionMismatch(dim));
    }
    let expected = HEADER_LEN + count * UNIT_LEN + 4;
    if bytes.len() != expected {
        return Err(ModelFileError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let body = &bytes[..expected - 4];
    let stored = u32_at(bytes, expected - 4);
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::ChecksumMismatch { stored, computed });
    }
    let mut model = Model::new(count, SeriesConfig::truncated(truncation as usize));
    let mut v = vec![0.0f64; PIXELS];
    for (index, rec) in body[HEADER_LEN..].chunks_exact(UNIT_LEN).enumerate() {
        for (w, b) in v.iter_mut().zip(rec[1..].chunks_exact(4)) {
            *w = f32::from_le_bytes(b.try_into().unwrap()) as f64;
        }
        model
            .push(rec[0], &v)
            .map_err(|source| ModelFileError::BadUnit { index, source })?;
    }
    Ok(model)
}

/// Writes to a sibling temp file and renames it over `path`, so readers never
/// observe a partial model.
pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelFileError> {
    let io_err = |source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(&serialize_model(model)).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ModelFileError> {
    let bytes = std::fs::read(path).map_err(|source| ModelFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    deserialize_model(&bytes)
}
