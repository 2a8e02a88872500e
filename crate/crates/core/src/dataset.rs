//! IDX container parsing and projection of images onto the unit sphere.
//!
//! ```text
//! images: magic 0x00000803 | count | rows | cols | count*rows*cols u8
//! labels: magic 0x00000801 | count | count u8
//! ```
//! Header words are big-endian u32. Files starting with the gzip signature
//! (`1f 8b`) are decompressed transparently.

use std::borrow::Cow;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use flate2::read::GzDecoder;
use thiserror::Error;

use crate::vector;

pub const ROWS: usize = 28;
pub const COLS: usize = 28;
pub const PIXELS: usize = ROWS * COLS;
pub const NUM_CLASSES: usize = 10;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

const GZIP_SIGNATURE: [u8; 2] = [0x1f, 0x8b];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("bad magic word: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated file: header promises {expected} bytes, found {actual}")]
    TruncatedFile { expected: usize, actual: usize },
    #[error("unsupported image dimensions {rows}x{cols} (expected 28x28)")]
    DimensionMismatch { rows: u32, cols: u32 },
    #[error("label {label} at index {index} is outside 0..=9")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("all-zero image cannot be projected onto the unit sphere")]
    ZeroVector,
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("vector has length {0}, expected 784")]
    BadLength(usize),
    #[error("vector is not unit-norm (norm {0})")]
    NotUnitNorm(f64),
    #[error("gzip stream: {0}")]
    Gzip(std::io::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// One 28x28 grayscale digit, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    pixels: Box<[u8; PIXELS]>,
}

impl Image {
    pub fn new(pixels: [u8; PIXELS]) -> Self {
        Image { pixels: Box::new(pixels) }
    }

    pub fn from_slice(pixels: &[u8]) -> Result<Self> {
        let arr: [u8; PIXELS] = pixels
            .try_into()
            .map_err(|_| DatasetError::BadLength(pixels.len()))?;
        Ok(Self::new(arr))
    }

    pub fn pixels(&self) -> &[u8; PIXELS] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * COLS + col]
    }
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let lit = self.pixels.iter().filter(|&&p| p > 0).count();
        write!(f, "Image({lit} lit pixels)")
    }
}

/// A labeled unit-norm feature vector with non-negative components.
///
/// Components are held on the `f32` grid (see [`vector::snap_to_f32`]), which
/// lets a sample be copied into a model verbatim and written to disk without
/// loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    label: u8,
}

impl Sample {
    /// Builds a sample from an arbitrary 784-vector: it is normalized, rounded
    /// to single precision, and checked.
    pub fn new(mut x: Vec<f64>, label: u8) -> Result<Self> {
        if x.len() != PIXELS {
            return Err(DatasetError::BadLength(x.len()));
        }
        if label as usize >= NUM_CLASSES {
            return Err(DatasetError::LabelOutOfRange { index: 0, label });
        }
        if vector::normalize_in_place(&mut x) == 0.0 {
            return Err(DatasetError::ZeroVector);
        }
        vector::snap_to_f32(&mut x);
        let n = vector::norm(&x);
        if (n - 1.0).abs() > 1e-6 {
            return Err(DatasetError::NotUnitNorm(n));
        }
        Ok(Sample { x, label })
    }

    pub fn from_image(image: &Image, label: u8) -> Result<Self> {
        Sample::new(normalize(image)?, label)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}

/// Returns the decompressed payload if `bytes` is gzip, otherwise borrows it.
pub fn decompress(bytes: &[u8]) -> Result<Cow<'_, [u8]>> {
    if bytes.starts_with(&GZIP_SIGNATURE) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(DatasetError::Gzip)?;
        Ok(Cow::Owned(out))
    } else {
        Ok(Cow::Borrowed(bytes))
    }
}

fn read_header(cur: &mut Cursor<&[u8]>, words: usize, total: usize) -> Result<Vec<u32>> {
    let mut out = Vec::with_capacity(words);
    for _ in 0..words {
        out.push(
            cur.read_u32::<BigEndian>()
                .map_err(|_| DatasetError::TruncatedFile {
                    expected: words * 4,
                    actual: total,
                })?,
        );
    }
    Ok(out)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let data = decompress(bytes)?;
    let mut cur = Cursor::new(&data[..]);
    let magic = read_header(&mut cur, 1, data.len())?[0];
    if magic != IMAGE_MAGIC {
        return Err(DatasetError::BadMagic {
            expected: IMAGE_MAGIC,
            found: magic,
        });
    }
    let header = read_header(&mut cur, 3, data.len())?;
    let (count, rows, cols) = (header[0] as usize, header[1], header[2]);
    if rows as usize != ROWS || cols as usize != COLS {
        return Err(DatasetError::DimensionMismatch { rows, cols });
    }
    let payload = &data[16..];
    let expected = count * PIXELS;
    if payload.len() < expected {
        return Err(DatasetError::TruncatedFile {
            expected: 16 + expected,
            actual: data.len(),
        });
    }
    payload[..expected]
        .chunks_exact(PIXELS)
        .map(Image::from_slice)
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let data = decompress(bytes)?;
    let mut cur = Cursor::new(&data[..]);
    let magic = read_header(&mut cur, 1, data.len())?[0];
    if magic != LABEL_MAGIC {
        return Err(DatasetError::BadMagic {
            expected: LABEL_MAGIC,
            found: magic,
        });
    }
    let count = read_header(&mut cur, 1, data.len())?[0] as usize;
    let payload = &data[8..];
    if payload.len() < count {
        return Err(DatasetError::TruncatedFile {
            expected: 8 + count,
            actual: data.len(),
        });
    }
    let labels = payload[..count].to_vec();
    if let Some((index, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= NUM_CLASSES)
    {
        return Err(DatasetError::LabelOutOfRange { index, label });
    }
    Ok(labels)
}

/// Flattens the image row-major and divides by its L2 norm.
pub fn normalize(image: &Image) -> Result<Vec<f64>> {
    let raw: Vec<f64> = image.pixels.iter().map(|&p| p as f64).collect();
    normalize_intensities(&raw)
}

/// Same as [`normalize`] for real-valued intensities.
pub fn normalize_intensities(intensities: &[f64]) -> Result<Vec<f64>> {
    let mut x = intensities.to_vec();
    if vector::normalize_in_place(&mut x) == 0.0 {
        return Err(DatasetError::ZeroVector);
    }
    Ok(x)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_images(path: &Path) -> Result<Vec<Image>> {
    parse_idx_images(&read_file(path)?)
}

pub fn load_labels(path: &Path) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path)?)
}

/// Zips parsed images and labels into normalized samples.
pub fn samples_from_parts(images: &[Image], labels: &[u8]) -> Result<Vec<Sample>> {
    if images.len() != labels.len() {
        return Err(DatasetError::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    images
        .iter()
        .zip(labels)
        .map(|(img, &l)| Sample::from_image(img, l))
        .collect()
}

pub fn load_samples(images: &Path, labels: &Path) -> Result<Vec<Sample>> {
    samples_from_parts(&load_images(images)?, &load_labels(labels)?)
}

/// Encodes images in the IDX layout. Used for fixtures and tests.
pub fn encode_idx_images(images: &[Image]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
    for word in [IMAGE_MAGIC, images.len() as u32, ROWS as u32, COLS as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(&img.pixels[..]);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
