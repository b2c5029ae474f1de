//! Reader and writer for the IDX binary tensor format used by MNIST.
//!
//! Layout: a 4-byte big-endian magic (`0x0000_08NN`, where `08` marks
//! unsigned bytes and `NN` is the number of dimensions), one big-endian u32
//! per dimension, then the payload in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::RawDataset;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ])
}

/// A decoded IDX file of unsigned bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

fn parse(path: &Path, bytes: &[u8], expected_magic: u32) -> Result<IdxTensor> {
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: 4,
            found: bytes.len() as u64,
        });
    }
    let magic = be_u32(bytes, 0);
    if magic != expected_magic {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected: expected_magic,
            found: magic,
        });
    }
    let ndim = (magic & 0xff) as usize;
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected: header as u64,
            found: bytes.len() as u64,
        });
    }
    let dims: Vec<usize> = (0..ndim)
        .map(|d| be_u32(bytes, 4 + 4 * d) as usize)
        .collect();
    let payload: u64 = dims.iter().map(|&d| d as u64).product();
    let expected = header as u64 + payload;
    if (bytes.len() as u64) < expected {
        return Err(Error::TruncatedFile {
            path: path.to_path_buf(),
            expected,
            found: bytes.len() as u64,
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[header..expected as usize].to_vec(),
    })
}

pub fn read_idx(path: &Path, expected_magic: u32) -> Result<IdxTensor> {
    let bytes = fs::read(path)?;
    parse(path, &bytes, expected_magic)
}

pub fn encode_idx(tensor: &IdxTensor) -> Vec<u8> {
    let magic = 0x0000_0800u32 | tensor.dims.len() as u32;
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + tensor.data.len());
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    out
}

pub fn write_idx(path: &Path, tensor: &IdxTensor) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode_idx(tensor))?;
    Ok(())
}

/// Load an image/label file pair. Pixels are scaled to `[0, 1]` by `/255`.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let images = read_idx(images_path, IMAGES_MAGIC)?;
    let labels = read_idx(labels_path, LABELS_MAGIC)?;
    let n_images = images.dims[0];
    let n_labels = labels.dims[0];
    if n_images != n_labels {
        return Err(Error::DimensionMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let width: usize = images.dims[1..].iter().product();
    let features = Array2::from_shape_vec(
        (n_images, width),
        images.data.iter().map(|&b| b as f64 / 255.0).collect(),
    )
    .expect("payload length checked against header");
    RawDataset::new(
        features,
        labels.data,
        format!("idx:{}", images_path.display()),
    )
}

/// Write a dataset back out as an IDX image/label pair (`rows x cols` images).
///
/// Feature values are mapped back to bytes with `round(v * 255)`.
pub fn save_idx(
    raw: &RawDataset,
    rows: usize,
    cols: usize,
    images_path: &Path,
    labels_path: &Path,
) -> Result<()> {
    let (n, d) = raw.features.dim();
    if rows * cols != d {
        return Err(Error::ShapeMismatch {
            expected: rows * cols,
            found: d,
        });
    }
    let data = raw
        .features
        .iter()
        .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    write_idx(
        images_path,
        &IdxTensor {
            dims: vec![n, rows, cols],
            data,
        },
    )?;
    write_idx(
        labels_path,
        &IdxTensor {
            dims: vec![n],
            data: raw.labels.clone(),
        },
    )
}
