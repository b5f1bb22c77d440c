//! Big-endian IDX files as distributed for MNIST.
//!
//! ```text
//! images: magic 0x00000803 | count | rows | cols | count*rows*cols u8
//! labels: magic 0x00000801 | count | count u8
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    let word = bytes.get(at..at + 4).ok_or(Error::Truncated {
        expected: at + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(word.try_into().expect("4 bytes")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::Magic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Decodes an image file into `[count, rows*cols]` features scaled by 1/255.
/// `path` only labels errors.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Tensor> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let expected = 16 + count * dim;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let pixels = bytes[16..expected]
        .iter()
        .map(|&b| f64::from(b) / 255.0)
        .collect();
    Tensor::from_vec(&[count, dim], pixels)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].iter().map(|&b| usize::from(b)).collect())
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let image_bytes = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
    let label_bytes = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;
    let features = parse_idx_images(&image_bytes, ip)?;
    let labels = parse_idx_labels(&label_bytes, lp)?;
    if features.rows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            ip.display(),
            features.rows(),
            lp.display(),
            labels.len()
        )));
    }
    let classes = labels.iter().copied().max().map_or(1, |m| m + 1);
    Dataset::new(features, labels, classes)
}

/// Encodes features as an image file, quantising each value to `round(255·v)`.
pub fn encode_idx_images(features: &Tensor, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols != features.cols() {
        return Err(Error::Input(format!(
            "{rows}x{cols} images cannot hold {} features",
            features.cols()
        )));
    }
    let mut out = Vec::with_capacity(16 + features.len());
    for word in [IMAGE_MAGIC, features.rows() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend(
        features
            .data()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let byte = u8::try_from(l).map_err(|_| Error::Input(format!("label {l} exceeds a byte")))?;
        out.push(byte);
    }
    Ok(out)
}
