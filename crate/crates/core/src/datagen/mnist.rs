//! IDX reader for the MNIST image and label files.
//!
//! Images: magic `0x00000803`, then big-endian `u32` count, rows, cols, then
//! `count·rows·cols` unsigned bytes. Labels: magic `0x00000801`, count, then
//! `count` bytes.

use std::path::Path;

use super::Frame;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct MnistDataset {
    pub rows: usize,
    pub cols: usize,
    /// One image per row, pixels scaled to `[0, 1]`.
    pub images: Matrix,
    pub labels: Vec<u8>,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn frame(&self, i: usize) -> Frame {
        Frame::new(self.rows, self.cols, self.images.row(i).to_vec()).expect("row size")
    }

    /// Items `range`, preserving order.
    pub fn slice(&self, range: std::ops::Range<usize>) -> MnistDataset {
        let idx: Vec<usize> = range.clone().collect();
        MnistDataset {
            rows: self.rows,
            cols: self.cols,
            images: self.images.select_rows(&idx),
            labels: self.labels[range].to_vec(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::Data(format!(
                "{what}: truncated header, expected at least {} bytes, got {}",
                at + 4,
                bytes.len()
            ))
        })
}

/// Returns `(rows, cols, images)` from an IDX image file's bytes.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Matrix)> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "images: bad magic number {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "images: expected {expected} bytes for {count} images of {rows}x{cols}, got {}",
            bytes.len()
        )));
    }
    let pixels = bytes[16..].iter().map(|&b| b as f64 / 255.0).collect();
    Ok((rows, cols, Matrix::from_vec(count, rows * cols, pixels)?))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data(format!(
            "labels: bad magic number {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "labels: expected {expected} bytes for {count} labels, got {}",
            bytes.len()
        )));
    }
    let labels = bytes[8..].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Data(format!("labels: value {bad} outside 0..=9")));
    }
    Ok(labels)
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<MnistDataset> {
    let read =
        |p: &Path| std::fs::read(p).map_err(|e| Error::Data(format!("{}: {e}", p.display())));
    let (rows, cols, images) = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    if images.rows() != labels.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            images.rows(),
            labels.len()
        )));
    }
    Ok(MnistDataset {
        rows,
        cols,
        images,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGES_MAGIC, count, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    pub(crate) fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [LABELS_MAGIC, labels.len() as u32] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(labels);
        b
    }

    #[test]
    fn parses_and_scales() {
        let bytes = idx_images(2, 2, 2, &[0, 255, 51, 102, 1, 2, 3, 4]);
        let (r, c, m) = parse_idx_images(&bytes).unwrap();
        assert_eq!((r, c, m.shape()), (2, 2, (2, 4)));
        assert_eq!(m.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(parse_idx_labels(&idx_labels(&[7, 3])).unwrap(), vec![7, 3]);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        let err = parse_idx_images(&bytes).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
        assert!(parse_idx_labels(&idx_images(1, 1, 1, &[0])).is_err());
    }

    #[test]
    fn truncated_names_byte_counts() {
        let bytes = idx_images(3, 2, 2, &[0; 10]);
        let err = parse_idx_images(&bytes).unwrap_err().to_string();
        assert!(
            err.contains("expected 28 bytes") && err.contains("got 26"),
            "{err}"
        );
        assert!(parse_idx_images(&bytes[..7]).is_err());
    }

    #[test]
    fn count_mismatch_between_files() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img");
        let lp = dir.path().join("lbl");
        std::fs::write(&ip, idx_images(2, 1, 1, &[0, 1])).unwrap();
        std::fs::write(&lp, idx_labels(&[1, 2, 3])).unwrap();
        let err = load_mnist(&ip, &lp).unwrap_err().to_string();
        assert!(err.contains("2 images but 3 labels"), "{err}");
    }

    #[test]
    fn label_range_checked() {
        assert!(parse_idx_labels(&idx_labels(&[3, 10])).is_err());
    }
}
